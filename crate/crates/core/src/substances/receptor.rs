use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

static REGISTRY_SERIAL: AtomicU64 = AtomicU64::new(1);

/// Public half of a receptor. Placed on substances and resources.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lock {
    registry: u64,
    serial: u64,
}

/// Private half of a receptor. Only a [`ReceptorRegistry`] can create one.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key {
    registry: u64,
    serial: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    MatcherCell,
    FusionCell,
    ProberCell,
    RepairCell,
    LymphNode,
    Cnts,
    Environment,
    Antivirus,
    Firewall,
    PacketFilter,
    Ids,
    Resource,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Descriptor {
    pub entity: EntityType,
    pub status: String,
}

impl Descriptor {
    pub fn new(entity: EntityType, status: impl Into<String>) -> Self {
        Descriptor {
            entity,
            status: status.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receptor {
    pub lock: Lock,
    pub key: Key,
    pub descriptor: Descriptor,
}

/// Mints lock/key pairs. `matches` holds only for pairs minted together here.
#[derive(Debug)]
pub struct ReceptorRegistry {
    id: u64,
    next: u64,
    pairs: BTreeMap<u64, Descriptor>,
}

impl Default for ReceptorRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl ReceptorRegistry {
    pub fn new() -> Self {
        ReceptorRegistry {
            id: REGISTRY_SERIAL.fetch_add(1, Ordering::Relaxed),
            next: 0,
            pairs: BTreeMap::new(),
        }
    }

    pub fn mint(&mut self, descriptor: Descriptor) -> Receptor {
        let serial = self.next;
        self.next += 1;
        self.pairs.insert(serial, descriptor.clone());
        Receptor {
            lock: Lock {
                registry: self.id,
                serial,
            },
            key: Key {
                registry: self.id,
                serial,
            },
            descriptor,
        }
    }

    pub fn is_minted_lock(&self, lock: &Lock) -> bool {
        lock.registry == self.id && self.pairs.contains_key(&lock.serial)
    }

    pub fn is_minted_key(&self, key: &Key) -> bool {
        key.registry == self.id && self.pairs.contains_key(&key.serial)
    }

    pub fn matches(&self, lock: &Lock, key: &Key) -> bool {
        self.is_minted_lock(lock) && lock.registry == key.registry && lock.serial == key.serial
    }

    pub fn any_match<'a>(&self, locks: &[Lock], keys: impl IntoIterator<Item = &'a Key>) -> bool {
        let keys: Vec<&Key> = keys.into_iter().collect();
        locks
            .iter()
            .any(|l| keys.iter().any(|k| self.matches(l, k)))
    }

    pub fn descriptor(&self, lock: &Lock) -> Option<&Descriptor> {
        if lock.registry != self.id {
            return None;
        }
        self.pairs.get(&lock.serial)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}
