//! Artificial substances: hop- and time-bounded diffusion with receptor-locked delivery.

pub mod cnts;
pub mod lymph;
pub mod receptor;

pub use cnts::{CellTemplate, Cnts, CntsSnapshot, SituationView};
pub use lymph::{LymphNode, MessagePredicate, ResponseAction, ResponseRule};
pub use receptor::{Descriptor, EntityType, Key, Lock, Receptor, ReceptorRegistry};

use crate::adversary::IntrusionSignature;
use crate::cells::CellType;
use crate::error::{Result, SimError};
use crate::ids::{ComponentId, FamilyId, NodeId, SubstanceId};
use crate::kernel::{EventKind, Kernel, Topology};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    Intrusion,
    Silent,
    Stale,
    Eviction,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlertInfo {
    pub source: ComponentId,
    pub kind: AlertKind,
    /// Node the alert points at: packet source, or the event locus.
    pub implicated: NodeId,
    /// Node where the detection happened.
    pub locus: NodeId,
    pub sig: Option<IntrusionSignature>,
    pub raised_at: u64,
}

impl AlertInfo {
    pub fn family(&self) -> Option<FamilyId> {
        self.sig.map(|s| s.family)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Message {
    Warning {
        locus: NodeId,
    },
    Alert(AlertInfo),
    QuarantineRequest {
        node: NodeId,
        family: Option<FamilyId>,
        requested_by: ComponentId,
    },
    StatusReport {
        node: NodeId,
        detail: String,
    },
    AttractionBeacon {
        origin: NodeId,
        strength: f64,
        radius: u32,
    },
    DeathRecord {
        cell: ComponentId,
        cell_type: CellType,
        family: Option<FamilyId>,
    },
    CellRelease {
        family: FamilyId,
        count: u32,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    Warning,
    Alert,
    QuarantineRequest,
    StatusReport,
    AttractionBeacon,
    DeathRecord,
    CellRelease,
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Warning { .. } => MessageKind::Warning,
            Message::Alert(_) => MessageKind::Alert,
            Message::QuarantineRequest { .. } => MessageKind::QuarantineRequest,
            Message::StatusReport { .. } => MessageKind::StatusReport,
            Message::AttractionBeacon { .. } => MessageKind::AttractionBeacon,
            Message::DeathRecord { .. } => MessageKind::DeathRecord,
            Message::CellRelease { .. } => MessageKind::CellRelease,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArtificialSubstance {
    pub id: SubstanceId,
    pub message: Message,
    pub hops_to_go: u32,
    pub time_to_live: u64,
    pub locks: Vec<Lock>,
    pub origin: NodeId,
    pub emitted_at: u64,
}

impl ArtificialSubstance {
    pub fn expired_at(&self, tick: u64) -> bool {
        tick > self.emitted_at + self.time_to_live
    }

    /// Copy for the next hop.
    pub fn forwarded(&self) -> Self {
        ArtificialSubstance {
            hops_to_go: self.hops_to_go.saturating_sub(1),
            ..self.clone()
        }
    }

    /// Distance travelled from the origin so far, given the emitted radius.
    pub fn hops_travelled(&self, radius: u32) -> u32 {
        radius.saturating_sub(self.hops_to_go)
    }
}

/// Rejects substances with no locks or with locks the registry never minted.
pub fn validate_locks(s: &ArtificialSubstance, registry: &ReceptorRegistry) -> Result<()> {
    if s.locks.is_empty() || !s.locks.iter().all(|l| registry.is_minted_lock(l)) {
        return Err(SimError::UnmintedLock);
    }
    Ok(())
}

#[derive(Debug, PartialEq)]
pub enum Delivery<'a> {
    Message(&'a Message),
    Locked,
}

/// Payload is readable iff some held key matches any lock on the substance.
pub fn deliver<'a, 'k>(
    substance: &'a ArtificialSubstance,
    keys: impl IntoIterator<Item = &'k Key>,
    registry: &ReceptorRegistry,
) -> Delivery<'a> {
    if registry.any_match(&substance.locks, keys) {
        Delivery::Message(&substance.message)
    } else {
        Delivery::Locked
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubstanceAction {
    Emit,
    Forward,
    Deliver,
    Locked,
    Expire,
}

impl fmt::Display for SubstanceAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubstanceAction::Emit => "emit",
            SubstanceAction::Forward => "forward",
            SubstanceAction::Deliver => "deliver",
            SubstanceAction::Locked => "locked",
            SubstanceAction::Expire => "expire",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubstanceRecord {
    pub tick: u64,
    pub substance: SubstanceId,
    pub node: NodeId,
    pub action: SubstanceAction,
}

#[derive(Debug, PartialEq)]
pub enum Arrival {
    /// Already processed at this node.
    Duplicate,
    /// Past its time-to-live.
    Expired,
    /// Process locally, then schedule a copy to each listed node for the next tick.
    Process { forward_to: Vec<NodeId> },
}

/// Per-node forward sets plus per-(substance, node) duplicate suppression.
#[derive(Clone, Debug, Default)]
pub struct SubstanceRouter {
    forward_sets: BTreeMap<NodeId, BTreeSet<NodeId>>,
    last_updated: BTreeMap<NodeId, u64>,
    seen: BTreeSet<(SubstanceId, NodeId)>,
    processed: u64,
}

impl SubstanceRouter {
    /// Forward sets default to all neighbors.
    pub fn new(topo: &Topology) -> Self {
        SubstanceRouter {
            forward_sets: topo
                .nodes()
                .iter()
                .map(|&n| (n, topo.neighbors(n).into_iter().collect()))
                .collect(),
            last_updated: BTreeMap::new(),
            seen: BTreeSet::new(),
            processed: 0,
        }
    }

    pub fn forward_set(&self, node: NodeId) -> &BTreeSet<NodeId> {
        &self.forward_sets[&node]
    }

    /// Replaces a node's forward set; entries that are not topology neighbors are ignored.
    pub fn set_forward_set(
        &mut self,
        topo: &Topology,
        node: NodeId,
        set: impl IntoIterator<Item = NodeId>,
        tick: u64,
    ) {
        let neighbors: BTreeSet<NodeId> = topo.neighbors(node).into_iter().collect();
        let set = set.into_iter().filter(|n| neighbors.contains(n)).collect();
        self.forward_sets.insert(node, set);
        self.last_updated.insert(node, tick);
    }

    pub fn prune(&mut self, node: NodeId, neighbor: NodeId, tick: u64) {
        if let Some(s) = self.forward_sets.get_mut(&node) {
            s.remove(&neighbor);
            self.last_updated.insert(node, tick);
        }
    }

    pub fn restore(&mut self, topo: &Topology, node: NodeId, neighbor: NodeId, tick: u64) {
        if topo.neighbors(node).contains(&neighbor) {
            self.forward_sets.entry(node).or_default().insert(neighbor);
            self.last_updated.insert(node, tick);
        }
    }

    pub fn last_updated(&self, node: NodeId) -> Option<u64> {
        self.last_updated.get(&node).copied()
    }

    pub fn arrive(&mut self, s: &ArtificialSubstance, node: NodeId, now: u64) -> Arrival {
        if self.seen.contains(&(s.id, node)) {
            return Arrival::Duplicate;
        }
        if s.expired_at(now) {
            return Arrival::Expired;
        }
        self.seen.insert((s.id, node));
        self.processed += 1;
        let forward_to = if s.hops_to_go > 0 {
            self.forward_set(node).iter().copied().collect()
        } else {
            Vec::new()
        };
        Arrival::Process { forward_to }
    }

    pub fn has_processed(&self, id: SubstanceId, node: NodeId) -> bool {
        self.seen.contains(&(id, node))
    }

    pub fn processed_count(&self) -> u64 {
        self.processed
    }

    /// Drops dedup entries for substances that can no longer arrive anywhere.
    pub fn forget(&mut self, ids: &BTreeSet<SubstanceId>) {
        if !ids.is_empty() {
            self.seen.retain(|(s, _)| !ids.contains(s));
        }
    }
}

/// Drives a single substance through its own kernel for `max_ticks` ticks,
/// starting at its origin on tick `emitted_at`. Returns every (node, tick)
/// at which it was processed, in processing order.
pub fn diffuse(router: &mut SubstanceRouter, s: ArtificialSubstance, max_ticks: u64) -> Vec<(NodeId, u64)> {
    let mut k: Kernel<(NodeId, ArtificialSubstance)> = Kernel::new();
    while k.tick() < s.emitted_at {
        k.advance();
    }
    k.schedule_in(0, EventKind::SubstanceArrival, (s.origin, s));
    let mut out = Vec::new();
    for _ in 0..max_ticks {
        while let Some(ev) = k.pop_due() {
            let (node, s) = ev.payload;
            if let Arrival::Process { forward_to } = router.arrive(&s, node, k.tick()) {
                out.push((node, k.tick()));
                for n in forward_to {
                    k.schedule_in(1, EventKind::SubstanceArrival, (n, s.forwarded()));
                }
            }
        }
        k.advance();
    }
    out
}
