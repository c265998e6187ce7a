//! Per-node security environment: registration, ordered event dispatch,
//! receptor-mediated resource access and eviction of misbehaving components.

use crate::error::{Result, SimError};
use crate::ids::{ComponentId, NodeId};
use crate::kernel::EventKind;
use crate::substances::{Key, Lock, ReceptorRegistry};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    Antivirus,
    Firewall,
    PacketFilter,
    Ids,
    ArtificialCell,
    LymphNode,
    Cnts,
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ComponentKind::Antivirus => "antivirus",
            ComponentKind::Firewall => "firewall",
            ComponentKind::PacketFilter => "packet_filter",
            ComponentKind::Ids => "ids",
            ComponentKind::ArtificialCell => "artificial_cell",
            ComponentKind::LymphNode => "lymph_node",
            ComponentKind::Cnts => "cnts",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    Storage,
    Memory,
    Cpu,
    Network,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Alert,
    Drop,
    Consume,
}

impl Verdict {
    pub fn stops_packet(self) -> bool {
        matches!(self, Verdict::Drop | Verdict::Consume)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Alert => "alert",
            Verdict::Drop => "drop",
            Verdict::Consume => "consume",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentHandle {
    pub component_id: ComponentId,
    pub kind: ComponentKind,
    pub receptors: Vec<Key>,
    pub security_value: f64,
    pub active: bool,
    /// Maximum side actions per tick before the component counts as misbehaving.
    pub action_budget: u32,
}

impl ComponentHandle {
    pub fn new(id: ComponentId, kind: ComponentKind, receptors: Vec<Key>, security_value: f64) -> Self {
        ComponentHandle {
            component_id: id,
            kind,
            receptors,
            security_value: security_value.clamp(0.0, 1.0),
            active: true,
            action_budget: 64,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnauthorizedResource(ResourceKind),
    FailedAuthentication,
    BudgetExceeded,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViolationKind::UnauthorizedResource(r) => write!(f, "unauthorized_resource:{r:?}"),
            ViolationKind::FailedAuthentication => f.write_str("failed_authentication"),
            ViolationKind::BudgetExceeded => f.write_str("budget_exceeded"),
        }
    }
}

/// Observed behaviour of a component over the current tick.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BehaviorProbe {
    pub resources: Vec<ResourceKind>,
    pub actions: u32,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CheckOutcome {
    Ok,
    Violation(ViolationKind),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MisbehaviorRecord {
    pub tick: u64,
    pub component: ComponentId,
    pub violation: ViolationKind,
}

#[derive(Debug, Clone)]
pub struct SecurityEnvironment {
    pub node: NodeId,
    order: Vec<ComponentId>,
    registry: BTreeMap<ComponentId, ComponentHandle>,
    subscriptions: BTreeMap<EventKind, Vec<ComponentId>>,
    resource_policy: BTreeMap<ResourceKind, Lock>,
    misbehavior_log: Vec<MisbehaviorRecord>,
    evicted: BTreeSet<ComponentId>,
}

impl SecurityEnvironment {
    pub fn new(node: NodeId, resource_policy: BTreeMap<ResourceKind, Lock>) -> Self {
        SecurityEnvironment {
            node,
            order: Vec::new(),
            registry: BTreeMap::new(),
            subscriptions: BTreeMap::new(),
            resource_policy,
            misbehavior_log: Vec::new(),
            evicted: BTreeSet::new(),
        }
    }

    pub fn register(&mut self, component: ComponentHandle, events: &[EventKind]) -> Result<()> {
        let id = component.component_id;
        if self.registry.contains_key(&id) {
            return Err(SimError::DuplicateRegistration(id));
        }
        self.registry.insert(id, component);
        self.order.push(id);
        for e in events {
            let subs = self.subscriptions.entry(*e).or_default();
            if !subs.contains(&id) {
                subs.push(id);
            }
        }
        Ok(())
    }

    /// Removes a component that is leaving the node (not an eviction).
    pub fn deregister(&mut self, id: ComponentId) -> Option<ComponentHandle> {
        let h = self.registry.remove(&id)?;
        self.order.retain(|c| *c != id);
        for subs in self.subscriptions.values_mut() {
            subs.retain(|c| *c != id);
        }
        Some(h)
    }

    pub fn is_registered(&self, id: ComponentId) -> bool {
        self.registry.contains_key(&id)
    }

    pub fn handle(&self, id: ComponentId) -> Option<&ComponentHandle> {
        self.registry.get(&id)
    }

    pub fn handle_mut(&mut self, id: ComponentId) -> Option<&mut ComponentHandle> {
        self.registry.get_mut(&id)
    }

    /// Registered handles in registration order.
    pub fn handles(&self) -> impl Iterator<Item = &ComponentHandle> {
        self.order.iter().map(move |id| &self.registry[id])
    }

    pub fn subscribers(&self, kind: EventKind) -> &[ComponentId] {
        self.subscriptions.get(&kind).map_or(&[], Vec::as_slice)
    }

    /// Security values of active components, in registration order.
    pub fn security_values(&self) -> Vec<f64> {
        self.handles()
            .filter(|h| h.active)
            .map(|h| h.security_value)
            .collect()
    }

    /// Security values excluding one component.
    pub fn security_values_without(&self, id: ComponentId) -> Vec<f64> {
        self.handles()
            .filter(|h| h.active && h.component_id != id)
            .map(|h| h.security_value)
            .collect()
    }

    pub fn set_all_active(&mut self, active: bool) {
        for h in self.registry.values_mut() {
            h.active = active;
        }
    }

    /// Offers an event to each active subscriber in registration order.
    /// For packets and file events, the first drop or consume stops dispatch.
    pub fn dispatch(
        &self,
        kind: EventKind,
        mut offer: impl FnMut(&ComponentHandle) -> Verdict,
    ) -> Vec<(ComponentId, Verdict)> {
        let stoppable = matches!(kind, EventKind::PacketArrival | EventKind::FileAccess);
        let mut out = Vec::new();
        for id in self.subscribers(kind) {
            let h = &self.registry[id];
            if !h.active {
                continue;
            }
            let v = offer(h);
            out.push((*id, v));
            if stoppable && v.stops_packet() {
                break;
            }
        }
        out
    }

    pub fn authorized(&self, id: ComponentId, resource: ResourceKind, receptors: &ReceptorRegistry) -> bool {
        let (Some(h), Some(lock)) = (self.registry.get(&id), self.resource_policy.get(&resource)) else {
            return false;
        };
        h.receptors.iter().any(|k| receptors.matches(lock, k))
    }

    /// Authentication, then resource authorization, then the per-tick budget.
    pub fn check_component(
        &mut self,
        id: ComponentId,
        probe: &BehaviorProbe,
        receptors: &ReceptorRegistry,
        tick: u64,
    ) -> CheckOutcome {
        let Some(h) = self.registry.get(&id) else {
            return CheckOutcome::Ok;
        };
        let violation = if h.receptors.is_empty() || !h.receptors.iter().all(|k| receptors.is_minted_key(k)) {
            Some(ViolationKind::FailedAuthentication)
        } else if let Some(r) = probe
            .resources
            .iter()
            .find(|r| !self.authorized(id, **r, receptors))
        {
            Some(ViolationKind::UnauthorizedResource(*r))
        } else if probe.actions > h.action_budget {
            Some(ViolationKind::BudgetExceeded)
        } else {
            None
        };
        match violation {
            Some(v) => {
                self.misbehavior_log.push(MisbehaviorRecord {
                    tick,
                    component: id,
                    violation: v,
                });
                CheckOutcome::Violation(v)
            }
            None => CheckOutcome::Ok,
        }
    }

    pub fn misbehavior_log(&self) -> &[MisbehaviorRecord] {
        &self.misbehavior_log
    }

    pub fn evict(&mut self, id: ComponentId) -> Result<ComponentHandle> {
        if !self.misbehavior_log.iter().any(|r| r.component == id) {
            return Err(SimError::NoViolationOnRecord(id));
        }
        let mut h = self.deregister(id).ok_or(SimError::NoViolationOnRecord(id))?;
        h.active = false;
        self.evicted.insert(id);
        Ok(h)
    }

    pub fn is_evicted(&self, id: ComponentId) -> bool {
        self.evicted.contains(&id)
    }

    pub fn evicted(&self) -> &BTreeSet<ComponentId> {
        &self.evicted
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substances::{Descriptor, EntityType};

    struct Fixture {
        receptors: ReceptorRegistry,
        env: SecurityEnvironment,
        net_key: Key,
        cell_key: Key,
    }

    fn fixture() -> Fixture {
        let mut receptors = ReceptorRegistry::new();
        let net = receptors.mint(Descriptor::new(EntityType::Resource, "network"));
        let cell = receptors.mint(Descriptor::new(EntityType::MatcherCell, "active"));
        let env = SecurityEnvironment::new(NodeId(0), [(ResourceKind::Network, net.lock)].into());
        Fixture {
            receptors,
            env,
            net_key: net.key,
            cell_key: cell.key,
        }
    }

    fn handle(id: u64, kind: ComponentKind, keys: Vec<Key>) -> ComponentHandle {
        ComponentHandle::new(ComponentId(id), kind, keys, 0.3)
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut f = fixture();
        let h = handle(1, ComponentKind::Firewall, vec![f.cell_key]);
        f.env.register(h.clone(), &[EventKind::PacketArrival]).unwrap();
        assert_eq!(
            f.env.register(h, &[EventKind::PacketArrival]),
            Err(SimError::DuplicateRegistration(ComponentId(1)))
        );
    }

    #[test]
    fn dispatch_in_registration_order_and_drop_stops() {
        let mut f = fixture();
        for (id, kind) in [(1, ComponentKind::Firewall), (2, ComponentKind::Ids), (3, ComponentKind::ArtificialCell)] {
            f.env
                .register(handle(id, kind, vec![f.cell_key]), &[EventKind::PacketArrival])
                .unwrap();
        }
        let order: Vec<u64> = f
            .env
            .dispatch(EventKind::PacketArrival, |_| Verdict::Pass)
            .into_iter()
            .map(|(c, _)| c.0)
            .collect();
        assert_eq!(order, vec![1, 2, 3]);

        let got = f.env.dispatch(EventKind::PacketArrival, |h| {
            if h.kind == ComponentKind::Firewall {
                Verdict::Drop
            } else {
                Verdict::Alert
            }
        });
        assert_eq!(got, vec![(ComponentId(1), Verdict::Drop)]);
    }

    #[test]
    fn substances_reach_everyone() {
        let mut f = fixture();
        for id in 1..=3 {
            f.env
                .register(handle(id, ComponentKind::ArtificialCell, vec![f.cell_key]), &[EventKind::SubstanceArrival])
                .unwrap();
        }
        assert_eq!(f.env.dispatch(EventKind::SubstanceArrival, |_| Verdict::Consume).len(), 3);
    }

    #[test]
    fn checks_and_eviction() {
        let mut f = fixture();
        let good = handle(1, ComponentKind::ArtificialCell, vec![f.cell_key, f.net_key]);
        let bad = handle(2, ComponentKind::Antivirus, vec![f.cell_key]);
        f.env.register(good, &[EventKind::PacketArrival]).unwrap();
        f.env.register(bad, &[EventKind::PacketArrival]).unwrap();

        let net = BehaviorProbe {
            resources: vec![ResourceKind::Network],
            actions: 1,
        };
        assert_eq!(f.env.check_component(ComponentId(1), &net, &f.receptors, 0), CheckOutcome::Ok);
        assert_eq!(
            f.env.check_component(ComponentId(2), &net, &f.receptors, 0),
            CheckOutcome::Violation(ViolationKind::UnauthorizedResource(ResourceKind::Network))
        );
        // budget counter: 2x the budget in one tick
        let spam = BehaviorProbe {
            resources: vec![],
            actions: 128,
        };
        assert_eq!(
            f.env.check_component(ComponentId(1), &spam, &f.receptors, 0),
            CheckOutcome::Violation(ViolationKind::BudgetExceeded)
        );

        assert_eq!(
            f.env.evict(ComponentId(3)).unwrap_err(),
            SimError::NoViolationOnRecord(ComponentId(3))
        );
        let evicted = f.env.evict(ComponentId(2)).unwrap();
        assert!(!evicted.active);
        let seen: Vec<_> = f
            .env
            .dispatch(EventKind::PacketArrival, |_| Verdict::Pass)
            .into_iter()
            .map(|(c, _)| c)
            .collect();
        assert_eq!(seen, vec![ComponentId(1)]);
        assert!(f.env.is_evicted(ComponentId(2)));
    }

    #[test]
    fn forged_receptors_fail_authentication() {
        let mut f = fixture();
        let mut other = ReceptorRegistry::new();
        let forged = other.mint(Descriptor::new(EntityType::Ids, "x")).key;
        f.env
            .register(handle(9, ComponentKind::Ids, vec![forged]), &[])
            .unwrap();
        assert_eq!(
            f.env.check_component(ComponentId(9), &BehaviorProbe::default(), &f.receptors, 3),
            CheckOutcome::Violation(ViolationKind::FailedAuthentication)
        );
    }
}
