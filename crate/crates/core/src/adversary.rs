//! Background traffic, propagating worms, signature mutation and offline-boot infections.

use crate::ids::{FamilyId, NodeId, PacketId, SigId};
use crate::kernel::{Packet, Protocol, Topology};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntrusionSignature {
    pub sig_id: SigId,
    pub family: FamilyId,
    pub generation: u32,
}

impl IntrusionSignature {
    pub fn original(sig_id: SigId) -> Self {
        IntrusionSignature {
            sig_id,
            family: FamilyId(sig_id.0),
            generation: 0,
        }
    }
}

impl fmt::Display for IntrusionSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/g{}", self.sig_id, self.family, self.generation)
    }
}

/// Mints signature ids and remembers the lineage of every mutant.
#[derive(Clone, Debug, Default)]
pub struct SignatureRegistry {
    next: u32,
    parent: BTreeMap<SigId, Option<SigId>>,
}

impl SignatureRegistry {
    /// Ids below `first_free` are reserved for signatures named in the scenario.
    pub fn new(first_free: u32) -> Self {
        SignatureRegistry {
            next: first_free,
            parent: BTreeMap::new(),
        }
    }

    pub fn register_original(&mut self, sig: IntrusionSignature) {
        self.parent.entry(sig.sig_id).or_insert(None);
        self.next = self.next.max(sig.sig_id.0 + 1);
    }

    pub fn child_of(&mut self, parent: &IntrusionSignature) -> IntrusionSignature {
        self.register_original_if_unknown(parent);
        let id = SigId(self.next);
        self.next += 1;
        self.parent.insert(id, Some(parent.sig_id));
        IntrusionSignature {
            sig_id: id,
            family: parent.family,
            generation: parent.generation + 1,
        }
    }

    fn register_original_if_unknown(&mut self, sig: &IntrusionSignature) {
        if !self.parent.contains_key(&sig.sig_id) {
            self.parent.insert(sig.sig_id, None);
            self.next = self.next.max(sig.sig_id.0 + 1);
        }
    }

    pub fn contains(&self, id: SigId) -> bool {
        self.parent.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Number of ancestors above `id`.
    pub fn lineage_depth(&self, id: SigId) -> Option<u32> {
        let mut depth = 0;
        let mut cur = *self.parent.get(&id)?;
        while let Some(p) = cur {
            depth += 1;
            cur = *self.parent.get(&p)?;
        }
        Some(depth)
    }
}

/// One uniform draw; below `rate` yields a fresh child signature.
pub fn mutate<R: Rng>(
    sig: &IntrusionSignature,
    rate: f64,
    registry: &mut SignatureRegistry,
    rng: &mut R,
) -> IntrusionSignature {
    let u: f64 = rng.gen();
    if u < rate {
        registry.child_of(sig)
    } else {
        *sig
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    /// Packets per tick.
    pub rate: u32,
    pub mix: Vec<(Protocol, f64)>,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        BackgroundSpec {
            rate: 0,
            mix: vec![(Protocol::Http, 0.7), (Protocol::Smtp, 0.2), (Protocol::Dns, 0.1)],
        }
    }
}

/// Benign packets for one tick. Draw order per packet: src, dst, protocol.
pub fn emit_background<R: Rng>(
    spec: &BackgroundSpec,
    topo: &Topology,
    rng: &mut R,
    next_packet: &mut u64,
) -> Vec<Packet> {
    if spec.rate == 0 || topo.len() < 2 || spec.mix.is_empty() {
        return Vec::new();
    }
    let weights = WeightedIndex::new(spec.mix.iter().map(|(_, w)| *w))
        .expect("background mix weights must be positive");
    let nodes = topo.nodes();
    (0..spec.rate)
        .map(|_| {
            let src = nodes[rng.gen_range(0..nodes.len())];
            let mut dst = nodes[rng.gen_range(0..nodes.len() - 1)];
            if dst >= src {
                dst = nodes[topo.idx(dst).unwrap() + 1];
            }
            let proto = spec.mix[weights.sample(rng)].0;
            let id = PacketId(*next_packet);
            *next_packet += 1;
            Packet::new(id, src, dst, proto)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WormSpec {
    pub signature: IntrusionSignature,
    pub entry_node: NodeId,
    pub fanout: u32,
    /// Empty means every node is vulnerable.
    #[serde(default)]
    pub vulnerability_set: BTreeSet<NodeId>,
    #[serde(default)]
    pub mutation_rate: f64,
    #[serde(default = "default_worm_protocol")]
    pub protocol: Protocol,
    #[serde(default)]
    pub start_tick: u64,
}

fn default_worm_protocol() -> Protocol {
    Protocol::Smb
}

impl WormSpec {
    pub fn is_vulnerable(&self, node: NodeId) -> bool {
        self.vulnerability_set.is_empty() || self.vulnerability_set.contains(&node)
    }

    fn targets(&self, topo: &Topology) -> Vec<NodeId> {
        if self.vulnerability_set.is_empty() {
            topo.nodes().to_vec()
        } else {
            self.vulnerability_set.iter().copied().collect()
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfectionStatus {
    Clean,
    Infected,
    Quarantined,
}

impl fmt::Display for InfectionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfectionStatus::Clean => "clean",
            InfectionStatus::Infected => "infected",
            InfectionStatus::Quarantined => "quarantined",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeInfection {
    pub infected_at: Option<u64>,
    pub infecting_sig: Option<IntrusionSignature>,
    pub quarantined_since: Option<u64>,
}

impl NodeInfection {
    pub fn is_infected(&self) -> bool {
        self.infected_at.is_some()
    }

    pub fn status(&self) -> InfectionStatus {
        if self.quarantined_since.is_some() {
            InfectionStatus::Quarantined
        } else if self.is_infected() {
            InfectionStatus::Infected
        } else {
            InfectionStatus::Clean
        }
    }
}

/// Ground-truth infection state of every node.
#[derive(Clone, Debug, Default)]
pub struct InfectionState {
    nodes: BTreeMap<NodeId, NodeInfection>,
}

impl InfectionState {
    pub fn new(topo: &Topology) -> Self {
        InfectionState {
            nodes: topo
                .nodes()
                .iter()
                .map(|&n| (n, NodeInfection::default()))
                .collect(),
        }
    }

    pub fn get(&self, n: NodeId) -> &NodeInfection {
        &self.nodes[&n]
    }

    pub fn status(&self, n: NodeId) -> InfectionStatus {
        self.get(n).status()
    }

    pub fn is_infected(&self, n: NodeId) -> bool {
        self.get(n).is_infected()
    }

    pub fn is_quarantined(&self, n: NodeId) -> bool {
        self.get(n).quarantined_since.is_some()
    }

    /// Flips a clean node to infected. Returns whether the state changed.
    pub fn infect(&mut self, n: NodeId, sig: IntrusionSignature, tick: u64) -> bool {
        let e = self.nodes.get_mut(&n).expect("known node");
        if e.is_infected() {
            return false;
        }
        e.infected_at = Some(tick);
        e.infecting_sig = Some(sig);
        true
    }

    pub fn clean(&mut self, n: NodeId) -> bool {
        let e = self.nodes.get_mut(&n).expect("known node");
        let was = e.is_infected();
        e.infected_at = None;
        e.infecting_sig = None;
        was
    }

    pub fn quarantine(&mut self, n: NodeId, tick: u64) -> bool {
        let e = self.nodes.get_mut(&n).expect("known node");
        if e.quarantined_since.is_some() {
            return false;
        }
        e.quarantined_since = Some(tick);
        true
    }

    pub fn release(&mut self, n: NodeId) -> bool {
        self.nodes
            .get_mut(&n)
            .expect("known node")
            .quarantined_since
            .take()
            .is_some()
    }

    pub fn infected_nodes(&self) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, e)| e.is_infected())
            .map(|(n, _)| *n)
            .collect()
    }

    pub fn infected_count(&self) -> usize {
        self.nodes.values().filter(|e| e.is_infected()).count()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NodeInfection)> {
        self.nodes.iter().map(|(n, e)| (*n, e))
    }
}

/// Mutable per-run worm bookkeeping.
#[derive(Clone, Debug)]
pub struct WormRuntime {
    pub spec: WormSpec,
    pub entry_pending: bool,
}

impl WormRuntime {
    pub fn new(spec: WormSpec) -> Self {
        WormRuntime {
            spec,
            entry_pending: true,
        }
    }
}

/// Infection packets for one tick.
///
/// While the entry is pending a single seed packet is addressed to the entry
/// node. Otherwise every infected node that `can_send` and carries this
/// worm's family emits `fanout` packets; per packet the target is drawn first,
/// then the mutation draw.
pub fn worm_step<R: Rng>(
    worm: &mut WormRuntime,
    state: &InfectionState,
    topo: &Topology,
    can_send: impl Fn(NodeId) -> bool,
    registry: &mut SignatureRegistry,
    rng: &mut R,
    next_packet: &mut u64,
) -> Vec<Packet> {
    let spec = &worm.spec;
    let mut out = Vec::new();
    let mut push = |src: NodeId, dst: NodeId, sig: IntrusionSignature| {
        let mut p = Packet::new(PacketId(*next_packet), src, dst, spec.protocol).with_sigs(vec![sig]);
        p.port = spec.protocol.default_port();
        *next_packet += 1;
        out.push(p);
    };
    if worm.entry_pending {
        worm.entry_pending = false;
        push(spec.entry_node, spec.entry_node, spec.signature);
        return out;
    }
    let targets = spec.targets(topo);
    for (node, inf) in state.iter() {
        let Some(sig) = inf.infecting_sig else { continue };
        if sig.family != spec.signature.family || !can_send(node) {
            continue;
        }
        let pool: Vec<NodeId> = targets.iter().copied().filter(|&t| t != node).collect();
        if pool.is_empty() {
            continue;
        }
        for _ in 0..spec.fanout {
            let dst = pool[rng.gen_range(0..pool.len())];
            let carried = mutate(&sig, spec.mutation_rate, registry, rng);
            push(node, dst, carried);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineBoot {
    pub node: NodeId,
    pub signature: IntrusionSignature,
    pub at: u64,
    #[serde(default)]
    pub blackout: u64,
}

impl OfflineBoot {
    pub fn in_blackout(&self, tick: u64) -> bool {
        tick >= self.at && tick < self.at + self.blackout
    }
}

/// Infects the node directly; no packet is involved.
pub fn offline_infect(state: &mut InfectionState, boot: &OfflineBoot) -> bool {
    state.infect(boot.node, boot.signature, boot.at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{seeded_rng, NodeSpec, Role};

    fn line(n: u32) -> Topology {
        let nodes: Vec<NodeSpec> = (0..n)
            .map(|i| NodeSpec {
                id: NodeId(i),
                role: Role::Host,
            })
            .collect();
        let edges: Vec<_> = (1..n).map(|i| (NodeId(i - 1), NodeId(i))).collect();
        Topology::build(&nodes, &edges).unwrap()
    }

    #[test]
    fn zero_rate_never_mutates() {
        let mut reg = SignatureRegistry::new(100);
        let mut rng = seeded_rng(1, 0);
        let s = IntrusionSignature::original(SigId(1));
        for _ in 0..100 {
            assert_eq!(mutate(&s, 0.0, &mut reg, &mut rng), s);
        }
    }

    #[test]
    fn full_rate_always_mutates() {
        let mut reg = SignatureRegistry::new(100);
        let mut rng = seeded_rng(1, 0);
        let s = IntrusionSignature::original(SigId(1));
        let c = mutate(&s, 1.0, &mut reg, &mut rng);
        assert_ne!(c.sig_id, s.sig_id);
        assert_eq!(c.generation, 1);
        assert_eq!(c.family, s.family);
        let g = mutate(&c, 1.0, &mut reg, &mut rng);
        assert_eq!(g.generation, 2);
        assert_eq!(reg.lineage_depth(g.sig_id), Some(2));
    }

    #[test]
    fn quarter_rate_fraction() {
        let mut reg = SignatureRegistry::new(100);
        let mut rng = seeded_rng(5, 0);
        let s = IntrusionSignature::original(SigId(1));
        let n = 10_000;
        let mutated = (0..n)
            .filter(|_| mutate(&s, 0.25, &mut reg, &mut rng) != s)
            .count();
        let frac = mutated as f64 / n as f64;
        assert!((frac - 0.25).abs() <= 0.02, "fraction {frac}");
    }

    #[test]
    fn background_counts_and_mix() {
        let t = line(10);
        let mut rng = seeded_rng(3, 0);
        let mut next = 0;
        let none = BackgroundSpec {
            rate: 0,
            ..Default::default()
        };
        assert!(emit_background(&none, &t, &mut rng, &mut next).is_empty());

        let five = BackgroundSpec {
            rate: 5,
            ..Default::default()
        };
        let total: usize = (0..10)
            .map(|_| emit_background(&five, &t, &mut rng, &mut next).len())
            .sum();
        assert_eq!(total, 50);

        let mix = BackgroundSpec {
            rate: 100,
            mix: vec![(Protocol::Http, 0.8), (Protocol::Smtp, 0.2)],
        };
        let mut rng = seeded_rng(3, 0);
        let pkts: Vec<Packet> = (0..100)
            .flat_map(|_| emit_background(&mix, &t, &mut rng, &mut next))
            .collect();
        assert_eq!(pkts.len(), 10_000);
        let http = pkts.iter().filter(|p| p.protocol == Protocol::Http).count() as f64;
        assert!((http / 10_000.0 - 0.8).abs() <= 0.02);
        assert!(pkts.iter().all(|p| p.src != p.dst && p.is_benign()));
    }

    #[test]
    fn worm_seeds_then_fans_out() {
        let t = line(5);
        let spec = WormSpec {
            signature: IntrusionSignature::original(SigId(1)),
            entry_node: NodeId(2),
            fanout: 2,
            vulnerability_set: BTreeSet::new(),
            mutation_rate: 0.0,
            protocol: Protocol::Smb,
            start_tick: 0,
        };
        let mut worm = WormRuntime::new(spec);
        let mut state = InfectionState::new(&t);
        let mut reg = SignatureRegistry::new(10);
        let mut rng = seeded_rng(1, 0);
        let mut next = 0;
        let seed = worm_step(&mut worm, &state, &t, |_| true, &mut reg, &mut rng, &mut next);
        assert_eq!(seed.len(), 1);
        assert_eq!((seed[0].src, seed[0].dst), (NodeId(2), NodeId(2)));
        state.infect(NodeId(2), seed[0].payload_sigs[0], 0);
        let pkts = worm_step(&mut worm, &state, &t, |_| true, &mut reg, &mut rng, &mut next);
        assert_eq!(pkts.len(), 2);
        assert!(pkts.iter().all(|p| p.src == NodeId(2) && p.dst != NodeId(2)));
        let blocked = worm_step(&mut worm, &state, &t, |_| false, &mut reg, &mut rng, &mut next);
        assert!(blocked.is_empty());
    }

    #[test]
    fn offline_blackout_window() {
        let t = line(3);
        let mut state = InfectionState::new(&t);
        let boot = OfflineBoot {
            node: NodeId(1),
            signature: IntrusionSignature::original(SigId(9)),
            at: 5,
            blackout: 10,
        };
        assert!(offline_infect(&mut state, &boot));
        assert_eq!(state.status(NodeId(1)), InfectionStatus::Infected);
        assert!(!boot.in_blackout(4));
        assert!(boot.in_blackout(5) && boot.in_blackout(14));
        assert!(!boot.in_blackout(15));
        let zero = OfflineBoot { blackout: 0, ..boot };
        assert!(!zero.in_blackout(5));
    }
}
