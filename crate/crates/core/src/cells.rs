//! Artificial cells: small mobile agents that each do one protection task.

use crate::adversary::{InfectionState, IntrusionSignature};
use crate::ids::{ComponentId, FamilyId, NodeId};
use crate::substances::Key;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Matcher,
    Fusion,
    Prober,
    Repair,
}

impl CellType {
    pub const ALL: [CellType; 4] = [
        CellType::Matcher,
        CellType::Fusion,
        CellType::Prober,
        CellType::Repair,
    ];
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellType::Matcher => "matcher",
            CellType::Fusion => "fusion",
            CellType::Prober => "prober",
            CellType::Repair => "repair",
        })
    }
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CellProgram {
    /// Exactly one rule.
    Matcher { rule: IntrusionSignature },
    Fusion { window: u64, threshold: usize },
    Prober {
        period: u64,
        staleness_bound: u64,
        #[serde(default = "one")]
        radius: u32,
    },
    Repair { families: BTreeSet<FamilyId> },
}

impl CellProgram {
    pub fn cell_type(&self) -> CellType {
        match self {
            CellProgram::Matcher { .. } => CellType::Matcher,
            CellProgram::Fusion { .. } => CellType::Fusion,
            CellProgram::Prober { .. } => CellType::Prober,
            CellProgram::Repair { .. } => CellType::Repair,
        }
    }

    /// Family a matcher is specialised for.
    pub fn family(&self) -> Option<FamilyId> {
        match self {
            CellProgram::Matcher { rule } => Some(rule.family),
            _ => None,
        }
    }
}

/// One entry of the cell catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTemplate {
    pub name: String,
    pub program: CellProgram,
    pub security_value: f64,
    /// Inclusive range lifetimes are drawn from.
    pub lifetime: (u64, u64),
}

impl CellTemplate {
    pub fn draw_lifetime<R: Rng>(&self, rng: &mut R) -> u64 {
        let (lo, hi) = self.lifetime;
        rng.gen_range(lo.max(1)..=hi.max(lo).max(1))
    }

    pub fn mean_lifetime(&self) -> f64 {
        (self.lifetime.0 + self.lifetime.1) as f64 / 2.0
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityState {
    Roaming,
    Anchored,
}

/// An alert as remembered by a fusion cell.
#[derive(Clone, Debug, PartialEq)]
pub struct AlertRecord {
    pub tick: u64,
    pub implicated: NodeId,
    pub source: ComponentId,
    pub family: Option<FamilyId>,
}

#[derive(Clone, Debug)]
pub struct ArtificialCell {
    pub id: ComponentId,
    pub template: usize,
    pub program: CellProgram,
    pub receptors: Vec<Key>,
    pub security_value: f64,
    pub birth_tick: u64,
    pub lifetime: u64,
    pub location: NodeId,
    /// Destination while travelling between nodes.
    pub in_transit: Option<NodeId>,
    pub danger_level: f64,
    pub mobility: MobilityState,
    pub release_streak: u32,
    pub alert_window: Vec<AlertRecord>,
    pub issued: BTreeMap<NodeId, u64>,
    pub repair_target: Option<NodeId>,
    pub actions_this_tick: u32,
}

impl ArtificialCell {
    pub fn new(
        id: ComponentId,
        template: usize,
        tpl: &CellTemplate,
        receptors: Vec<Key>,
        birth_tick: u64,
        lifetime: u64,
        location: NodeId,
    ) -> Self {
        ArtificialCell {
            id,
            template,
            program: tpl.program.clone(),
            receptors,
            security_value: tpl.security_value.clamp(0.0, 1.0),
            birth_tick,
            lifetime: lifetime.max(1),
            location,
            in_transit: None,
            danger_level: 0.0,
            mobility: MobilityState::Roaming,
            release_streak: 0,
            alert_window: Vec::new(),
            issued: BTreeMap::new(),
            repair_target: None,
            actions_this_tick: 0,
        }
    }

    pub fn cell_type(&self) -> CellType {
        self.program.cell_type()
    }

    pub fn expires_at(&self) -> u64 {
        self.birth_tick + self.lifetime
    }

    pub fn is_resident(&self) -> bool {
        self.in_transit.is_none()
    }

    pub fn receive_warning(&mut self) {
        self.danger_level += 1.0;
    }

    pub fn decay_danger(&mut self, factor: f64) {
        self.danger_level *= factor;
    }
}

/// Ticks of warning-free decay until `level0` is no longer above `theta`:
/// `ceil(log_factor(theta / level0))`, or 0 if already at or below.
pub fn ticks_to_calm(level0: f64, theta: f64, factor: f64) -> u64 {
    if level0 <= theta {
        return 0;
    }
    ((theta / level0).ln() / factor.ln()).ceil() as u64
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Exact,
    Family,
}

/// Exact rule match, or (when sensitised) any signature of the rule's family.
pub fn matcher_inspect(
    cell: &ArtificialCell,
    sigs: &[IntrusionSignature],
    danger_threshold: f64,
) -> Option<(IntrusionSignature, MatchKind)> {
    let CellProgram::Matcher { rule } = &cell.program else {
        return None;
    };
    if let Some(s) = sigs.iter().find(|s| s.sig_id == rule.sig_id) {
        return Some((*s, MatchKind::Exact));
    }
    if cell.danger_level >= danger_threshold {
        if let Some(s) = sigs.iter().find(|s| s.family == rule.family) {
            return Some((*s, MatchKind::Family));
        }
    }
    None
}

/// Nodes implicated by at least `threshold` distinct sources within the last `window` ticks.
pub fn fusion_evaluate(alerts: &[AlertRecord], threshold: usize, window: u64, now: u64) -> Vec<NodeId> {
    let mut sources: BTreeMap<NodeId, BTreeSet<ComponentId>> = BTreeMap::new();
    for a in alerts {
        if a.tick + window >= now && a.tick <= now {
            sources.entry(a.implicated).or_default().insert(a.source);
        }
    }
    sources
        .into_iter()
        .filter(|(_, s)| threshold > 0 && s.len() >= threshold)
        .map(|(n, _)| n)
        .collect()
}

/// What a prober sees when it queries a node's security environment.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeStatusView {
    pub node: NodeId,
    pub responding: bool,
    pub versions: Vec<(ComponentId, u64)>,
    pub newest_version: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProbeResult {
    Ok,
    Stale(Vec<ComponentId>),
    Silent,
}

pub fn probe_status(view: &NodeStatusView, staleness_bound: u64) -> ProbeResult {
    if !view.responding {
        return ProbeResult::Silent;
    }
    let stale: Vec<ComponentId> = view
        .versions
        .iter()
        .filter(|(_, v)| view.newest_version.saturating_sub(*v) > staleness_bound)
        .map(|(c, _)| *c)
        .collect();
    if stale.is_empty() {
        ProbeResult::Ok
    } else {
        ProbeResult::Stale(stale)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DisinfectOutcome {
    Cleaned,
    Failed,
    /// Node was already clean.
    NoOp,
}

pub fn disinfect(cell: &ArtificialCell, state: &mut InfectionState, node: NodeId) -> DisinfectOutcome {
    let CellProgram::Repair { families } = &cell.program else {
        return DisinfectOutcome::Failed;
    };
    let Some(sig) = state.get(node).infecting_sig else {
        return DisinfectOutcome::NoOp;
    };
    if families.contains(&sig.family) {
        state.clean(node);
        DisinfectOutcome::Cleaned
    } else {
        DisinfectOutcome::Failed
    }
}

/// Choice probabilities over `candidates` (current node first, then neighbors):
/// `(1-eps) * (1+a_i)/sum(1+a) + eps/k`.
pub fn migration_weights(attraction: &[f64], epsilon: f64) -> Vec<f64> {
    let k = attraction.len() as f64;
    let total: f64 = attraction.iter().map(|a| 1.0 + a.max(0.0)).sum();
    attraction
        .iter()
        .map(|a| (1.0 - epsilon) * (1.0 + a.max(0.0)) / total + epsilon / k)
        .collect()
}

/// One uniform draw picks the next location.
pub fn migrate<R: Rng>(candidates: &[NodeId], attraction: &[f64], epsilon: f64, rng: &mut R) -> NodeId {
    debug_assert_eq!(candidates.len(), attraction.len());
    let w = migration_weights(attraction, epsilon);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (c, p) in candidates.iter().zip(&w) {
        acc += p;
        if u < acc {
            return *c;
        }
    }
    *candidates.last().expect("at least the current node")
}

/// Live counts per type and resident lists per node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CellPopulation {
    pub by_type: BTreeMap<CellType, usize>,
    pub by_node: BTreeMap<NodeId, Vec<ComponentId>>,
    pub roaming: usize,
    pub anchored: usize,
    pub in_transit: usize,
}

impl CellPopulation {
    pub fn from_cells<'a>(cells: impl IntoIterator<Item = &'a ArtificialCell>) -> Self {
        let mut p = CellPopulation::default();
        for c in cells {
            *p.by_type.entry(c.cell_type()).or_default() += 1;
            if c.is_resident() {
                p.by_node.entry(c.location).or_default().push(c.id);
            } else {
                p.in_transit += 1;
            }
            match c.mobility {
                MobilityState::Roaming => p.roaming += 1,
                MobilityState::Anchored => p.anchored += 1,
            }
        }
        p
    }

    pub fn total(&self) -> usize {
        self.by_type.values().sum()
    }

    pub fn count(&self, t: CellType) -> usize {
        self.by_type.get(&t).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::SigId;
    use crate::kernel::{seeded_rng, NodeSpec, Role, Topology};

    fn tpl(program: CellProgram) -> CellTemplate {
        CellTemplate {
            name: "t".into(),
            program,
            security_value: 0.3,
            lifetime: (100, 100),
        }
    }

    fn cell(program: CellProgram) -> ArtificialCell {
        ArtificialCell::new(ComponentId(1), 0, &tpl(program), vec![], 20, 100, NodeId(0))
    }

    fn s1() -> IntrusionSignature {
        IntrusionSignature::original(SigId(1))
    }

    fn s1_child() -> IntrusionSignature {
        IntrusionSignature {
            sig_id: SigId(77),
            family: FamilyId(1),
            generation: 1,
        }
    }

    #[test]
    fn exact_and_family_truth_table() {
        let mut c = cell(CellProgram::Matcher { rule: s1() });
        let unrelated = IntrusionSignature::original(SigId(9));
        assert_eq!(matcher_inspect(&c, &[s1()], 1.0).map(|m| m.1), Some(MatchKind::Exact));
        assert_eq!(matcher_inspect(&c, &[unrelated], 1.0), None);
        // (family match, danger >= theta) enumerated
        for (sig, danger, expect) in [
            (s1_child(), 0.0, None),
            (s1_child(), 2.0, Some(MatchKind::Family)),
            (unrelated, 2.0, None),
            (unrelated, 0.0, None),
        ] {
            c.danger_level = danger;
            assert_eq!(matcher_inspect(&c, &[sig], 1.0).map(|m| m.1), expect);
        }
    }

    #[test]
    fn expiry_tick() {
        assert_eq!(cell(CellProgram::Matcher { rule: s1() }).expires_at(), 120);
    }

    fn rec(tick: u64, node: u32, src: u64) -> AlertRecord {
        AlertRecord {
            tick,
            implicated: NodeId(node),
            source: ComponentId(src),
            family: None,
        }
    }

    #[test]
    fn fusion_threshold_boundary() {
        assert!(fusion_evaluate(&[], 2, 10, 5).is_empty());
        assert!(fusion_evaluate(&[rec(1, 4, 1)], 2, 10, 5).is_empty());
        // same source twice is still one source
        assert!(fusion_evaluate(&[rec(1, 4, 1), rec(2, 4, 1)], 2, 10, 5).is_empty());
        assert_eq!(fusion_evaluate(&[rec(1, 4, 1), rec(2, 4, 2)], 2, 10, 5), vec![NodeId(4)]);
        // outside the window
        assert!(fusion_evaluate(&[rec(1, 4, 1), rec(2, 4, 2)], 2, 3, 5).is_empty());
    }

    #[test]
    fn fusion_matches_counting_oracle() {
        let mut rng = seeded_rng(17, 0);
        let alerts: Vec<AlertRecord> = (0..40)
            .map(|i| rec(i / 4, rng.gen_range(0..5), rng.gen_range(0..8)))
            .collect();
        let now = 9;
        let window = 10;
        let mut expected = Vec::new();
        for node in 0..5u32 {
            let mut srcs: Vec<u64> = alerts
                .iter()
                .filter(|a| a.implicated == NodeId(node))
                .map(|a| a.source.0)
                .collect();
            srcs.sort();
            srcs.dedup();
            if srcs.len() >= 3 {
                expected.push(NodeId(node));
            }
        }
        assert_eq!(fusion_evaluate(&alerts, 3, window, now), expected);
    }

    #[test]
    fn probe_outcomes() {
        let mut view = NodeStatusView {
            node: NodeId(1),
            responding: true,
            versions: vec![(ComponentId(5), 7)],
            newest_version: 7,
        };
        assert_eq!(probe_status(&view, 2), ProbeResult::Ok);
        view.versions = vec![(ComponentId(5), 3)];
        assert_eq!(probe_status(&view, 2), ProbeResult::Stale(vec![ComponentId(5)]));
        view.versions = vec![(ComponentId(5), 5)];
        assert_eq!(probe_status(&view, 2), ProbeResult::Ok);
        view.responding = false;
        assert_eq!(probe_status(&view, 2), ProbeResult::Silent);
    }

    #[test]
    fn disinfection_requires_matching_family() {
        let t = Topology::build(
            &[NodeSpec {
                id: NodeId(0),
                role: Role::Host,
            }],
            &[],
        )
        .unwrap();
        let mut state = InfectionState::new(&t);
        let repair = cell(CellProgram::Repair {
            families: [FamilyId(1)].into(),
        });
        assert_eq!(disinfect(&repair, &mut state, NodeId(0)), DisinfectOutcome::NoOp);
        state.infect(NodeId(0), IntrusionSignature::original(SigId(2)), 3);
        assert_eq!(disinfect(&repair, &mut state, NodeId(0)), DisinfectOutcome::Failed);
        state.clean(NodeId(0));
        state.infect(NodeId(0), s1_child(), 3);
        assert_eq!(disinfect(&repair, &mut state, NodeId(0)), DisinfectOutcome::Cleaned);
        assert!(!state.is_infected(NodeId(0)));
    }

    #[test]
    fn uniform_without_attraction() {
        let w = migration_weights(&[0.0, 0.0, 0.0], 0.1);
        for p in w {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attraction_monte_carlo_matches_closed_form() {
        let cands = [NodeId(0), NodeId(1), NodeId(2)];
        let attr = [0.0, 3.0, 0.0];
        let eps = 0.1;
        // closed form: 0.9 * 4/6 + 0.1/3
        let expected = 0.9 * 4.0 / 6.0 + 0.1 / 3.0;
        assert!((migration_weights(&attr, eps)[1] - expected).abs() < 1e-12);
        let mut rng = seeded_rng(23, 1);
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| migrate(&cands, &attr, eps, &mut rng) == NodeId(1))
            .count();
        assert!((hits as f64 / n as f64 - expected).abs() <= 0.02);
    }

    #[test]
    fn danger_decays_geometrically() {
        let mut c = cell(CellProgram::Matcher { rule: s1() });
        for _ in 0..5 {
            c.receive_warning();
        }
        let level0 = c.danger_level;
        for _ in 0..7 {
            c.decay_danger(0.9);
        }
        assert!((c.danger_level - level0 * 0.9f64.powi(7)).abs() < 1e-12);

        let k = ticks_to_calm(5.0, 1.0, 0.9);
        assert_eq!(k, 16);
        assert!(5.0 * 0.9f64.powi(k as i32) < 1.0);
        assert!(5.0 * 0.9f64.powi(k as i32 - 1) >= 1.0);
        assert_eq!(ticks_to_calm(0.5, 1.0, 0.9), 0);
    }

    #[test]
    fn steady_state_birth_death() {
        // brute force: g births per tick, lifetimes uniform on [50, 150]
        let mut rng = seeded_rng(31, 1);
        let t = tpl(CellProgram::Fusion {
            window: 1,
            threshold: 1,
        });
        let t = CellTemplate {
            lifetime: (50, 150),
            ..t
        };
        let g = 2u64;
        let mut deaths: BTreeMap<u64, usize> = BTreeMap::new();
        let mut alive = 0usize;
        let mean = (g as f64) * t.mean_lifetime();
        let band = 3.0 * mean.sqrt();
        for tick in 0..2000u64 {
            alive -= deaths.remove(&tick).unwrap_or(0);
            for _ in 0..g {
                *deaths.entry(tick + t.draw_lifetime(&mut rng)).or_default() += 1;
                alive += 1;
            }
            if tick >= 200 {
                assert!((alive as f64 - mean).abs() <= band, "tick {tick}: {alive}");
            }
        }
    }
}
