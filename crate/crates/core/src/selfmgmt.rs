//! Node security levels, attraction beacons and the anchoring policy.

use crate::cells::MobilityState;
use crate::ids::NodeId;
use crate::kernel::Topology;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfMgmtConfig {
    pub threshold: f64,
    pub beacon_radius: u32,
    pub beacon_strength: f64,
    pub geometric: f64,
    /// Per-tick multiplicative decay of the attraction field.
    pub field_decay: f64,
    pub hysteresis: u32,
    pub beacon_refresh: u64,
}

impl Default for SelfMgmtConfig {
    fn default() -> Self {
        SelfMgmtConfig {
            threshold: 0.5,
            beacon_radius: 3,
            beacon_strength: 4.0,
            geometric: 0.5,
            field_decay: 0.8,
            hysteresis: 3,
            beacon_refresh: 5,
        }
    }
}

/// Complementary product: `1 - prod(1 - sv_i)`.
pub fn compute_level(values: &[f64]) -> f64 {
    1.0 - values.iter().map(|v| 1.0 - v.clamp(0.0, 1.0)).product::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecurityLevel {
    pub node: NodeId,
    pub level: f64,
    pub threshold: f64,
    pub below_since: Option<u64>,
    pub last_beacon: Option<u64>,
}

impl SecurityLevel {
    pub fn new(node: NodeId, threshold: f64) -> Self {
        SecurityLevel {
            node,
            level: 0.0,
            threshold,
            below_since: None,
            last_beacon: None,
        }
    }

    pub fn is_low(&self) -> bool {
        self.level < self.threshold
    }

    pub fn update(&mut self, level: f64, now: u64) {
        self.level = level;
        if self.is_low() {
            self.below_since.get_or_insert(now);
        } else {
            self.below_since = None;
            self.last_beacon = None;
        }
    }

    /// True when a beacon should go out this tick: the node is low and either
    /// has no live beacon or the refresh period has elapsed.
    pub fn notify_if_low(&mut self, now: u64, refresh: u64) -> bool {
        if !self.is_low() {
            return false;
        }
        let due = match self.last_beacon {
            None => true,
            Some(t) => now >= t + refresh.max(1),
        };
        if due {
            self.last_beacon = Some(now);
        }
        due
    }
}

/// Per-node attraction toward under-protected origins.
#[derive(Clone, Debug, PartialEq)]
pub struct AttractionField {
    values: Vec<f64>,
    pub decay: f64,
}

impl AttractionField {
    pub const EPSILON: f64 = 1e-6;

    pub fn new(nodes: usize, decay: f64) -> Self {
        AttractionField {
            values: vec![0.0; nodes],
            decay,
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// A beacon heard `distance` hops from its origin.
    pub fn apply_beacon(&mut self, i: usize, strength: f64, geometric: f64, distance: u32) {
        self.values[i] += strength * geometric.powi(distance as i32);
    }

    pub fn decay_tick(&mut self) {
        for v in &mut self.values {
            *v *= self.decay;
            if *v < Self::EPSILON {
                *v = 0.0;
            }
        }
    }
}

/// Closed form of a single beacon's contribution over the whole topology.
pub fn beacon_profile(topo: &Topology, origin: NodeId, cfg: &SelfMgmtConfig) -> Vec<f64> {
    topo.nodes()
        .iter()
        .map(|&n| match topo.distance(origin, n) {
            Some(d) if d <= cfg.beacon_radius => cfg.beacon_strength * cfg.geometric.powi(d as i32),
            _ => 0.0,
        })
        .collect()
}

/// Next mobility state for a resident cell. `level_without` is the node's level
/// computed without this cell's contribution.
pub fn anchor_policy(
    state: MobilityState,
    streak: &mut u32,
    level_without: f64,
    security_value: f64,
    cfg: &SelfMgmtConfig,
) -> MobilityState {
    let needed = security_value > 0.0 && level_without < cfg.threshold;
    match state {
        MobilityState::Roaming if needed => {
            *streak = 0;
            MobilityState::Anchored
        }
        MobilityState::Roaming => MobilityState::Roaming,
        MobilityState::Anchored if needed => {
            *streak = 0;
            MobilityState::Anchored
        }
        MobilityState::Anchored => {
            *streak += 1;
            if *streak >= cfg.hysteresis {
                *streak = 0;
                MobilityState::Roaming
            } else {
                MobilityState::Anchored
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{NodeSpec, Role};
    use proptest::prelude::*;

    #[test]
    fn level_arithmetic() {
        assert_eq!(compute_level(&[]), 0.0);
        assert!((compute_level(&[0.6]) - 0.6).abs() < 1e-12);
        assert!((compute_level(&[0.5, 0.5, 0.2]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn beacon_only_when_low() {
        let mut high = SecurityLevel::new(NodeId(0), 0.5);
        high.update(0.9, 0);
        assert!(!high.notify_if_low(0, 5));
        let mut low = SecurityLevel::new(NodeId(0), 0.5);
        low.update(0.3, 0);
        assert!(low.notify_if_low(0, 5));
        assert!(!low.notify_if_low(1, 5));
        assert!(low.notify_if_low(5, 5));
        assert_eq!(low.below_since, Some(0));
    }

    #[test]
    fn eviction_drop_triggers_beacon() {
        // 0.62 with the detector, 0.41 without it
        let rest = [0.41];
        let with = compute_level(&[0.41, 0.355_932_203_389_830_5]);
        assert!((with - 0.62).abs() < 1e-9);
        let mut lvl = SecurityLevel::new(NodeId(3), 0.5);
        lvl.update(with, 9);
        assert!(!lvl.notify_if_low(9, 5));
        lvl.update(compute_level(&rest), 10);
        assert!(lvl.notify_if_low(10, 5));
    }

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
    fn geometric_profile() {
        let topo = line(5);
        let cfg = SelfMgmtConfig {
            beacon_radius: 2,
            ..Default::default()
        };
        assert_eq!(beacon_profile(&topo, NodeId(0), &cfg), vec![4.0, 2.0, 1.0, 0.0, 0.0]);
        let mut field = AttractionField::new(5, 0.8);
        assert!(field.values().iter().all(|v| *v == 0.0));
        for (i, d) in [(0, 0), (1, 1), (2, 2)] {
            field.apply_beacon(i, 4.0, 0.5, d);
        }
        assert_eq!(field.values(), &[4.0, 2.0, 1.0, 0.0, 0.0]);
        // superposition: a second beacon from node 2
        field.apply_beacon(1, 4.0, 0.5, 1);
        assert_eq!(field.get(1), 4.0);
    }

    #[test]
    fn field_decays_to_zero() {
        let mut field = AttractionField::new(1, 0.5);
        field.apply_beacon(0, 4.0, 0.5, 0);
        let mut prev = field.get(0);
        for _ in 0..40 {
            field.decay_tick();
            assert!(field.get(0) < prev || field.get(0) == 0.0);
            prev = field.get(0);
        }
        assert_eq!(field.get(0), 0.0);
    }

    #[test]
    fn anchoring_hysteresis() {
        let cfg = SelfMgmtConfig::default();
        let mut streak = 0;
        let s = anchor_policy(MobilityState::Roaming, &mut streak, 0.2, 0.3, &cfg);
        assert_eq!(s, MobilityState::Anchored);
        // level restored: anchored for ticks 1..3, roaming on the third restored tick's decision
        let mut states = vec![];
        let mut st = s;
        for _ in 0..4 {
            st = anchor_policy(st, &mut streak, 0.7, 0.3, &cfg);
            states.push(st);
        }
        assert_eq!(
            states,
            vec![
                MobilityState::Anchored,
                MobilityState::Anchored,
                MobilityState::Roaming,
                MobilityState::Roaming
            ]
        );
        // a cell contributing nothing never anchors
        assert_eq!(anchor_policy(MobilityState::Roaming, &mut 0, 0.0, 0.0, &cfg), MobilityState::Roaming);
    }

    proptest! {
        #[test]
        fn level_bounded_and_monotone(vals in proptest::collection::vec(0.0f64..0.999, 0..8), extra in 0.0f64..0.999) {
            let base = compute_level(&vals);
            prop_assert!((0.0..1.0).contains(&base));
            let mut more = vals.clone();
            more.push(extra);
            prop_assert!(compute_level(&more) >= base - 1e-12);
        }
    }
}
