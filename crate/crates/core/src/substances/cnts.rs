pub use crate::cells::CellTemplate;

use super::{AlertKind, Message};
use crate::cells::CellType;
use crate::ids::{ComponentId, FamilyId, NodeId};
use rand::Rng;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// What a CNTS has learned from the substances that reached it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SituationView {
    pub alerts_by_family: BTreeMap<FamilyId, u64>,
    recent: VecDeque<(u64, FamilyId)>,
    pub released_by_type: BTreeMap<CellType, u64>,
    pub deaths_by_type: BTreeMap<CellType, u64>,
    pub infected_known: BTreeSet<NodeId>,
    pub quarantined_known: BTreeSet<NodeId>,
    pub stale_components: BTreeSet<ComponentId>,
}

impl SituationView {
    pub fn live_by_type(&self, t: CellType) -> u64 {
        let r = self.released_by_type.get(&t).copied().unwrap_or(0);
        let d = self.deaths_by_type.get(&t).copied().unwrap_or(0);
        r.saturating_sub(d)
    }

    /// Share of recent intrusion alerts per family.
    pub fn recent_shares(&self) -> BTreeMap<FamilyId, f64> {
        let total = self.recent.len() as f64;
        let mut out: BTreeMap<FamilyId, f64> = BTreeMap::new();
        for (_, f) in &self.recent {
            *out.entry(*f).or_default() += 1.0;
        }
        for v in out.values_mut() {
            *v /= total;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CntsSnapshot {
    pub tick: u64,
    pub host: NodeId,
    pub population_by_type: BTreeMap<CellType, u64>,
    pub infected_nodes: Vec<NodeId>,
    pub quarantined_nodes: Vec<NodeId>,
    pub alerts_by_family: BTreeMap<FamilyId, u64>,
    pub stale_components: Vec<ComponentId>,
}

#[derive(Clone, Debug)]
pub struct Cnts {
    pub id: ComponentId,
    pub host: NodeId,
    pub generation_rate: f64,
    accumulator: f64,
    pub templates: Vec<CellTemplate>,
    base_mix: Vec<f64>,
    mix: Vec<f64>,
    pub reweight_step: f64,
    pub window: u64,
    pub redundancy_min: u64,
    pub situation: SituationView,
    pending: VecDeque<(FamilyId, u32)>,
    pub active: bool,
}

impl Cnts {
    pub fn new(
        id: ComponentId,
        host: NodeId,
        generation_rate: f64,
        templates: Vec<CellTemplate>,
        mix: Vec<f64>,
    ) -> Self {
        let base_mix = normalize(&mix);
        Cnts {
            id,
            host,
            generation_rate: generation_rate.max(0.0),
            accumulator: 0.0,
            templates,
            mix: base_mix.clone(),
            base_mix,
            reweight_step: 0.5,
            window: 50,
            redundancy_min: 0,
            situation: SituationView::default(),
            pending: VecDeque::new(),
            active: true,
        }
    }

    pub fn type_mix(&self) -> &[f64] {
        &self.mix
    }

    /// Folds an incoming substance into the situation view.
    pub fn observe(&mut self, msg: &Message, now: u64) {
        let s = &mut self.situation;
        match msg {
            Message::Alert(a) => match a.kind {
                AlertKind::Intrusion => {
                    if let Some(f) = a.family() {
                        *s.alerts_by_family.entry(f).or_default() += 1;
                        s.recent.push_back((now, f));
                    }
                    s.infected_known.insert(a.implicated);
                }
                AlertKind::Stale => {
                    s.stale_components.insert(a.source);
                }
                AlertKind::Silent | AlertKind::Eviction => {}
            },
            Message::QuarantineRequest { node, .. } => {
                s.quarantined_known.insert(*node);
            }
            Message::DeathRecord { cell_type, .. } => {
                *s.deaths_by_type.entry(*cell_type).or_default() += 1;
            }
            Message::CellRelease { family, count } => {
                self.pending.push_back((*family, *count));
            }
            _ => {}
        }
    }

    /// Recomputes the type mix: each matcher template of family F gains
    /// `reweight_step * share(F)` over its base weight, then all are normalised.
    pub fn reweight(&mut self, now: u64) {
        let window = self.window;
        while self
            .situation
            .recent
            .front()
            .is_some_and(|(t, _)| t + window < now)
        {
            self.situation.recent.pop_front();
        }
        let shares = self.situation.recent_shares();
        let raw: Vec<f64> = self
            .templates
            .iter()
            .zip(&self.base_mix)
            .map(|(t, w)| {
                let bonus = t
                    .program
                    .family()
                    .and_then(|f| shares.get(&f))
                    .copied()
                    .unwrap_or(0.0);
                w + self.reweight_step * bonus
            })
            .collect();
        self.mix = normalize(&raw);
    }

    fn pick<R: Rng>(&mut self, rng: &mut R) -> Option<usize> {
        if let Some((family, count)) = self.pending.front_mut() {
            let f = *family;
            *count -= 1;
            if *count == 0 {
                self.pending.pop_front();
            }
            if let Some(i) = self.templates.iter().position(|t| t.program.family() == Some(f)) {
                return Some(i);
            }
        }
        if self.redundancy_min > 0 {
            for t in CellType::ALL {
                if self.situation.live_by_type(t) < self.redundancy_min {
                    if let Some(i) = self.templates.iter().position(|x| x.program.cell_type() == t) {
                        return Some(i);
                    }
                }
            }
        }
        if self.templates.is_empty() {
            return None;
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, w) in self.mix.iter().enumerate() {
            acc += w;
            if u < acc {
                return Some(i);
            }
        }
        Some(self.templates.len() - 1)
    }

    /// Template indices of the cells to mint this tick. Fractional rates accumulate.
    pub fn generate<R: Rng>(&mut self, now: u64, rng: &mut R) -> Vec<usize> {
        if !self.active {
            return Vec::new();
        }
        self.reweight(now);
        self.accumulator += self.generation_rate;
        let n = (self.accumulator + 1e-9).floor();
        self.accumulator -= n;
        let extra: u32 = self.pending.iter().map(|(_, c)| *c).sum();
        let mut out = Vec::new();
        for _ in 0..(n as u64 + extra as u64) {
            if let Some(i) = self.pick(rng) {
                let t = self.templates[i].program.cell_type();
                *self.situation.released_by_type.entry(t).or_default() += 1;
                out.push(i);
            }
        }
        out
    }

    pub fn snapshot(&self, tick: u64) -> CntsSnapshot {
        let s = &self.situation;
        CntsSnapshot {
            tick,
            host: self.host,
            population_by_type: CellType::ALL
                .iter()
                .map(|&t| (t, s.live_by_type(t)))
                .collect(),
            infected_nodes: s.infected_known.iter().copied().collect(),
            quarantined_nodes: s.quarantined_known.iter().copied().collect(),
            alerts_by_family: s.alerts_by_family.clone(),
            stale_components: s.stale_components.iter().copied().collect(),
        }
    }
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let total: f64 = w.iter().map(|x| x.max(0.0)).sum();
    if total <= 0.0 {
        return vec![1.0 / w.len().max(1) as f64; w.len()];
    }
    w.iter().map(|x| x.max(0.0) / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::IntrusionSignature;
    use crate::cells::CellProgram;
    use crate::ids::SigId;
    use crate::kernel::seeded_rng;
    use crate::substances::AlertInfo;

    fn templates() -> Vec<CellTemplate> {
        let m = |sig: u32| CellTemplate {
            name: format!("m{sig}"),
            program: CellProgram::Matcher {
                rule: IntrusionSignature::original(SigId(sig)),
            },
            security_value: 0.3,
            lifetime: (10, 20),
        };
        vec![
            m(1),
            m(2),
            CellTemplate {
                name: "fusion".into(),
                program: CellProgram::Fusion {
                    window: 10,
                    threshold: 2,
                },
                security_value: 0.2,
                lifetime: (10, 20),
            },
        ]
    }

    fn alert(fam: u32) -> Message {
        Message::Alert(AlertInfo {
            source: ComponentId(1),
            kind: AlertKind::Intrusion,
            implicated: NodeId(1),
            locus: NodeId(1),
            sig: Some(IntrusionSignature::original(SigId(fam))),
            raised_at: 0,
        })
    }

    #[test]
    fn zero_rate_mints_nothing() {
        let mut c = Cnts::new(ComponentId(1), NodeId(0), 0.0, templates(), vec![1.0, 1.0, 1.0]);
        let mut rng = seeded_rng(1, 1);
        assert!((0..100).all(|t| c.generate(t, &mut rng).is_empty()));
    }

    #[test]
    fn fractional_rate_accumulates() {
        let mut c = Cnts::new(ComponentId(1), NodeId(0), 2.5, templates(), vec![1.0, 1.0, 1.0]);
        let mut rng = seeded_rng(1, 1);
        let counts: Vec<usize> = (0..4).map(|t| c.generate(t, &mut rng).len()).collect();
        assert_eq!(counts, vec![2, 3, 2, 3]);
        assert_eq!(counts.iter().sum::<usize>(), 10);
    }

    #[test]
    fn reweight_toward_alerting_family() {
        let mut c = Cnts::new(ComponentId(1), NodeId(0), 1.0, templates(), vec![0.25, 0.25, 0.5]);
        c.reweight_step = 0.5;
        for _ in 0..8 {
            c.observe(&alert(1), 0);
        }
        for _ in 0..2 {
            c.observe(&alert(2), 0);
        }
        c.reweight(0);
        // by hand: raw = [0.25 + 0.5*0.8, 0.25 + 0.5*0.2, 0.5] = [0.65, 0.35, 0.5]; sum 1.5
        let expect = [0.65 / 1.5, 0.35 / 1.5, 0.5 / 1.5];
        for (a, b) in c.type_mix().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(c.type_mix()[0] > 0.25);
    }

    #[test]
    fn release_requests_are_honoured() {
        let mut c = Cnts::new(ComponentId(1), NodeId(0), 0.0, templates(), vec![1.0, 1.0, 1.0]);
        c.observe(
            &Message::CellRelease {
                family: FamilyId(2),
                count: 2,
            },
            0,
        );
        let mut rng = seeded_rng(1, 1);
        assert_eq!(c.generate(1, &mut rng), vec![1, 1]);
        assert!(c.generate(2, &mut rng).is_empty());
    }

    #[test]
    fn fresh_snapshot_is_zero_except_population() {
        let mut c = Cnts::new(ComponentId(1), NodeId(0), 1.0, templates(), vec![1.0, 0.0, 0.0]);
        let mut rng = seeded_rng(1, 1);
        c.generate(0, &mut rng);
        let s = c.snapshot(0);
        assert_eq!(s.population_by_type[&CellType::Matcher], 1);
        assert!(s.infected_nodes.is_empty() && s.quarantined_nodes.is_empty());
        assert!(s.alerts_by_family.is_empty() && s.stale_components.is_empty());
    }
}
