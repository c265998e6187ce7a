//! Scenario files: one self-contained JSON document per run.

use crate::adversary::{BackgroundSpec, OfflineBoot, WormSpec};
use crate::cells::{CellProgram, CellTemplate, CellType};
use crate::components::{HeaderPredicate, Rule, RuleAction, RuleMatch, RuleSet, UpdateServer};
use crate::error::{Result, SimError};
use crate::ids::{ComponentId, NodeId, SigId};
use crate::kernel::{Topology, TopologySpec};
use crate::selfmgmt::SelfMgmtConfig;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    None,
    Baseline,
    Sana,
    Hybrid,
}

impl Mode {
    pub fn has_classic(self) -> bool {
        !matches!(self, Mode::None)
    }

    pub fn has_cells(self) -> bool {
        matches!(self, Mode::Sana | Mode::Hybrid)
    }

    /// Check results are shared between the components of a node.
    pub fn shares_checks(self) -> bool {
        matches!(self, Mode::Sana)
    }

    /// Classic detector alerts are wrapped into substances instead of a local log.
    pub fn classic_alerts_as_substances(self) -> bool {
        matches!(self, Mode::Sana)
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "none" => Some(Mode::None),
            "baseline" => Some(Mode::Baseline),
            "sana" => Some(Mode::Sana),
            "hybrid" => Some(Mode::Hybrid),
            _ => None,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::None => "none",
            Mode::Baseline => "baseline",
            Mode::Sana => "sana",
            Mode::Hybrid => "hybrid",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub security_value: f64,
    #[serde(default)]
    pub rules: RuleSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntivirusSpec {
    pub security_value: f64,
    #[serde(default = "ten")]
    pub update_period: u64,
    #[serde(default)]
    pub known: Vec<SigId>,
}

fn ten() -> u64 {
    10
}

fn telnet_drop() -> RuleSet {
    RuleSet::new(vec![Rule {
        matcher: RuleMatch::Header(HeaderPredicate::port(23)),
        action: RuleAction::Drop,
    }])
}

/// The classic stack: antivirus and firewall on hosts, packet filters on
/// switches/routers, IDS on the gateway and email server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicConfig {
    pub antivirus: Option<AntivirusSpec>,
    pub firewall: Option<FilterSpec>,
    pub packet_filter: Option<FilterSpec>,
    pub ids: Option<FilterSpec>,
    /// Overrides the default IDS placement.
    pub ids_nodes: Option<Vec<NodeId>>,
    pub update_server: UpdateServer,
    /// Nodes whose antivirus updater is broken.
    pub failed_updaters: Vec<NodeId>,
}

impl Default for ClassicConfig {
    fn default() -> Self {
        ClassicConfig {
            antivirus: Some(AntivirusSpec {
                security_value: 0.2,
                update_period: 10,
                known: Vec::new(),
            }),
            firewall: Some(FilterSpec {
                security_value: 0.2,
                rules: telnet_drop(),
            }),
            packet_filter: Some(FilterSpec {
                security_value: 0.2,
                rules: telnet_drop(),
            }),
            ids: Some(FilterSpec {
                security_value: 0.4,
                rules: telnet_drop(),
            }),
            ids_nodes: None,
            update_server: UpdateServer::default(),
            failed_updaters: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialCells {
    pub template: String,
    pub count: u32,
    /// Fixed starting nodes, cycled; empty means uniformly random nodes.
    #[serde(default)]
    pub at: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellsConfig {
    pub templates: Vec<CellTemplate>,
    pub initial: Vec<InitialCells>,
    pub danger_decay: f64,
    pub danger_threshold: f64,
    /// Probability mass spread uniformly over migration choices.
    pub autonomy: f64,
    /// Ticks a resident roaming cell waits between migration decisions.
    pub migration_interval: u64,
}

impl Default for CellsConfig {
    fn default() -> Self {
        CellsConfig {
            templates: Vec::new(),
            initial: Vec::new(),
            danger_decay: 0.9,
            danger_threshold: 1.0,
            autonomy: 0.1,
            migration_interval: 1,
        }
    }
}

impl CellsConfig {
    pub fn template_index(&self, name: &str) -> Option<usize> {
        self.templates.iter().position(|t| t.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CntsConfig {
    pub count: u32,
    pub hosts: Vec<NodeId>,
    pub generation_rate: f64,
    /// Weight per template, in template order. Empty means uniform.
    pub mix: Vec<f64>,
    pub reweight_step: f64,
    pub window: u64,
    pub redundancy_min: u64,
}

impl Default for CntsConfig {
    fn default() -> Self {
        CntsConfig {
            count: 1,
            hosts: Vec::new(),
            generation_rate: 0.0,
            mix: Vec::new(),
            reweight_step: 0.5,
            window: 50,
            redundancy_min: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LymphConfig {
    pub count: u32,
    pub hosts: Vec<NodeId>,
    pub flood_threshold: usize,
    pub window: u64,
    pub release_count: u32,
}

impl Default for LymphConfig {
    fn default() -> Self {
        LymphConfig {
            count: 1,
            hosts: Vec::new(),
            flood_threshold: 5,
            window: 20,
            release_count: 2,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reach {
    pub hops: u32,
    pub ttl: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubstanceConfig {
    pub alert: Reach,
    pub warning: Reach,
    pub quarantine: Reach,
    pub status: Reach,
    /// Death records and messages relayed to a CNTS.
    pub to_cnts: Reach,
    pub beacon_ttl: u64,
}

impl Default for SubstanceConfig {
    fn default() -> Self {
        SubstanceConfig {
            alert: Reach { hops: 3, ttl: 5 },
            warning: Reach { hops: 2, ttl: 4 },
            quarantine: Reach { hops: 8, ttl: 12 },
            status: Reach { hops: 3, ttl: 5 },
            to_cnts: Reach { hops: 10, ttl: 12 },
            beacon_ttl: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseConfig {
    /// Quiet ticks after disinfection before a quarantine lifts.
    pub observation: u64,
    /// A quarantined, uncleared node repeats its quarantine request this often.
    pub rerequest: u64,
    /// Infected nodes touch an infected file this often.
    pub activity_period: u64,
    /// Warning substances (detector warnings and damage signals).
    pub warnings: bool,
}

impl Default for ResponseConfig {
    fn default() -> Self {
        ResponseConfig {
            observation: 5,
            rerequest: 10,
            activity_period: 5,
            warnings: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversaryConfig {
    pub background: BackgroundSpec,
    pub worms: Vec<WormSpec>,
    pub offline: Vec<OfflineBoot>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RogueBehavior {
    UnauthorizedResource,
    BudgetExceeded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fault {
    /// Removes one live cell. `nth` indexes live cells of `cell_type` in id order.
    DeleteCell {
        at: u64,
        #[serde(default)]
        cell: Option<ComponentId>,
        #[serde(default)]
        cell_type: Option<CellType>,
        #[serde(default)]
        nth: usize,
    },
    DisableLymph { at: u64, index: usize },
    DisableCnts { at: u64, index: usize },
    /// The first classic component at `node` starts misbehaving.
    RogueComponent { at: u64, node: NodeId, behavior: RogueBehavior },
}

impl Fault {
    pub fn at(&self) -> u64 {
        match self {
            Fault::DeleteCell { at, .. }
            | Fault::DisableLymph { at, .. }
            | Fault::DisableCnts { at, .. }
            | Fault::RogueComponent { at, .. } => *at,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub duration: u64,
    pub mode: Mode,
    pub topology: TopologySpec,
    #[serde(default)]
    pub classic: ClassicConfig,
    #[serde(default)]
    pub cells: CellsConfig,
    #[serde(default)]
    pub cnts: CntsConfig,
    #[serde(default)]
    pub lymph: LymphConfig,
    #[serde(default)]
    pub selfmgmt: SelfMgmtConfig,
    #[serde(default)]
    pub substances: SubstanceConfig,
    #[serde(default)]
    pub response: ResponseConfig,
    #[serde(default)]
    pub adversary: AdversaryConfig,
    #[serde(default)]
    pub faults: Vec<Fault>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(format!("parse: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidScenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Scenario { mode, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Scenario { seed, ..self.clone() }
    }

    /// Every problem found, as `field: message` lines.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut d = Vec::new();
        let topo = match Topology::from_spec(&self.topology) {
            Ok(t) => Some(t),
            Err(e) => {
                d.push(format!("topology: {e}"));
                None
            }
        };
        let node_ok = |n: NodeId| topo.as_ref().is_none_or(|t| t.contains(n));
        let unit = |x: f64| (0.0..=1.0).contains(&x);

        for (name, sv) in [
            ("classic.antivirus", self.classic.antivirus.as_ref().map(|a| a.security_value)),
            ("classic.firewall", self.classic.firewall.as_ref().map(|a| a.security_value)),
            ("classic.packet_filter", self.classic.packet_filter.as_ref().map(|a| a.security_value)),
            ("classic.ids", self.classic.ids.as_ref().map(|a| a.security_value)),
        ] {
            if let Some(v) = sv {
                if !unit(v) {
                    d.push(format!("{name}.security_value: {v} is outside [0,1]"));
                }
            }
        }
        if let Some(av) = &self.classic.antivirus {
            if av.update_period == 0 {
                d.push("classic.antivirus.update_period: must be >= 1".into());
            }
        }
        for n in self.classic.ids_nodes.iter().flatten().chain(&self.classic.failed_updaters) {
            if !node_ok(*n) {
                d.push(format!("classic: unknown node {n}"));
            }
        }

        for (i, t) in self.cells.templates.iter().enumerate() {
            let p = format!("cells.templates[{i}]");
            if !unit(t.security_value) {
                d.push(format!("{p}.security_value: {} is outside [0,1]", t.security_value));
            }
            if t.lifetime.0 == 0 || t.lifetime.0 > t.lifetime.1 {
                d.push(format!("{p}.lifetime: need 1 <= min <= max, got {:?}", t.lifetime));
            }
            match &t.program {
                CellProgram::Fusion { threshold, .. } if *threshold == 0 => {
                    d.push(format!("{p}.program.threshold: must be >= 1"));
                }
                CellProgram::Prober { period, .. } if *period == 0 => {
                    d.push(format!("{p}.program.period: must be >= 1"));
                }
                _ => {}
            }
            if self.cells.templates[..i].iter().any(|o| o.name == t.name) {
                d.push(format!("{p}.name: duplicate template name {:?}", t.name));
            }
        }
        for (i, ic) in self.cells.initial.iter().enumerate() {
            if self.cells.template_index(&ic.template).is_none() {
                d.push(format!("cells.initial[{i}].template: unknown template {:?}", ic.template));
            }
            for n in &ic.at {
                if !node_ok(*n) {
                    d.push(format!("cells.initial[{i}].at: unknown node {n}"));
                }
            }
        }
        if !unit(self.cells.autonomy) {
            d.push("cells.autonomy: must be in [0,1]".into());
        }
        if !(self.cells.danger_decay > 0.0 && self.cells.danger_decay < 1.0) {
            d.push("cells.danger_decay: must be in (0,1)".into());
        }
        if self.cells.migration_interval == 0 {
            d.push("cells.migration_interval: must be >= 1".into());
        }

        if self.cnts.generation_rate < 0.0 || !self.cnts.generation_rate.is_finite() {
            d.push("cnts.generation_rate: must be a finite number >= 0".into());
        }
        if !self.cnts.mix.is_empty() && self.cnts.mix.len() != self.cells.templates.len() {
            d.push(format!(
                "cnts.mix: {} weights for {} templates",
                self.cnts.mix.len(),
                self.cells.templates.len()
            ));
        }
        if self.cnts.mix.iter().any(|w| *w < 0.0) {
            d.push("cnts.mix: weights must be >= 0".into());
        }
        if self.mode.has_cells() && self.cnts.generation_rate > 0.0 && self.cells.templates.is_empty() {
            d.push("cells.templates: a generating CNTS needs at least one template".into());
        }
        for n in self.cnts.hosts.iter().chain(&self.lymph.hosts) {
            if !node_ok(*n) {
                d.push(format!("cnts/lymph hosts: unknown node {n}"));
            }
        }

        let sm = &self.selfmgmt;
        if !unit(sm.threshold) {
            d.push("selfmgmt.threshold: must be in [0,1]".into());
        }
        if !(sm.geometric > 0.0 && sm.geometric <= 1.0) {
            d.push("selfmgmt.geometric: must be in (0,1]".into());
        }
        if !(sm.field_decay >= 0.0 && sm.field_decay < 1.0) {
            d.push("selfmgmt.field_decay: must be in [0,1)".into());
        }

        for (i, w) in self.adversary.worms.iter().enumerate() {
            let p = format!("adversary.worms[{i}]");
            if w.fanout == 0 {
                d.push(format!("{p}.fanout: must be >= 1"));
            }
            if !unit(w.mutation_rate) {
                d.push(format!("{p}.mutation_rate: must be in [0,1]"));
            }
            if !node_ok(w.entry_node) {
                d.push(format!("{p}.entry_node: unknown node {}", w.entry_node));
            }
            for n in &w.vulnerability_set {
                if !node_ok(*n) {
                    d.push(format!("{p}.vulnerability_set: unknown node {n}"));
                }
            }
        }
        for (i, o) in self.adversary.offline.iter().enumerate() {
            if !node_ok(o.node) {
                d.push(format!("adversary.offline[{i}].node: unknown node {}", o.node));
            }
        }
        let bg = &self.adversary.background;
        if bg.rate > 0 && (bg.mix.is_empty() || bg.mix.iter().any(|(_, w)| *w < 0.0) || bg.mix.iter().all(|(_, w)| *w == 0.0)) {
            d.push("adversary.background.mix: needs positive weights".into());
        }
        for (i, f) in self.faults.iter().enumerate() {
            match f {
                Fault::DisableLymph { index, .. } if *index >= self.lymph.count as usize => {
                    d.push(format!("faults[{i}].index: only {} lymph nodes", self.lymph.count));
                }
                Fault::DisableCnts { index, .. } if *index >= self.cnts.count as usize => {
                    d.push(format!("faults[{i}].index: only {} CNTS instances", self.cnts.count));
                }
                Fault::RogueComponent { node, .. } if !node_ok(*node) => {
                    d.push(format!("faults[{i}].node: unknown node {node}"));
                }
                _ => {}
            }
        }
        d
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnostics();
        if d.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidScenario(d.join("; ")))
        }
    }
}
