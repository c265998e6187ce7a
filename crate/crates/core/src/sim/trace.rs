//! Everything a run records. Metrics are computed from this bundle alone.

use crate::cells::CellType;
use crate::ids::{ComponentId, FamilyId, NodeId, SigId, SubstanceId};
use crate::substances::SubstanceAction;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    None,
    #[default]
    Summary,
    Full,
}

impl TraceLevel {
    pub fn parse(s: &str) -> Option<TraceLevel> {
        match s {
            "none" => Some(TraceLevel::None),
            "summary" => Some(TraceLevel::Summary),
            "full" => Some(TraceLevel::Full),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventRecord {
    pub tick: u64,
    pub kind: &'static str,
    pub node: NodeId,
    pub detail: String,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimelineStatus {
    Infected,
    Quarantined,
    Disinfected,
    Released,
}

impl TimelineStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TimelineStatus::Infected => "infected",
            TimelineStatus::Quarantined => "quarantined",
            TimelineStatus::Disinfected => "disinfected",
            TimelineStatus::Released => "released",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimelineRecord {
    pub tick: u64,
    pub node: NodeId,
    pub status: TimelineStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditRecord {
    pub tick: u64,
    pub node: NodeId,
    pub component: ComponentId,
    pub event_kind: &'static str,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelRecord {
    pub tick: u64,
    pub node: NodeId,
    pub level: f64,
    pub attraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdminRecord {
    pub tick: u64,
    pub source: ComponentId,
    pub node: Option<NodeId>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PopulationRecord {
    pub tick: u64,
    pub matcher: u32,
    pub fusion: u32,
    pub prober: u32,
    pub repair: u32,
    pub roaming: u32,
    pub anchored: u32,
    pub in_transit: u32,
}

impl PopulationRecord {
    pub fn total(&self) -> u32 {
        self.matcher + self.fusion + self.prober + self.repair
    }

    pub fn count(&self, t: CellType) -> u32 {
        match t {
            CellType::Matcher => self.matcher,
            CellType::Fusion => self.fusion,
            CellType::Prober => self.prober,
            CellType::Repair => self.repair,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKind {
    /// A classic detector (IDS rule or antivirus) matched.
    Classic,
    Exact,
    /// Danger-sensitised family match by a matcher cell.
    Family,
    Silent,
    Stale,
}

impl DetectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionKind::Classic => "classic",
            DetectionKind::Exact => "exact",
            DetectionKind::Family => "family",
            DetectionKind::Silent => "silent",
            DetectionKind::Stale => "stale",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub tick: u64,
    /// Node where the detector ran.
    pub node: NodeId,
    pub implicated: NodeId,
    pub component: ComponentId,
    pub kind: DetectionKind,
    pub family: Option<FamilyId>,
    pub sig: Option<SigId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntroductionRecord {
    pub tick: u64,
    pub family: FamilyId,
    pub node: NodeId,
    pub via: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SentRecord {
    pub tick: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub sig: Option<SigId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TickCounters {
    pub tick: u64,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub packets_unroutable: u64,
    pub data_hops: u64,
    pub inspections: u64,
    pub redundant_checks: u64,
    pub reused_checks: u64,
    pub protection_messages: u64,
    pub mutant_packets: u64,
    pub mutant_detected: u64,
    pub log_entries: u64,
    pub staleness_sum: u64,
    pub staleness_components: u64,
    pub infected: u64,
    pub quarantined: u64,
    pub nodes_covered: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubstanceTraceRecord {
    pub tick: u64,
    pub substance: SubstanceId,
    pub node: NodeId,
    pub action: SubstanceAction,
}

/// Records of one run. Event, audit and substance traces are kept only at
/// full trace level; everything else is always recorded.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TraceBundle {
    pub level: TraceLevel,
    pub nodes: u32,
    pub duration: u64,
    pub threshold: f64,
    pub events: Vec<EventRecord>,
    pub audit: Vec<AuditRecord>,
    pub substances: Vec<SubstanceTraceRecord>,
    pub timeline: Vec<TimelineRecord>,
    pub levels: Vec<LevelRecord>,
    pub admin: Vec<AdminRecord>,
    pub population: Vec<PopulationRecord>,
    pub counters: Vec<TickCounters>,
    pub detections: Vec<DetectionRecord>,
    pub introductions: Vec<IntroductionRecord>,
    pub sent: Vec<SentRecord>,
    pub final_infected: Vec<NodeId>,
    pub final_quarantined: Vec<NodeId>,
}

impl TraceBundle {
    pub fn full(&self) -> bool {
        self.level == TraceLevel::Full
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::from("tick,kind,node,detail\n");
        for r in &self.events {
            let _ = writeln!(s, "{},{},{},{}", r.tick, r.kind, r.node.0, csv_field(&r.detail));
        }
        s
    }

    pub fn timeline_csv(&self) -> String {
        let mut s = String::from("tick,node,status\n");
        for r in &self.timeline {
            let _ = writeln!(s, "{},{},{}", r.tick, r.node.0, r.status.as_str());
        }
        s
    }

    pub fn audit_csv(&self) -> String {
        let mut s = String::from("tick,node,component,event_kind,verdict\n");
        for r in &self.audit {
            let _ = writeln!(s, "{},{},{},{},{}", r.tick, r.node.0, r.component.0, r.event_kind, r.verdict);
        }
        s
    }

    pub fn substances_csv(&self) -> String {
        let mut s = String::from("tick,substance_id,node,action\n");
        for r in &self.substances {
            let _ = writeln!(s, "{},{},{},{}", r.tick, r.substance.0, r.node.0, r.action);
        }
        s
    }

    pub fn levels_csv(&self) -> String {
        let mut s = String::from("tick,node,level,attraction\n");
        for r in &self.levels {
            let _ = writeln!(s, "{},{},{:.6},{:.6}", r.tick, r.node.0, r.level, r.attraction);
        }
        s
    }

    /// One JSON object per line.
    pub fn admin_feed(&self) -> String {
        let mut s = String::new();
        for r in &self.admin {
            s.push_str(&serde_json::to_string(r).expect("admin record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn population_csv(&self) -> String {
        let mut s = String::from("tick,matcher,fusion,prober,repair,roaming,anchored,in_transit\n");
        for r in &self.population {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.tick, r.matcher, r.fusion, r.prober, r.repair, r.roaming, r.anchored, r.in_transit
            );
        }
        s
    }

    pub fn counters_csv(&self) -> String {
        let mut s = String::from(
            "tick,packets_sent,packets_delivered,packets_dropped,packets_unroutable,data_hops,inspections,\
redundant_checks,reused_checks,protection_messages,mutant_packets,mutant_detected,log_entries,\
staleness_sum,staleness_components,infected,quarantined,nodes_covered\n",
        );
        for c in &self.counters {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                c.tick,
                c.packets_sent,
                c.packets_delivered,
                c.packets_dropped,
                c.packets_unroutable,
                c.data_hops,
                c.inspections,
                c.redundant_checks,
                c.reused_checks,
                c.protection_messages,
                c.mutant_packets,
                c.mutant_detected,
                c.log_entries,
                c.staleness_sum,
                c.staleness_components,
                c.infected,
                c.quarantined,
                c.nodes_covered
            );
        }
        s
    }

    pub fn detections_csv(&self) -> String {
        let mut s = String::from("tick,node,implicated,component,kind,family,sig\n");
        for r in &self.detections {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.tick,
                r.node.0,
                r.implicated.0,
                r.component.0,
                r.kind.as_str(),
                r.family.map(|f| f.0.to_string()).unwrap_or_default(),
                r.sig.map(|f| f.0.to_string()).unwrap_or_default()
            );
        }
        s
    }

    /// File name and contents of every export that applies at this trace level.
    pub fn files(&self) -> Vec<(&'static str, String)> {
        if self.level == TraceLevel::None {
            return Vec::new();
        }
        let mut out = vec![
            ("infections.csv", self.timeline_csv()),
            ("levels.csv", self.levels_csv()),
            ("admin_feed.jsonl", self.admin_feed()),
            ("population.csv", self.population_csv()),
            ("counters.csv", self.counters_csv()),
            ("detections.csv", self.detections_csv()),
        ];
        if self.full() {
            out.push(("events.csv", self.events_csv()));
            out.push(("audit.csv", self.audit_csv()));
            out.push(("substances.csv", self.substances_csv()));
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
