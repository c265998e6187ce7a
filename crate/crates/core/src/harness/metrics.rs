//! Run metrics, computed from a [`TraceBundle`] and nothing else.

use crate::ids::{FamilyId, NodeId};
use crate::sim::{DetectionKind, TimelineStatus, TraceBundle};
use serde::Serialize;
use std::collections::BTreeSet;

/// Ticks from the first appearance of an intrusion family to its first detection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionLatency {
    pub family: FamilyId,
    pub node: NodeId,
    pub introduced_at: u64,
    pub detected_at: Option<u64>,
    pub latency: Option<u64>,
}

/// Measured proxies for the five design criteria.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scorecard {
    /// Mean fraction of nodes whose level is at or above the threshold.
    pub completeness: f64,
    /// Inspections per data packet sent.
    pub efficiency: f64,
    /// Protection-plane messages as a share of all traffic.
    pub non_interference: f64,
    pub mean_staleness: f64,
    pub unread_log_entries: u64,
    /// Fraction of mutated packets caught by some detector.
    pub adaptivity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub duration: u64,
    pub nodes: u32,
    pub infected_series: Vec<u64>,
    pub peak_infected: u64,
    pub peak_tick: u64,
    pub final_infected: u64,
    pub ever_infected: u64,
    pub quarantines: u64,
    pub disinfections: u64,
    pub detections: u64,
    pub family_detections: u64,
    pub silent_detections: u64,
    pub detection_latency: Vec<DetectionLatency>,
    pub packets_sent: u64,
    pub packets_delivered: u64,
    pub packets_dropped: u64,
    pub data_hops: u64,
    pub inspections: u64,
    pub redundant_checks: u64,
    pub reused_checks: u64,
    pub inspections_per_packet: f64,
    pub redundant_checks_per_packet: f64,
    /// Inspections per node per tick.
    pub inspections_per_node_tick: f64,
    pub protection_messages: u64,
    pub admin_feed_volume: u64,
    pub mean_population: f64,
    pub final_population: u32,
    pub scorecard: Scorecard,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl MetricsReport {
    pub fn from_trace(t: &TraceBundle) -> Self {
        let sum = |f: fn(&crate::sim::TickCounters) -> u64| t.counters.iter().map(f).sum::<u64>();
        let infected_series: Vec<u64> = t.counters.iter().map(|c| c.infected).collect();
        let (peak_tick, peak_infected) = infected_series
            .iter()
            .enumerate()
            .fold((0u64, 0u64), |(bt, bv), (i, &v)| if v > bv { (i as u64, v) } else { (bt, bv) });
        let count_status = |s: TimelineStatus| t.timeline.iter().filter(|r| r.status == s).count() as u64;
        let ever: BTreeSet<NodeId> = t
            .timeline
            .iter()
            .filter(|r| r.status == TimelineStatus::Infected)
            .map(|r| r.node)
            .collect();

        let detection_latency = t
            .introductions
            .iter()
            .map(|intro| {
                let detected_at = t
                    .detections
                    .iter()
                    .filter(|d| d.tick >= intro.tick)
                    .find(|d| d.family == Some(intro.family) || (d.kind == DetectionKind::Silent && d.implicated == intro.node))
                    .map(|d| d.tick);
                DetectionLatency {
                    family: intro.family,
                    node: intro.node,
                    introduced_at: intro.tick,
                    detected_at,
                    latency: detected_at.map(|d| d - intro.tick),
                }
            })
            .collect();

        let packets_sent = sum(|c| c.packets_sent);
        let inspections = sum(|c| c.inspections);
        let redundant_checks = sum(|c| c.redundant_checks);
        let data_hops = sum(|c| c.data_hops);
        let protection_messages = sum(|c| c.protection_messages);
        let node_ticks = t.nodes as u64 * t.counters.len() as u64;
        let mutants = sum(|c| c.mutant_packets);
        let pop: Vec<u32> = t.population.iter().map(|p| p.total()).collect();

        MetricsReport {
            duration: t.duration,
            nodes: t.nodes,
            peak_infected,
            peak_tick,
            final_infected: infected_series.last().copied().unwrap_or(0),
            infected_series,
            ever_infected: ever.len() as u64,
            quarantines: count_status(TimelineStatus::Quarantined),
            disinfections: count_status(TimelineStatus::Disinfected),
            detections: t.detections.len() as u64,
            family_detections: t.detections.iter().filter(|d| d.kind == DetectionKind::Family).count() as u64,
            silent_detections: t.detections.iter().filter(|d| d.kind == DetectionKind::Silent).count() as u64,
            detection_latency,
            packets_sent,
            packets_delivered: sum(|c| c.packets_delivered),
            packets_dropped: sum(|c| c.packets_dropped),
            data_hops,
            inspections,
            redundant_checks,
            reused_checks: sum(|c| c.reused_checks),
            inspections_per_packet: ratio(inspections, packets_sent),
            redundant_checks_per_packet: ratio(redundant_checks, packets_sent),
            inspections_per_node_tick: ratio(inspections, node_ticks),
            protection_messages,
            admin_feed_volume: t.admin.len() as u64,
            mean_population: ratio(pop.iter().map(|&p| p as u64).sum(), pop.len() as u64),
            final_population: pop.last().copied().unwrap_or(0),
            scorecard: Scorecard {
                completeness: ratio(sum(|c| c.nodes_covered), node_ticks),
                efficiency: ratio(inspections, packets_sent),
                non_interference: ratio(protection_messages, protection_messages + data_hops),
                mean_staleness: ratio(sum(|c| c.staleness_sum), sum(|c| c.staleness_components)),
                unread_log_entries: sum(|c| c.log_entries),
                adaptivity: (mutants > 0).then(|| ratio(sum(|c| c.mutant_detected), mutants)),
            },
        }
    }

    /// Named scalar metrics, for seed aggregation and comparison deltas.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("final_infected", self.final_infected as f64),
            ("peak_infected", self.peak_infected as f64),
            ("ever_infected", self.ever_infected as f64),
            ("quarantines", self.quarantines as f64),
            ("disinfections", self.disinfections as f64),
            ("detections", self.detections as f64),
            ("packets_sent", self.packets_sent as f64),
            ("inspections", self.inspections as f64),
            ("redundant_checks", self.redundant_checks as f64),
            ("inspections_per_packet", self.inspections_per_packet),
            ("redundant_checks_per_packet", self.redundant_checks_per_packet),
            ("protection_messages", self.protection_messages as f64),
            ("admin_feed_volume", self.admin_feed_volume as f64),
            ("mean_population", self.mean_population),
            ("completeness", self.scorecard.completeness),
            ("non_interference", self.scorecard.non_interference),
            ("mean_staleness", self.scorecard.mean_staleness),
            ("unread_log_entries", self.scorecard.unread_log_entries as f64),
        ]
    }
}
