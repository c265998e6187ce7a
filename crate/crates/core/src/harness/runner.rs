//! Single runs, mode comparisons and seed sweeps.

use super::metrics::MetricsReport;
use super::scenario::{Mode, Scenario};
use crate::error::{Result, SimError};
use crate::sim::{simulate, TraceBundle, TraceLevel};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub mode: Mode,
    pub seed: u64,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: TraceBundle,
}

pub fn run(sc: &Scenario, level: TraceLevel) -> Result<RunOutput> {
    let trace = simulate(sc, level)?;
    let report = RunReport {
        scenario: sc.name.clone(),
        mode: sc.mode,
        seed: sc.seed,
        metrics: MetricsReport::from_trace(&trace),
    };
    Ok(RunOutput { report, trace })
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub scenario: String,
    pub seed: u64,
    pub modes: Vec<Mode>,
    /// metric -> value per mode, in `modes` order.
    pub table: BTreeMap<String, Vec<f64>>,
    /// metric -> value minus the first mode's value.
    pub deltas: BTreeMap<String, Vec<f64>>,
}

/// Runs the scenario once per mode with the same topology, adversary and seed.
pub fn compare(sc: &Scenario, modes: &[Mode], level: TraceLevel) -> Result<(Comparison, Vec<RunOutput>)> {
    if modes.len() < 2 {
        return Err(SimError::InvalidScenario(format!(
            "modes: compare needs at least 2 modes, got {}",
            modes.len()
        )));
    }
    sc.validate()?;
    let runs: Vec<RunOutput> = modes
        .par_iter()
        .map(|&m| run(&sc.with_mode(m), level))
        .collect::<Result<_>>()?;
    let mut table: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (k, v) in r.report.metrics.scalars() {
            table.entry(k.to_string()).or_default().push(v);
        }
    }
    let deltas = table
        .iter()
        .map(|(k, vs)| (k.clone(), vs.iter().map(|v| v - vs[0]).collect()))
        .collect();
    let cmp = Comparison {
        scenario: sc.name.clone(),
        seed: sc.seed,
        modes: modes.to_vec(),
        table,
        deltas,
    };
    Ok((cmp, runs))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub stddev: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stats {
            mean,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            stddev: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Sweep {
    pub scenario: String,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub stats: BTreeMap<String, Stats>,
}

pub fn sweep(sc: &Scenario, seeds: &[u64], level: TraceLevel) -> Result<(Sweep, Vec<RunOutput>)> {
    if seeds.is_empty() {
        return Err(SimError::InvalidScenario("seeds: sweep needs at least 1 seed".into()));
    }
    sc.validate()?;
    let runs: Vec<RunOutput> = seeds
        .par_iter()
        .map(|&s| run(&sc.with_seed(s), level))
        .collect::<Result<_>>()?;
    let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        for (k, v) in r.report.metrics.scalars() {
            per_metric.entry(k.to_string()).or_default().push(v);
        }
    }
    let sw = Sweep {
        scenario: sc.name.clone(),
        mode: sc.mode,
        seeds: seeds.to_vec(),
        stats: per_metric.iter().map(|(k, v)| (k.clone(), Stats::of(v))).collect(),
    };
    Ok((sw, runs))
}
