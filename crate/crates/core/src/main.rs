use clap::{Args, Parser, Subcommand};
use immunenet::harness::export::{write_json, write_run};
use immunenet::harness::{compare, run, sweep, Mode, Scenario};
use immunenet::sim::TraceLevel;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "immunenet", version, about = "Artificial-immune network protection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    scenario: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "summary", value_parser = parse_level)]
    trace_level: TraceLevel,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(Common),
    /// Run the scenario once per protection mode.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated modes: none, baseline, sana, hybrid.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true, value_parser = parse_mode)]
        modes: Vec<Mode>,
    },
    /// Run the scenario once per seed and aggregate.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        seeds: Vec<u64>,
    },
}

fn parse_level(s: &str) -> Result<TraceLevel, String> {
    TraceLevel::parse(s).ok_or_else(|| format!("unknown trace level {s:?} (none, summary, full)"))
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode {s:?} (none, baseline, sana, hybrid)"))
}

/// Loads and validates, printing one diagnostic per line on failure.
fn load(path: &Path) -> Result<Scenario, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(2)
    })?;
    let sc: Scenario = serde_json::from_str(&text).map_err(|e| {
        eprintln!("error: invalid scenario {}", path.display());
        eprintln!("  parse: {e}");
        ExitCode::from(2)
    })?;
    let diags = sc.diagnostics();
    if !diags.is_empty() {
        eprintln!("error: invalid scenario {}", path.display());
        for d in diags {
            eprintln!("  {d}");
        }
        return Err(ExitCode::from(2));
    }
    Ok(sc)
}

fn execute(cli: Cli) -> Result<(), ExitCode> {
    let fail = |e: &dyn std::fmt::Display| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    };
    match cli.command {
        Command::Run(c) => {
            let sc = load(&c.scenario)?;
            let out = run(&sc, c.trace_level).map_err(|e| fail(&e))?;
            write_run(&c.out, &out).map_err(|e| fail(&e))?;
            let m = &out.report.metrics;
            println!(
                "{} [{}] seed {}: peak infected {} final infected {} detections {}",
                sc.name, sc.mode, sc.seed, m.peak_infected, m.final_infected, m.detections
            );
        }
        Command::Compare { common: c, modes } => {
            let sc = load(&c.scenario)?;
            if modes.len() < 2 {
                eprintln!("error: compare needs at least 2 modes, got {}", modes.len());
                return Err(ExitCode::from(2));
            }
            let (cmp, runs) = compare(&sc, &modes, c.trace_level).map_err(|e| fail(&e))?;
            for r in &runs {
                write_run(&c.out.join(r.report.mode.to_string()), r).map_err(|e| fail(&e))?;
            }
            write_json(&c.out.join("comparison.json"), &cmp).map_err(|e| fail(&e))?;
            println!("{:<28}{}", "metric", modes.iter().map(|m| format!("{:>14}", m.to_string())).collect::<String>());
            for (k, vs) in &cmp.table {
                println!("{k:<28}{}", vs.iter().map(|v| format!("{v:>14.3}")).collect::<String>());
            }
        }
        Command::Sweep { common: c, seeds } => {
            let sc = load(&c.scenario)?;
            let (sw, runs) = sweep(&sc, &seeds, c.trace_level).map_err(|e| fail(&e))?;
            for r in &runs {
                write_run(&c.out.join(format!("seed-{}", r.report.seed)), r).map_err(|e| fail(&e))?;
            }
            write_json(&c.out.join("sweep.json"), &sw).map_err(|e| fail(&e))?;
            println!("{:<28}{:>12}{:>12}{:>12}{:>12}", "metric", "mean", "min", "max", "stddev");
            for (k, s) in &sw.stats {
                println!("{k:<28}{:>12.3}{:>12.3}{:>12.3}{:>12.3}", s.mean, s.min, s.max, s.stddev);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
