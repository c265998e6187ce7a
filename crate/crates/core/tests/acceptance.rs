//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use immunenet::cells::{ArtificialCell, CellProgram, CellTemplate, CellType};
use immunenet::harness::canonical::{self, scenario_a, scenario_a_mutating, scenario_b, scenario_c, scenario_d};
use immunenet::harness::export::write_run;
use immunenet::harness::scenario::{Fault, Mode, Scenario};
use immunenet::harness::{run, RunOutput};
use immunenet::ids::{ComponentId, NodeId, SubstanceId};
use immunenet::kernel::{random_tree_plus_edges, NodeSpec, Role, Topology};
use immunenet::sim::{DetectionKind, Simulation, TimelineStatus, TraceLevel};
use immunenet::substances::{
    deliver, diffuse, ArtificialSubstance, Delivery, Descriptor, EntityType, Key, Message, ReceptorRegistry,
    SubstanceRouter,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(cond: bool, pass: String, fail: String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn go(sc: &Scenario) -> RunOutput {
    run(sc, TraceLevel::Summary).expect("scenario runs")
}

fn nodes_of(sc: &Scenario) -> u64 {
    Topology::from_spec(&sc.topology).unwrap().len() as u64
}

// 1. Perimeter bypass.
fn c1() -> Outcome {
    let base_sc = scenario_a(Mode::Baseline);
    let sana_sc = scenario_a(Mode::Sana);
    let n = nodes_of(&base_sc);

    // preconditions of the SANA configuration
    let matchers: u32 = sana_sc
        .cells
        .initial
        .iter()
        .filter(|i| {
            let t = &sana_sc.cells.templates[sana_sc.cells.template_index(&i.template).unwrap()];
            t.program.family() == Some(canonical::WORM_FAMILY)
        })
        .map(|i| i.count)
        .sum();
    let fusion_ok = sana_sc
        .cells
        .templates
        .iter()
        .any(|t| matches!(t.program, CellProgram::Fusion { threshold: 2, .. }));
    let repair_ok = sana_sc.cells.templates.iter().any(|t| t.program.cell_type() == CellType::Repair);
    if matchers < 2 || !fusion_ok || !repair_ok {
        return Err(format!("configuration: matchers {matchers}, fusion θ=2 {fusion_ok}, repair {repair_ok}"));
    }

    let t0 = Instant::now();
    let base = go(&base_sc).report.metrics;
    let base_secs = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let sana = go(&sana_sc).report.metrics;
    let sana_secs = t0.elapsed().as_secs_f64();

    let base_ok = base.final_infected * 100 >= 95 * n;
    let sana_ok = sana.final_infected == 0 && sana.peak_infected * 2 <= n;
    let time_ok = base_secs <= 10.0 && sana_secs <= 10.0;
    let msg = format!(
        "baseline final {}/{n}; sana final {} peak {}; runtime {base_secs:.2}s / {sana_secs:.2}s",
        base.final_infected, sana.final_infected, sana.peak_infected
    );
    check(base_ok && sana_ok && time_ok, msg.clone(), msg)
}

// 2. Paired-seed dominance.
fn c2() -> Outcome {
    let mut strictly = 0;
    let mut rows = Vec::new();
    let mut all_le = true;
    for seed in 42..52 {
        let b = go(&scenario_a(Mode::Baseline).with_seed(seed)).report.metrics;
        let s = go(&scenario_a(Mode::Sana).with_seed(seed)).report.metrics;
        all_le &= s.final_infected <= b.final_infected && s.peak_infected <= b.peak_infected;
        if s.final_infected < b.final_infected && s.peak_infected < b.peak_infected {
            strictly += 1;
        }
        rows.push(format!("{seed}:{}/{}", s.final_infected, b.final_infected));
    }
    let msg = format!("strictly lower in {strictly}/10, final sana/baseline {}", rows.join(" "));
    check(all_le && strictly >= 8, msg.clone(), msg)
}

/// Plain BFS over an adjacency list, independent of `Topology`.
fn bfs(adj: &BTreeMap<u32, Vec<u32>>, origin: u32) -> BTreeMap<u32, u64> {
    let mut dist = BTreeMap::from([(origin, 0u64)]);
    let mut q = VecDeque::from([origin]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[&u] {
            if !dist.contains_key(&v) {
                dist.insert(v, dist[&u] + 1);
                q.push_back(v);
            }
        }
    }
    dist
}

// 3. Diffusion correctness.
fn c3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut reg = ReceptorRegistry::new();
    let lock = reg.mint(Descriptor::new(EntityType::Environment, "any")).lock;
    for case in 0..100 {
        let n = rng.gen_range(2..40u32);
        let extra = rng.gen_range(0..n);
        let edges = random_tree_plus_edges(n, extra, &mut rng);
        let nodes: Vec<NodeSpec> = (0..n).map(|i| NodeSpec { id: NodeId(i), role: Role::Host }).collect();
        let topo = Topology::build(&nodes, &edges).unwrap();
        let mut adj: BTreeMap<u32, Vec<u32>> = (0..n).map(|i| (i, Vec::new())).collect();
        for (a, b) in &edges {
            adj.get_mut(&a.0).unwrap().push(b.0);
            adj.get_mut(&b.0).unwrap().push(a.0);
        }
        let origin = rng.gen_range(0..n);
        let hops = rng.gen_range(0..=5u32);
        let ttl = rng.gen_range(0..=6u64);
        let emitted = rng.gen_range(0..5u64);
        let s = ArtificialSubstance {
            id: SubstanceId(case),
            message: Message::Warning { locus: NodeId(origin) },
            hops_to_go: hops,
            time_to_live: ttl,
            locks: vec![lock],
            origin: NodeId(origin),
            emitted_at: emitted,
        };
        let mut router = SubstanceRouter::new(&topo);
        let got = diffuse(&mut router, s, emitted + 20);
        let radius = (hops as u64).min(ttl);
        let oracle: BTreeSet<(NodeId, u64)> = bfs(&adj, origin)
            .into_iter()
            .filter(|(_, d)| *d <= radius)
            .map(|(v, d)| (NodeId(v), emitted + d))
            .collect();
        let processed: BTreeSet<NodeId> = got.iter().map(|(v, _)| *v).collect();
        if processed.len() != got.len() {
            return Err(format!("case {case}: a node processed the substance twice"));
        }
        let got: BTreeSet<(NodeId, u64)> = got.into_iter().collect();
        if got != oracle {
            return Err(format!("case {case}: processed {got:?} expected {oracle:?}"));
        }
    }
    Ok("100 random cases equal the restricted-BFS oracle, no duplicate processing".into())
}

// 4. Receptor soundness.
fn c4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut reg = ReceptorRegistry::new();
    let mut foreign = ReceptorRegistry::new();
    let receptors: Vec<_> = (0..24)
        .map(|i| reg.mint(Descriptor::new(EntityType::MatcherCell, format!("r{i}"))))
        .collect();
    let forged: Vec<Key> = (0..8)
        .map(|i| foreign.mint(Descriptor::new(EntityType::MatcherCell, format!("r{i}"))).key)
        .collect();
    let mut attempts = 0u64;
    let (mut leaks, mut misses) = (0u64, 0u64);
    while attempts < 100_000 {
        let k = rng.gen_range(1..4);
        let locks: Vec<_> = receptors
            .choose_multiple(&mut rng, k)
            .map(|r| r.lock)
            .collect();
        let s = ArtificialSubstance {
            id: SubstanceId(attempts),
            message: Message::Warning { locus: NodeId(0) },
            hops_to_go: 0,
            time_to_live: 0,
            locks: locks.clone(),
            origin: NodeId(0),
            emitted_at: 0,
        };
        // ten components per substance, each with a random key ring
        for _ in 0..10 {
            let k = rng.gen_range(0..4);
            let mut keys: Vec<Key> = receptors
                .choose_multiple(&mut rng, k)
                .map(|r| r.key)
                .collect();
            if rng.gen_bool(0.2) {
                keys.push(*forged.choose(&mut rng).unwrap());
            }
            let entitled = receptors
                .iter()
                .any(|r| locks.contains(&r.lock) && keys.contains(&r.key));
            let got = matches!(deliver(&s, &keys, &reg), Delivery::Message(_));
            attempts += 1;
            if got && !entitled {
                leaks += 1;
            }
            if entitled && !got {
                misses += 1;
            }
        }
    }
    let msg = format!("{attempts} attempts: {leaks} unauthorised deliveries, {misses} missed deliveries");
    check(leaks == 0 && misses == 0, msg.clone(), msg)
}

// 5. Self-management convergence.
fn c5() -> Outcome {
    let sc = scenario_b();
    let trace = go(&sc).trace;
    let n = trace.nodes as usize;
    let threshold = sc.selfmgmt.threshold;
    let mut by_tick: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in &trace.levels {
        by_tick.entry(r.tick).or_default().push(r.level);
    }
    let covered = |t: u64| by_tick[&t].len() == n && by_tick[&t].iter().all(|l| *l >= threshold);
    let Some(conv) = (0..=200).find(|&t| (t..sc.duration).all(covered)) else {
        return Err("some node is below threshold after every tick up to 200".into());
    };
    let min_roaming = trace.population[conv as usize..]
        .iter()
        .map(|p| p.roaming as f64 / p.total().max(1) as f64)
        .fold(f64::INFINITY, f64::min);
    let pop = trace.population[0].total();
    let msg = format!(
        "population {pop} (demand {}), all nodes >= {threshold} from tick {conv} through {}, min roaming share {min_roaming:.2}",
        canonical::B_DEMAND,
        sc.duration - 1
    );
    check(pop >= 3 * canonical::B_DEMAND && min_roaming >= 0.2, msg.clone(), msg)
}

// 6. Population steady state.
fn c6() -> Outcome {
    let sc = scenario_d();
    let trace = go(&sc).trace;
    let mean_life = (canonical::D_LIFETIME.0 + canonical::D_LIFETIME.1) as f64 / 2.0;
    let target = canonical::D_RATE * mean_life;
    let band = 3.0 * target.sqrt();
    let post: Vec<u32> = trace.population[canonical::D_BURN_IN as usize..].iter().map(|p| p.total()).collect();
    let lo = *post.iter().min().unwrap() as f64;
    let hi = *post.iter().max().unwrap() as f64;
    let msg = format!(
        "{} ticks after burn-in: population in [{lo}, {hi}], allowed {target} ± {band:.1}",
        post.len()
    );
    check(post.len() >= 2000 && lo >= target - band && hi <= target + band, msg.clone(), msg)
}

// 7. Danger-model adaptation.
fn c7() -> Outcome {
    let with = go(&scenario_a_mutating(Mode::Sana, true)).report.metrics;
    let without = go(&scenario_a_mutating(Mode::Sana, false)).report.metrics;

    // warning-free decay against the closed form, with an explicit logarithm base
    let (delta, theta) = (0.9f64, 1.0f64);
    let tpl = CellTemplate {
        name: "m".into(),
        program: CellProgram::Matcher { rule: canonical::worm_signature() },
        security_value: 0.1,
        lifetime: (10, 10),
    };
    let mut arithmetic_ok = true;
    for warnings in [2u32, 5, 13, 40] {
        let mut cell = ArtificialCell::new(ComponentId(1), 0, &tpl, Vec::new(), 0, 10, NodeId(0));
        for _ in 0..warnings {
            cell.receive_warning();
        }
        let level0 = cell.danger_level;
        let bound = ((theta / level0).log(delta)).ceil() as u64;
        let mut ticks = 0;
        while cell.danger_level >= theta {
            cell.decay_danger(delta);
            ticks += 1;
        }
        arithmetic_ok &= ticks <= bound;
    }
    let msg = format!(
        "family matches {} with warnings; final infected {} with warnings vs {} without; decay bound holds {arithmetic_ok}",
        with.family_detections, with.final_infected, without.final_infected
    );
    check(
        with.family_detections >= 1 && with.final_infected < without.final_infected && arithmetic_ok,
        msg.clone(),
        msg,
    )
}

// 8. Offline boot.
fn c8() -> Outcome {
    let node = canonical::C_NODE;
    let boot = canonical::C_BOOT_AT;
    let bound = 25;
    let sana = go(&scenario_c(Mode::Sana)).trace;
    let flagged = sana
        .detections
        .iter()
        .find(|d| d.kind == DetectionKind::Silent && d.implicated == node && d.tick >= boot)
        .map(|d| d.tick);
    let quarantined = sana
        .timeline
        .iter()
        .find(|r| r.node == node && r.status == TimelineStatus::Quarantined)
        .map(|r| r.tick);
    let admin = sana.admin.iter().any(|a| a.node == Some(node));
    let base = go(&scenario_c(Mode::Baseline)).trace;
    let base_flagged = base.detections.iter().any(|d| d.implicated == node);
    let within = |t: Option<u64>| t.is_some_and(|t| t <= boot + bound);
    let msg = format!(
        "boot at {boot}: flagged silent at {flagged:?}, quarantined at {quarantined:?}, admin informed {admin}; baseline flagged {base_flagged}"
    );
    check(within(flagged) && within(quarantined) && admin && !base_flagged, msg.clone(), msg)
}

// 9. Efficiency proxy on identical, benign traffic.
fn c9() -> Outcome {
    let mut sc = scenario_a(Mode::Baseline);
    sc.adversary.worms.clear();
    let base = go(&sc).report.metrics;
    let sana = go(&sc.with_mode(Mode::Sana)).report.metrics;
    if base.packets_sent != sana.packets_sent {
        return Err(format!("traffic differs: {} vs {}", base.packets_sent, sana.packets_sent));
    }
    let msg = format!(
        "{} packets; redundant checks/packet sana {:.4} vs baseline {:.4} (delta {:.4}); inspections/packet sana {:.3} vs baseline {:.3}",
        base.packets_sent,
        sana.redundant_checks_per_packet,
        base.redundant_checks_per_packet,
        sana.redundant_checks_per_packet - base.redundant_checks_per_packet,
        sana.inspections_per_packet,
        base.inspections_per_packet
    );
    check(sana.redundant_checks_per_packet <= base.redundant_checks_per_packet, msg.clone(), msg)
}

fn bundle_bytes(sc: &Scenario) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let out = run(sc, TraceLevel::Full).unwrap();
    write_run(dir.path(), &out).unwrap();
    std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

// 10. Determinism.
fn c10() -> Outcome {
    let mut files = 0;
    for sc in [scenario_a(Mode::Sana), scenario_a_mutating(Mode::Hybrid, true), scenario_c(Mode::Sana)] {
        let a = bundle_bytes(&sc);
        let b = bundle_bytes(&sc);
        if a != b {
            let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
            return Err(format!("{}: files differ {differing:?}", sc.name));
        }
        files += a.len();
    }
    Ok(format!("3 scenarios replayed, {files} exported files byte-identical"))
}

// 11. Single-failure tolerance.
fn c11() -> Outcome {
    let sc = scenario_a(Mode::Sana);
    if sc.lymph.count < 2 || sc.cnts.count < 2 || sc.cnts.redundancy_min < 2 {
        return Err("scenario A lacks redundancy".into());
    }
    let at = 100;
    let mut probe = Simulation::new(&sc, TraceLevel::None).unwrap();
    probe.run_until(at - 1).unwrap();
    let cells: Vec<ComponentId> = probe.cells().map(|c| c.id).collect();
    let mut faults: Vec<Fault> = cells
        .iter()
        .map(|&c| Fault::DeleteCell {
            at,
            cell: Some(c),
            cell_type: None,
            nth: 0,
        })
        .collect();
    faults.extend((0..sc.lymph.count as usize).map(|index| Fault::DisableLymph { at, index }));
    faults.extend((0..sc.cnts.count as usize).map(|index| Fault::DisableCnts { at, index }));
    let total = faults.len();
    let mut broken = Vec::new();
    for f in faults {
        let mut s = sc.clone();
        s.faults = vec![f.clone()];
        let m = run(&s, TraceLevel::None).unwrap().report.metrics;
        if m.final_infected != 0 || m.peak_infected * 2 > m.nodes as u64 {
            broken.push(format!("{f:?}"));
        }
    }
    let msg = format!(
        "{total} single failures at tick {at} ({} cells, {} lymph, {} CNTS): {} broke the outcome",
        cells.len(),
        sc.lymph.count,
        sc.cnts.count,
        broken.len()
    );
    check(broken.is_empty(), msg.clone(), format!("{msg}: {broken:?}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("perimeter bypass", c1),
        ("paired-seed dominance", c2),
        ("diffusion correctness", c3),
        ("receptor soundness", c4),
        ("self-management convergence", c5),
        ("population steady state", c6),
        ("danger-model adaptation", c7),
        ("offline boot", c8),
        ("efficiency proxy", c9),
        ("determinism", c10),
        ("single-failure tolerance", c11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2} {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        match f() {
            Ok(detail) => println!("PASS {label}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {label}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
