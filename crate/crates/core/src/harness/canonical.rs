//! Desk-scale reference scenarios used by the acceptance suite and shipped
//! as JSON under `scenarios/`.

use super::scenario::{
    AdversaryConfig, AntivirusSpec, CellsConfig, ClassicConfig, CntsConfig, FilterSpec, InitialCells, LymphConfig, Mode,
    Scenario,
};
use crate::adversary::{BackgroundSpec, IntrusionSignature, OfflineBoot, WormSpec};
use crate::cells::{CellProgram, CellTemplate};
use crate::components::{HeaderPredicate, Rule, RuleAction, RuleMatch, RuleSet};
use crate::ids::{FamilyId, NodeId, SigId};
use crate::kernel::{Protocol, TopologySpec};

/// The worm of scenario A.
pub const WORM_SIG: SigId = SigId(100);
pub const WORM_FAMILY: FamilyId = FamilyId(100);
/// Internal host the worm enters through.
pub const WORM_ENTRY: NodeId = NodeId(37);

pub fn worm_signature() -> IntrusionSignature {
    IntrusionSignature::original(WORM_SIG)
}

fn telnet_drop() -> Rule {
    Rule {
        matcher: RuleMatch::Header(HeaderPredicate::port(23)),
        action: RuleAction::Drop,
    }
}

fn matcher(name: &str, sig: IntrusionSignature, sv: f64, lifetime: (u64, u64)) -> CellTemplate {
    CellTemplate {
        name: name.into(),
        program: CellProgram::Matcher { rule: sig },
        security_value: sv,
        lifetime,
    }
}

fn initial(template: &str, count: u32) -> InitialCells {
    InitialCells {
        template: template.into(),
        count,
        at: Vec::new(),
    }
}

/// Classic stack with a perimeter IDS on the gateway (node 0) only. The IDS
/// knows the worm; host antivirus does not.
fn perimeter_stack() -> ClassicConfig {
    ClassicConfig {
        antivirus: Some(AntivirusSpec {
            security_value: 0.2,
            update_period: 10,
            known: Vec::new(),
        }),
        firewall: Some(FilterSpec {
            security_value: 0.2,
            rules: RuleSet::new(vec![telnet_drop()]),
        }),
        packet_filter: Some(FilterSpec {
            security_value: 0.2,
            rules: RuleSet::new(vec![telnet_drop()]),
        }),
        ids: Some(FilterSpec {
            security_value: 0.4,
            rules: RuleSet::new(vec![
                Rule {
                    matcher: RuleMatch::Sig(WORM_SIG),
                    action: RuleAction::Drop,
                },
                telnet_drop(),
            ]),
        }),
        ids_nodes: Some(vec![NodeId(0)]),
        ..Default::default()
    }
}

/// Classic components switched off entirely.
pub fn no_classic() -> ClassicConfig {
    ClassicConfig {
        antivirus: None,
        firewall: None,
        packet_filter: None,
        ids: None,
        ids_nodes: None,
        ..Default::default()
    }
}

/// Scenario A: internal-entry worm on a 50-node network with a perimeter-only IDS.
pub fn scenario_a(mode: Mode) -> Scenario {
    let worm = worm_signature();
    Scenario {
        name: "A-perimeter-bypass".into(),
        seed: 42,
        duration: 500,
        mode,
        topology: TopologySpec::Generated {
            nodes: 50,
            extra_edges: 25,
            seed: 42,
            equipment: 5,
        },
        classic: perimeter_stack(),
        cells: CellsConfig {
            templates: vec![
                matcher("matcher-worm", worm, 0.3, (150, 250)),
                CellTemplate {
                    name: "fusion".into(),
                    program: CellProgram::Fusion { window: 10, threshold: 2 },
                    security_value: 0.1,
                    lifetime: (150, 250),
                },
                CellTemplate {
                    name: "repair".into(),
                    program: CellProgram::Repair {
                        families: [WORM_FAMILY].into(),
                    },
                    security_value: 0.1,
                    lifetime: (150, 250),
                },
                CellTemplate {
                    name: "prober".into(),
                    program: CellProgram::Prober {
                        period: 10,
                        staleness_bound: 30,
                        radius: 2,
                    },
                    security_value: 0.1,
                    lifetime: (150, 250),
                },
            ],
            initial: vec![
                initial("matcher-worm", 24),
                initial("fusion", 10),
                initial("repair", 8),
                initial("prober", 4),
            ],
            ..Default::default()
        },
        cnts: CntsConfig {
            count: 2,
            generation_rate: 0.25,
            mix: vec![0.5, 0.2, 0.2, 0.1],
            redundancy_min: 2,
            ..Default::default()
        },
        lymph: LymphConfig {
            count: 2,
            ..Default::default()
        },
        adversary: AdversaryConfig {
            background: BackgroundSpec {
                rate: 10,
                ..Default::default()
            },
            worms: vec![WormSpec {
                signature: worm,
                entry_node: WORM_ENTRY,
                fanout: 2,
                vulnerability_set: Default::default(),
                mutation_rate: 0.0,
                protocol: Protocol::Smb,
                start_tick: 5,
            }],
            offline: Vec::new(),
        },
        ..base()
    }
}

/// Scenario A with a worm that mutates into generation-1 variants of its family.
pub fn scenario_a_mutating(mode: Mode, warnings: bool) -> Scenario {
    let mut sc = scenario_a(mode);
    sc.name = "A-mutating-worm".into();
    sc.adversary.worms[0].mutation_rate = 0.5;
    sc.response.warnings = warnings;
    sc
}

pub const B_NODES: u32 = 30;
/// Cells needed to lift every node of scenario B to the threshold: one per node.
pub const B_DEMAND: u32 = B_NODES;

/// Scenario B: self-management with no adversary and a fixed population of
/// three times the coverage demand.
pub fn scenario_b() -> Scenario {
    Scenario {
        name: "B-self-management".into(),
        seed: 7,
        duration: 1000,
        mode: Mode::Sana,
        topology: TopologySpec::Generated {
            nodes: B_NODES,
            extra_edges: 10,
            seed: 7,
            equipment: 3,
        },
        classic: no_classic(),
        cells: CellsConfig {
            templates: vec![matcher("guard", worm_signature(), 0.5, (5000, 5000))],
            initial: vec![initial("guard", 3 * B_DEMAND)],
            ..Default::default()
        },
        ..base()
    }
}

pub const C_NODE: NodeId = NodeId(12);
pub const C_BOOT_AT: u64 = 20;
pub const C_BLACKOUT: u64 = 10;
pub const C_PROBE_PERIOD: u64 = 10;

/// Scenario C: a node boots from an infected disk and stays dark for a while.
pub fn scenario_c(mode: Mode) -> Scenario {
    let offline = IntrusionSignature::original(SigId(200));
    Scenario {
        name: "C-offline-boot".into(),
        seed: 3,
        duration: 200,
        mode,
        topology: TopologySpec::Generated {
            nodes: 20,
            extra_edges: 8,
            seed: 3,
            equipment: 2,
        },
        classic: ClassicConfig::default(),
        cells: CellsConfig {
            templates: vec![
                CellTemplate {
                    name: "prober".into(),
                    program: CellProgram::Prober {
                        period: C_PROBE_PERIOD,
                        staleness_bound: 30,
                        radius: 2,
                    },
                    security_value: 0.2,
                    lifetime: (400, 400),
                },
                CellTemplate {
                    name: "repair".into(),
                    program: CellProgram::Repair { families: [FamilyId(200)].into() },
                    security_value: 0.1,
                    lifetime: (400, 400),
                },
            ],
            initial: vec![initial("prober", 8), initial("repair", 3)],
            ..Default::default()
        },
        adversary: AdversaryConfig {
            offline: vec![OfflineBoot {
                node: C_NODE,
                signature: offline,
                at: C_BOOT_AT,
                blackout: C_BLACKOUT,
            }],
            ..Default::default()
        },
        ..base()
    }
}

pub const D_RATE: f64 = 2.0;
pub const D_LIFETIME: (u64, u64) = (50, 150);
pub const D_BURN_IN: u64 = 200;

/// Scenario D: continuous cell generation against finite lifetimes.
pub fn scenario_d() -> Scenario {
    Scenario {
        name: "D-population".into(),
        seed: 11,
        duration: D_BURN_IN + 2000,
        mode: Mode::Sana,
        topology: TopologySpec::Generated {
            nodes: 30,
            extra_edges: 10,
            seed: 11,
            equipment: 3,
        },
        classic: no_classic(),
        cells: CellsConfig {
            templates: vec![matcher("matcher", worm_signature(), 0.2, D_LIFETIME)],
            ..Default::default()
        },
        cnts: CntsConfig {
            generation_rate: D_RATE,
            ..Default::default()
        },
        ..base()
    }
}

fn base() -> Scenario {
    Scenario {
        name: String::new(),
        seed: 0,
        duration: 0,
        mode: Mode::None,
        topology: TopologySpec::Generated {
            nodes: 2,
            extra_edges: 0,
            seed: 0,
            equipment: 0,
        },
        classic: Default::default(),
        cells: Default::default(),
        cnts: Default::default(),
        lymph: Default::default(),
        selfmgmt: Default::default(),
        substances: Default::default(),
        response: Default::default(),
        adversary: Default::default(),
        faults: Vec::new(),
    }
}

/// Every shipped scenario with its file name.
pub fn all() -> Vec<(&'static str, Scenario)> {
    vec![
        ("a_baseline.json", scenario_a(Mode::Baseline)),
        ("a_sana.json", scenario_a(Mode::Sana)),
        ("a_mutating.json", scenario_a_mutating(Mode::Sana, true)),
        ("b_self_management.json", scenario_b()),
        ("c_offline_boot.json", scenario_c(Mode::Sana)),
        ("d_population.json", scenario_d()),
    ]
}
