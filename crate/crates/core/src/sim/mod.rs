//! The integrated simulation: kernel, adversary, classic stack, cells,
//! substances and self-management driven tick by tick.

mod handlers;
pub mod trace;

pub use trace::{
    AdminRecord, AuditRecord, DetectionKind, DetectionRecord, EventRecord, IntroductionRecord, LevelRecord,
    PopulationRecord, SentRecord, SubstanceTraceRecord, TickCounters, TimelineRecord, TimelineStatus, TraceBundle,
    TraceLevel,
};

use crate::adversary::{
    emit_background, offline_infect, worm_step, InfectionState, IntrusionSignature, SignatureRegistry, WormRuntime,
};
use crate::cells::{ArtificialCell, CellProgram, CellType, MobilityState};
use crate::components::{central_update, ClassicComponent, SignatureDB, UpdatePolicy, UpdateServer};
use crate::error::Result;
use crate::harness::scenario::{Fault, Mode, Reach, RogueBehavior, Scenario};
use crate::ids::{ComponentId, FamilyId, NodeId, SubstanceId};
use crate::kernel::{seeded_rng, send_packet, EventKind, Kernel, Packet, SimRng, Topology, ADVERSARY_STREAM, PROTECTION_STREAM};
use crate::secenv::{BehaviorProbe, CheckOutcome, ComponentHandle, ComponentKind, ResourceKind, SecurityEnvironment};
use crate::selfmgmt::{compute_level, AttractionField, SecurityLevel};
use crate::substances::{
    AlertInfo, AlertKind, ArtificialSubstance, Cnts, Descriptor, EntityType, Key, LymphNode, Message, Receptor,
    ReceptorRegistry, SubstanceAction, SubstanceRouter,
};
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Clone, Debug)]
pub enum Timer {
    Poll { component: ComponentId },
    Probe { cell: ComponentId },
}

#[derive(Clone, Debug)]
pub enum Payload {
    Packet(Packet),
    Substance {
        at: NodeId,
        substance: Arc<ArtificialSubstance>,
    },
    File(FileEvent),
    Timer(Timer),
    Migration { cell: ComponentId },
    Expiry { cell: ComponentId },
    Generation { cnts: usize },
}

impl From<Packet> for Payload {
    fn from(p: Packet) -> Self {
        Payload::Packet(p)
    }
}

#[derive(Clone, Debug)]
pub struct FileEvent {
    pub node: NodeId,
    pub sigs: Vec<IntrusionSignature>,
    pub implicated: NodeId,
    /// A detector on the delivering path already matched the payload.
    pub neutralized: bool,
    /// Periodic activity of an infected node rather than a delivered payload.
    pub activity: bool,
}

/// Keys and locks minted once per run.
struct Receptors {
    registry: ReceptorRegistry,
    entity: BTreeMap<EntityType, Receptor>,
    resource: BTreeMap<ResourceKind, Receptor>,
}

impl Receptors {
    fn new() -> Self {
        let mut registry = ReceptorRegistry::new();
        let entity = [
            EntityType::MatcherCell,
            EntityType::FusionCell,
            EntityType::ProberCell,
            EntityType::RepairCell,
            EntityType::LymphNode,
            EntityType::Cnts,
            EntityType::Environment,
            EntityType::Antivirus,
            EntityType::Firewall,
            EntityType::PacketFilter,
            EntityType::Ids,
        ]
        .into_iter()
        .map(|e| (e, registry.mint(Descriptor::new(e, "active"))))
        .collect();
        let resource = [ResourceKind::Storage, ResourceKind::Memory, ResourceKind::Cpu, ResourceKind::Network]
            .into_iter()
            .map(|r| (r, registry.mint(Descriptor::new(EntityType::Resource, format!("{r:?}")))))
            .collect();
        Receptors {
            registry,
            entity,
            resource,
        }
    }

    fn key(&self, e: EntityType) -> Key {
        self.entity[&e].key
    }

    fn keys(&self, e: EntityType, resources: &[ResourceKind]) -> Vec<Key> {
        let mut k = vec![self.key(e)];
        k.extend(resources.iter().map(|r| self.resource[r].key));
        k
    }

    fn policy(&self) -> BTreeMap<ResourceKind, crate::substances::Lock> {
        self.resource.iter().map(|(r, rc)| (*r, rc.lock)).collect()
    }
}

fn cell_entity(t: CellType) -> EntityType {
    match t {
        CellType::Matcher => EntityType::MatcherCell,
        CellType::Fusion => EntityType::FusionCell,
        CellType::Prober => EntityType::ProberCell,
        CellType::Repair => EntityType::RepairCell,
    }
}

const CELL_RESOURCES: [ResourceKind; 3] = [ResourceKind::Network, ResourceKind::Cpu, ResourceKind::Memory];

#[derive(Clone, Debug, Default)]
struct QuarantineState {
    family: Option<FamilyId>,
    last_request: u64,
    cleared_at: Option<u64>,
}

pub struct Simulation {
    sc: Scenario,
    mode: Mode,
    topo: Topology,
    kernel: Kernel<Payload>,
    adv_rng: SimRng,
    rng: SimRng,
    sig_registry: SignatureRegistry,
    infection: InfectionState,
    worms: Vec<WormRuntime>,
    envs: Vec<SecurityEnvironment>,
    classic: BTreeMap<ComponentId, ClassicComponent>,
    server: UpdateServer,
    receptors: Receptors,
    cells: BTreeMap<ComponentId, ArtificialCell>,
    lymphs: Vec<(ComponentId, LymphNode)>,
    cnts: Vec<(ComponentId, Cnts)>,
    router: SubstanceRouter,
    levels: Vec<SecurityLevel>,
    field: AttractionField,
    quarantine: BTreeMap<NodeId, QuarantineState>,
    last_implicated: BTreeMap<NodeId, u64>,
    blackout: BTreeSet<NodeId>,
    rogue: BTreeMap<ComponentId, RogueBehavior>,
    substance_expiry: BTreeMap<u64, Vec<SubstanceId>>,
    next_packet: u64,
    next_substance: u64,
    next_component: u64,
    counters: TickCounters,
    trace: TraceBundle,
}

impl Simulation {
    pub fn new(sc: &Scenario, level: TraceLevel) -> Result<Self> {
        sc.validate()?;
        let topo = Topology::from_spec(&sc.topology)?;
        let n = topo.len();
        let receptors = Receptors::new();
        let envs = topo
            .nodes()
            .iter()
            .map(|&id| SecurityEnvironment::new(id, receptors.policy()))
            .collect();
        let mut sig_registry = SignatureRegistry::new(1);
        for w in &sc.adversary.worms {
            sig_registry.register_original(w.signature);
        }
        for o in &sc.adversary.offline {
            sig_registry.register_original(o.signature);
        }
        let levels = topo
            .nodes()
            .iter()
            .map(|&id| SecurityLevel::new(id, sc.selfmgmt.threshold))
            .collect();
        let mut sim = Simulation {
            mode: sc.mode,
            kernel: Kernel::new(),
            adv_rng: seeded_rng(sc.seed, ADVERSARY_STREAM),
            rng: seeded_rng(sc.seed, PROTECTION_STREAM),
            sig_registry,
            infection: InfectionState::new(&topo),
            worms: sc.adversary.worms.iter().cloned().map(WormRuntime::new).collect(),
            envs,
            classic: BTreeMap::new(),
            server: sc.classic.update_server.clone(),
            receptors,
            cells: BTreeMap::new(),
            lymphs: Vec::new(),
            cnts: Vec::new(),
            router: SubstanceRouter::new(&topo),
            levels,
            field: AttractionField::new(n, sc.selfmgmt.field_decay),
            quarantine: BTreeMap::new(),
            last_implicated: BTreeMap::new(),
            blackout: BTreeSet::new(),
            rogue: BTreeMap::new(),
            substance_expiry: BTreeMap::new(),
            next_packet: 0,
            next_substance: 0,
            next_component: 1,
            counters: TickCounters::default(),
            trace: TraceBundle {
                level,
                nodes: n as u32,
                duration: sc.duration,
                threshold: sc.selfmgmt.threshold,
                ..Default::default()
            },
            topo,
            sc: sc.clone(),
        };
        if sim.mode.has_classic() {
            sim.install_classic()?;
        }
        if sim.mode.has_cells() {
            sim.install_protection_plane()?;
        }
        Ok(sim)
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn infection(&self) -> &InfectionState {
        &self.infection
    }

    pub fn cells(&self) -> impl Iterator<Item = &ArtificialCell> {
        self.cells.values()
    }

    pub fn env(&self, node: NodeId) -> &SecurityEnvironment {
        &self.envs[self.topo.idx(node).expect("known node")]
    }

    pub fn level(&self, node: NodeId) -> f64 {
        self.levels[self.topo.idx(node).expect("known node")].level
    }

    pub fn tick(&self) -> u64 {
        self.kernel.tick()
    }

    fn fresh_component(&mut self) -> ComponentId {
        let id = ComponentId(self.next_component);
        self.next_component += 1;
        id
    }

    fn idx(&self, n: NodeId) -> usize {
        self.topo.idx(n).expect("node belongs to topology")
    }

    fn install_classic(&mut self) -> Result<()> {
        let cfg = self.sc.classic.clone();
        let ids_nodes: BTreeSet<NodeId> = match &cfg.ids_nodes {
            Some(v) => v.iter().copied().collect(),
            None => self
                .topo
                .nodes()
                .iter()
                .copied()
                .filter(|&n| {
                    matches!(
                        self.topo.role(n),
                        Some(crate::kernel::Role::Gateway | crate::kernel::Role::EmailServer)
                    )
                })
                .collect(),
        };
        let r = &self.receptors;
        let fw_keys = r.keys(EntityType::Firewall, &[ResourceKind::Network, ResourceKind::Cpu, ResourceKind::Memory]);
        let pf_keys = r.keys(EntityType::PacketFilter, &[ResourceKind::Network, ResourceKind::Cpu, ResourceKind::Memory]);
        let ids_keys = r.keys(EntityType::Ids, &[ResourceKind::Network, ResourceKind::Cpu, ResourceKind::Memory]);
        let av_keys = r.keys(EntityType::Antivirus, &[ResourceKind::Storage, ResourceKind::Cpu, ResourceKind::Memory]);
        for node in self.topo.nodes().to_vec() {
            let role = self.topo.role(node).expect("known node");
            let mut install: Vec<(ComponentKind, Vec<Key>, f64, crate::components::RuleSet)> = Vec::new();
            if role.is_host_like() {
                if let Some(fw) = &cfg.firewall {
                    install.push((ComponentKind::Firewall, fw_keys.clone(), fw.security_value, fw.rules.clone()));
                }
            }
            if matches!(role, crate::kernel::Role::Switch | crate::kernel::Role::Router) {
                if let Some(pf) = &cfg.packet_filter {
                    install.push((ComponentKind::PacketFilter, pf_keys.clone(), pf.security_value, pf.rules.clone()));
                }
            }
            if ids_nodes.contains(&node) {
                if let Some(ids) = &cfg.ids {
                    install.push((ComponentKind::Ids, ids_keys.clone(), ids.security_value, ids.rules.clone()));
                }
            }
            if role.is_host_like() {
                if let Some(av) = &cfg.antivirus {
                    install.push((ComponentKind::Antivirus, av_keys.clone(), av.security_value, Default::default()));
                }
            }
            for (kind, keys, sv, rules) in install {
                let id = self.fresh_component();
                let (db, update) = if kind == ComponentKind::Antivirus {
                    let av = cfg.antivirus.as_ref().expect("antivirus configured");
                    (
                        SignatureDB::with_known(av.known.iter().copied()),
                        UpdatePolicy {
                            period: av.update_period,
                            failed: cfg.failed_updaters.contains(&node),
                        },
                    )
                } else {
                    (SignatureDB::default(), UpdatePolicy::default())
                };
                let events: &[EventKind] = if kind == ComponentKind::Antivirus {
                    &[EventKind::FileAccess, EventKind::ComponentTimer]
                } else {
                    &[EventKind::PacketArrival]
                };
                let i = self.idx(node);
                self.envs[i].register(ComponentHandle::new(id, kind, keys, sv), events)?;
                if kind == ComponentKind::Antivirus {
                    self.kernel.schedule_in(0, EventKind::ComponentTimer, Payload::Timer(Timer::Poll { component: id }));
                }
                self.classic.insert(
                    id,
                    ClassicComponent {
                        id,
                        kind,
                        node,
                        rules,
                        db,
                        update,
                        security_value: sv,
                    },
                );
            }
        }
        Ok(())
    }

    /// Protection-plane hosts ranked by equipment first, then degree, then id.
    fn plane_hosts(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self.topo.nodes().to_vec();
        v.sort_by_key(|&n| {
            let eq = self.topo.role(n).is_some_and(|r| r.is_equipment());
            (!eq, std::cmp::Reverse(self.topo.degree(n)), n)
        });
        v
    }

    fn install_protection_plane(&mut self) -> Result<()> {
        let ranked = self.plane_hosts();
        let pick = |explicit: &[NodeId], count: u32, offset: usize| -> Vec<NodeId> {
            if !explicit.is_empty() {
                return (0..count as usize).map(|i| explicit[i % explicit.len()]).collect();
            }
            (0..count as usize).map(|i| ranked[(offset + i) % ranked.len()]).collect()
        };
        let lymph_hosts = pick(&self.sc.lymph.hosts, self.sc.lymph.count, 0);
        let cnts_hosts = pick(&self.sc.cnts.hosts, self.sc.cnts.count, self.sc.lymph.count as usize);
        for host in lymph_hosts {
            let id = self.fresh_component();
            let mut l = LymphNode::new(id, host, self.sc.lymph.flood_threshold, self.sc.lymph.window);
            l.release_count = self.sc.lymph.release_count;
            let keys = self.receptors.keys(EntityType::LymphNode, &[ResourceKind::Network, ResourceKind::Memory]);
            let i = self.idx(host);
            self.envs[i].register(ComponentHandle::new(id, ComponentKind::LymphNode, keys, 0.0), &[EventKind::SubstanceArrival])?;
            self.lymphs.push((id, l));
        }
        let mix = if self.sc.cnts.mix.is_empty() {
            vec![1.0; self.sc.cells.templates.len()]
        } else {
            self.sc.cnts.mix.clone()
        };
        for (k, host) in cnts_hosts.into_iter().enumerate() {
            let id = self.fresh_component();
            let mut c = Cnts::new(id, host, self.sc.cnts.generation_rate, self.sc.cells.templates.clone(), mix.clone());
            c.reweight_step = self.sc.cnts.reweight_step;
            c.window = self.sc.cnts.window;
            c.redundancy_min = self.sc.cnts.redundancy_min;
            let keys = self.receptors.keys(EntityType::Cnts, &CELL_RESOURCES);
            let i = self.idx(host);
            self.envs[i].register(ComponentHandle::new(id, ComponentKind::Cnts, keys, 0.0), &[EventKind::SubstanceArrival])?;
            self.cnts.push((id, c));
            self.kernel.schedule_in(1, EventKind::CntsGeneration, Payload::Generation { cnts: k });
        }
        let initial = self.sc.cells.initial.clone();
        for ic in &initial {
            let t = self.sc.cells.template_index(&ic.template).expect("validated template");
            for j in 0..ic.count as usize {
                let at = if ic.at.is_empty() {
                    let nodes = self.topo.nodes();
                    nodes[self.rng.gen_range(0..nodes.len())]
                } else {
                    ic.at[j % ic.at.len()]
                };
                self.mint_cell(t, at)?;
            }
        }
        Ok(())
    }

    fn mint_cell(&mut self, template: usize, at: NodeId) -> Result<ComponentId> {
        let tpl = self.sc.cells.templates[template].clone();
        let id = self.fresh_component();
        let now = self.kernel.tick();
        let lifetime = tpl.draw_lifetime(&mut self.rng);
        let ty = tpl.program.cell_type();
        let keys = self.receptors.keys(cell_entity(ty), &CELL_RESOURCES);
        let cell = ArtificialCell::new(id, template, &tpl, keys, now, lifetime, at);
        self.kernel.schedule_in(lifetime.max(1), EventKind::CellExpiry, Payload::Expiry { cell: id });
        self.kernel
            .schedule_in(self.sc.cells.migration_interval, EventKind::CellMigration, Payload::Migration { cell: id });
        if let CellProgram::Prober { period, .. } = tpl.program {
            let next = (now / period + 1) * period;
            self.kernel
                .schedule_in(next - now, EventKind::ComponentTimer, Payload::Timer(Timer::Probe { cell: id }));
        }
        self.cells.insert(id, cell);
        self.register_cell(id, at)?;
        Ok(id)
    }

    fn register_cell(&mut self, id: ComponentId, at: NodeId) -> Result<()> {
        let cell = &self.cells[&id];
        let mut h = ComponentHandle::new(id, ComponentKind::ArtificialCell, cell.receptors.clone(), cell.security_value);
        h.active = !self.blackout.contains(&at);
        let events: &[EventKind] = if cell.cell_type() == CellType::Matcher {
            &[EventKind::PacketArrival, EventKind::SubstanceArrival]
        } else {
            &[EventKind::SubstanceArrival]
        };
        let i = self.idx(at);
        self.envs[i].register(h, events)
    }

    /// Runs ticks `0..duration` and returns the trace bundle.
    pub fn run(mut self) -> Result<TraceBundle> {
        let duration = self.sc.duration;
        for t in 0..duration {
            if t > 0 {
                self.kernel.advance();
            }
            self.run_tick()?;
        }
        self.trace.final_infected = self.infection.infected_nodes();
        self.trace.final_quarantined = self
            .infection
            .iter()
            .filter(|(_, i)| i.quarantined_since.is_some())
            .map(|(n, _)| n)
            .collect();
        Ok(self.trace)
    }

    /// Runs until (and including) tick `until`, for tests that inspect live state.
    pub fn run_until(&mut self, until: u64) -> Result<()> {
        while self.trace.counters.len() as u64 <= until && (self.trace.counters.len() as u64) < self.sc.duration {
            if !self.trace.counters.is_empty() {
                self.kernel.advance();
            }
            self.run_tick()?;
        }
        Ok(())
    }

    pub fn trace(&self) -> &TraceBundle {
        &self.trace
    }

    fn run_tick(&mut self) -> Result<()> {
        let t = self.kernel.tick();
        self.counters = TickCounters {
            tick: t,
            ..Default::default()
        };
        self.apply_faults(t)?;
        self.adversary_phase(t)?;
        self.drain()?;
        self.end_of_tick(t)?;
        self.drain()?;
        self.record_tick(t);
        Ok(())
    }

    fn drain(&mut self) -> Result<()> {
        while let Some(ev) = self.kernel.pop_due() {
            self.handle(ev)?;
        }
        Ok(())
    }

    fn apply_faults(&mut self, t: u64) -> Result<()> {
        let faults: Vec<Fault> = self.sc.faults.iter().filter(|f| f.at() == t).cloned().collect();
        for f in faults {
            match f {
                Fault::DeleteCell {
                    cell, cell_type, nth, ..
                } => {
                    let target = cell.or_else(|| {
                        self.cells
                            .values()
                            .filter(|c| cell_type.is_none_or(|ty| c.cell_type() == ty))
                            .nth(nth)
                            .map(|c| c.id)
                    });
                    if let Some(id) = target {
                        self.remove_cell(id);
                        self.event(t, "fault", NodeId(0), format!("delete_cell {id}"));
                    }
                }
                Fault::DisableLymph { index, .. } => {
                    if let Some((id, l)) = self.lymphs.get_mut(index) {
                        l.active = false;
                        let (id, host) = (*id, l.host);
                        let i = self.idx(host);
                        self.envs[i].deregister(id);
                        self.event(t, "fault", host, format!("disable_lymph {id}"));
                    }
                }
                Fault::DisableCnts { index, .. } => {
                    if let Some((id, c)) = self.cnts.get_mut(index) {
                        c.active = false;
                        let (id, host) = (*id, c.host);
                        let i = self.idx(host);
                        self.envs[i].deregister(id);
                        self.event(t, "fault", host, format!("disable_cnts {id}"));
                    }
                }
                Fault::RogueComponent { node, behavior, .. } => {
                    let i = self.idx(node);
                    let target = self.envs[i]
                        .handles()
                        .find(|h| self.classic.contains_key(&h.component_id))
                        .or_else(|| self.envs[i].handles().next())
                        .map(|h| h.component_id);
                    if let Some(id) = target {
                        self.rogue.insert(id, behavior);
                        self.event(t, "fault", node, format!("rogue {id}"));
                    }
                }
            }
        }
        Ok(())
    }

    fn remove_cell(&mut self, id: ComponentId) -> Option<ArtificialCell> {
        let cell = self.cells.remove(&id)?;
        if cell.is_resident() {
            let i = self.idx(cell.location);
            self.envs[i].deregister(id);
        }
        Some(cell)
    }

    fn adversary_phase(&mut self, t: u64) -> Result<()> {
        for boot in self.sc.adversary.offline.clone() {
            if boot.at == t && offline_infect(&mut self.infection, &boot) {
                self.timeline(t, boot.node, TimelineStatus::Infected);
                self.trace.introductions.push(IntroductionRecord {
                    tick: t,
                    family: boot.signature.family,
                    node: boot.node,
                    via: "offline",
                });
                self.schedule_activity(boot.node, boot.signature);
            }
            if boot.blackout > 0 && boot.at == t {
                self.set_blackout(boot.node, true, t);
            }
            if boot.blackout > 0 && boot.at + boot.blackout == t {
                self.set_blackout(boot.node, false, t);
            }
        }

        let mut packets = emit_background(&self.sc.adversary.background, &self.topo, &mut self.adv_rng, &mut self.next_packet);
        for w in 0..self.worms.len() {
            if self.worms[w].spec.start_tick > t {
                continue;
            }
            let seeding = self.worms[w].entry_pending;
            let infection = &self.infection;
            let out = worm_step(
                &mut self.worms[w],
                infection,
                &self.topo,
                |n| !infection.is_quarantined(n),
                &mut self.sig_registry,
                &mut self.adv_rng,
                &mut self.next_packet,
            );
            if seeding {
                // the worm is carried in (removable media, a laptop), not sent over the network
                let (sig, entry) = (self.worms[w].spec.signature, self.worms[w].spec.entry_node);
                self.trace.introductions.push(IntroductionRecord {
                    tick: t,
                    family: sig.family,
                    node: entry,
                    via: "worm",
                });
                if self.infection.infect(entry, sig, t) {
                    self.timeline(t, entry, TimelineStatus::Infected);
                    self.schedule_activity(entry, sig);
                }
                continue;
            }
            packets.extend(out);
        }
        for p in packets {
            self.counters.packets_sent += 1;
            if p.payload_sigs.iter().any(|s| s.generation > 0) {
                self.counters.mutant_packets += 1;
            }
            if self.trace.level != TraceLevel::None {
                self.trace.sent.push(SentRecord {
                    tick: t,
                    src: p.src,
                    dst: p.dst,
                    sig: p.payload_sigs.first().map(|s| s.sig_id),
                });
            }
            if send_packet(&mut self.kernel, &self.topo, p, t).is_err() {
                self.counters.packets_unroutable += 1;
            }
        }
        Ok(())
    }

    fn set_blackout(&mut self, node: NodeId, on: bool, t: u64) {
        let i = self.idx(node);
        self.envs[i].set_all_active(!on);
        for nb in self.topo.neighbors(node) {
            if on {
                self.router.prune(nb, node, t);
            } else {
                self.router.restore(&self.topo, nb, node, t);
            }
        }
        if on {
            self.blackout.insert(node);
        } else {
            self.blackout.remove(&node);
        }
        self.event(t, "blackout", node, if on { "begin" } else { "end" }.into());
    }

    fn schedule_activity(&mut self, node: NodeId, sig: IntrusionSignature) {
        let period = self.sc.response.activity_period.max(1);
        self.kernel.schedule_in(
            period,
            EventKind::FileAccess,
            Payload::File(FileEvent {
                node,
                sigs: vec![sig],
                implicated: node,
                neutralized: false,
                activity: true,
            }),
        );
    }

    fn end_of_tick(&mut self, t: u64) -> Result<()> {
        if self.mode.has_cells() {
            self.check_components(t);
        }
        self.quarantine_upkeep(t);
        let beacons = self.mode.has_cells();
        for i in 0..self.topo.len() {
            let level = compute_level(&self.envs[i].security_values());
            self.levels[i].update(level, t);
            let node = self.topo.id_at(i);
            if beacons && !self.blackout.contains(&node) && self.levels[i].notify_if_low(t, self.sc.selfmgmt.beacon_refresh)
            {
                let sm = &self.sc.selfmgmt;
                let msg = Message::AttractionBeacon {
                    origin: node,
                    strength: sm.beacon_strength,
                    radius: sm.beacon_radius,
                };
                let reach = Reach {
                    hops: sm.beacon_radius,
                    ttl: self.sc.substances.beacon_ttl,
                };
                self.emit(node, msg, reach, &[EntityType::Environment]);
            }
        }
        Ok(())
    }

    fn check_components(&mut self, t: u64) {
        let mut evictions = Vec::new();
        for i in 0..self.envs.len() {
            let ids: Vec<ComponentId> = self.envs[i].handles().map(|h| h.component_id).collect();
            for id in ids {
                let probe = match self.rogue.get(&id) {
                    Some(RogueBehavior::UnauthorizedResource) => {
                        let missing = [ResourceKind::Storage, ResourceKind::Network, ResourceKind::Cpu, ResourceKind::Memory]
                            .into_iter()
                            .find(|r| !self.envs[i].authorized(id, *r, &self.receptors.registry));
                        BehaviorProbe {
                            resources: missing.into_iter().collect(),
                            actions: 1,
                        }
                    }
                    Some(RogueBehavior::BudgetExceeded) => BehaviorProbe {
                        resources: Vec::new(),
                        actions: self.envs[i].handle(id).map_or(0, |h| h.action_budget * 2),
                    },
                    None => BehaviorProbe::default(),
                };
                if let CheckOutcome::Violation(v) = self.envs[i].check_component(id, &probe, &self.receptors.registry, t) {
                    evictions.push((i, id, v));
                }
            }
        }
        for (i, id, v) in evictions {
            if self.envs[i].evict(id).is_err() {
                continue;
            }
            let node = self.topo.id_at(i);
            self.rogue.remove(&id);
            self.cells.remove(&id);
            self.event(t, "eviction", node, format!("{id} {v}"));
            let env_id = ComponentId(0);
            let alert = Message::Alert(AlertInfo {
                source: env_id,
                kind: AlertKind::Eviction,
                implicated: node,
                locus: node,
                sig: None,
                raised_at: t,
            });
            self.emit(node, alert, self.sc.substances.alert, &[EntityType::LymphNode]);
            let report = Message::StatusReport {
                node,
                detail: format!("evicted {id}: {v}"),
            };
            self.emit(node, report, self.sc.substances.status, &[EntityType::LymphNode]);
        }
    }

    fn quarantine_upkeep(&mut self, t: u64) {
        let nodes: Vec<NodeId> = self.quarantine.keys().copied().collect();
        for node in nodes {
            let q = self.quarantine[&node].clone();
            let implicated_since = |c: u64| self.last_implicated.get(&node).is_some_and(|&l| l > c);
            match q.cleared_at {
                Some(c) if implicated_since(c) => {
                    self.quarantine.get_mut(&node).expect("present").cleared_at = None;
                }
                Some(c) if t >= c + self.sc.response.observation => {
                    self.infection.release(node);
                    self.quarantine.remove(&node);
                    self.timeline(t, node, TimelineStatus::Released);
                    self.event(t, "release", node, String::new());
                }
                Some(_) => {}
                None => {
                    if self.mode.has_cells() && t >= q.last_request + self.sc.response.rerequest && !self.blackout.contains(&node)
                    {
                        self.quarantine.get_mut(&node).expect("present").last_request = t;
                        let msg = Message::QuarantineRequest {
                            node,
                            family: q.family,
                            requested_by: ComponentId(0),
                        };
                        self.emit(
                            node,
                            msg,
                            self.sc.substances.quarantine,
                            &[EntityType::Environment, EntityType::RepairCell, EntityType::LymphNode],
                        );
                    }
                }
            }
        }
    }

    fn record_tick(&mut self, t: u64) {
        // staleness of every antivirus against the update server
        for c in self.classic.values() {
            if c.uses_db() {
                self.counters.staleness_sum += c.staleness(&self.server, t);
                self.counters.staleness_components += 1;
            }
        }
        self.counters.infected = self.infection.infected_count() as u64;
        self.counters.quarantined = self.infection.iter().filter(|(_, i)| i.quarantined_since.is_some()).count() as u64;
        for i in 0..self.topo.len() {
            let l = &self.levels[i];
            if !l.is_low() {
                self.counters.nodes_covered += 1;
            }
            self.trace.levels.push(LevelRecord {
                tick: t,
                node: l.node,
                level: l.level,
                attraction: self.field.get(i),
            });
        }
        let mut pop = PopulationRecord {
            tick: t,
            ..Default::default()
        };
        for c in self.cells.values() {
            match c.cell_type() {
                CellType::Matcher => pop.matcher += 1,
                CellType::Fusion => pop.fusion += 1,
                CellType::Prober => pop.prober += 1,
                CellType::Repair => pop.repair += 1,
            }
            if c.in_transit.is_some() {
                pop.in_transit += 1;
            }
            match c.mobility {
                MobilityState::Roaming => pop.roaming += 1,
                MobilityState::Anchored => pop.anchored += 1,
            }
        }
        self.trace.population.push(pop);
        self.trace.counters.push(std::mem::take(&mut self.counters));

        self.field.decay_tick();
        let decay = self.sc.cells.danger_decay;
        for c in self.cells.values_mut() {
            c.decay_danger(decay);
        }
        let done: Vec<u64> = self.substance_expiry.range(..t).map(|(k, _)| *k).collect();
        let mut gone = BTreeSet::new();
        for k in done {
            gone.extend(self.substance_expiry.remove(&k).unwrap_or_default());
        }
        self.router.forget(&gone);
    }

    // ---- emission and recording helpers ----

    fn emit(&mut self, at: NodeId, message: Message, reach: Reach, to: &[EntityType]) {
        let id = SubstanceId(self.next_substance);
        self.next_substance += 1;
        let t = self.kernel.tick();
        let s = ArtificialSubstance {
            id,
            message,
            hops_to_go: reach.hops,
            time_to_live: reach.ttl,
            locks: to.iter().map(|e| self.receptors.entity[e].lock).collect(),
            origin: at,
            emitted_at: t,
        };
        debug_assert!(crate::substances::validate_locks(&s, &self.receptors.registry).is_ok());
        self.substance_expiry.entry(t + reach.ttl + 1).or_default().push(id);
        self.counters.protection_messages += 1;
        self.substance_record(t, id, at, SubstanceAction::Emit);
        self.kernel.schedule_in(
            0,
            EventKind::SubstanceArrival,
            Payload::Substance {
                at,
                substance: Arc::new(s),
            },
        );
    }

    fn substance_record(&mut self, tick: u64, substance: SubstanceId, node: NodeId, action: SubstanceAction) {
        if self.trace.full() {
            self.trace.substances.push(SubstanceTraceRecord {
                tick,
                substance,
                node,
                action,
            });
        }
    }

    fn event(&mut self, tick: u64, kind: &'static str, node: NodeId, detail: String) {
        if self.trace.full() {
            self.trace.events.push(EventRecord { tick, kind, node, detail });
        }
    }

    fn audit(&mut self, tick: u64, node: NodeId, component: ComponentId, event_kind: EventKind, verdict: String) {
        if self.trace.full() {
            self.trace.audit.push(AuditRecord {
                tick,
                node,
                component,
                event_kind: event_kind.as_str(),
                verdict,
            });
        }
    }

    fn timeline(&mut self, tick: u64, node: NodeId, status: TimelineStatus) {
        self.trace.timeline.push(TimelineRecord { tick, node, status });
    }

    fn admin(&mut self, source: ComponentId, node: Option<NodeId>, message: String) {
        let tick = self.kernel.tick();
        self.trace.admin.push(AdminRecord {
            tick,
            source,
            node,
            message,
        });
    }

    fn apply_update(&mut self, id: ComponentId, t: u64) {
        let server = &self.server;
        if let Some(c) = self.classic.get_mut(&id) {
            c.db = central_update(&c.db, server, &c.update, t);
        }
    }
}

/// Convenience: build and run in one call.
pub fn simulate(sc: &Scenario, level: TraceLevel) -> Result<TraceBundle> {
    Simulation::new(sc, level)?.run()
}
