use super::*;
use crate::cells::{disinfect, fusion_evaluate, migrate, probe_status, AlertRecord, DisinfectOutcome, NodeStatusView, ProbeResult};
use crate::components::{av_scan, filter_packet, CheckLedger, Characteristic};
use crate::kernel::{forward_packet, Event};
use crate::secenv::Verdict;
use crate::selfmgmt::anchor_policy;
use crate::substances::{deliver, Arrival, Delivery, ResponseAction};

/// A detector hit found while dispatching one event.
struct Hit {
    component: ComponentId,
    kind: DetectionKind,
    sig: IntrusionSignature,
    classic: bool,
}

impl Simulation {
    pub(super) fn handle(&mut self, ev: Event<Payload>) -> Result<()> {
        let t = ev.due_tick;
        match ev.payload {
            Payload::Packet(p) => self.on_packet(t, p),
            Payload::Substance { at, substance } => {
                self.on_substance(t, at, &substance);
                Ok(())
            }
            Payload::File(f) => {
                self.on_file(t, f);
                Ok(())
            }
            Payload::Timer(Timer::Poll { component }) => {
                if let Some(c) = self.classic.get(&component) {
                    let (node, period) = (c.node, c.update.period.max(1));
                    self.apply_update(component, t);
                    self.event(t, "component_timer", node, format!("poll {component}"));
                    self.kernel
                        .schedule_in(period, EventKind::ComponentTimer, Payload::Timer(Timer::Poll { component }));
                }
                Ok(())
            }
            Payload::Timer(Timer::Probe { cell }) => {
                self.on_probe(t, cell);
                Ok(())
            }
            Payload::Migration { cell } => self.on_migration(t, cell),
            Payload::Expiry { cell } => {
                self.on_expiry(t, cell);
                Ok(())
            }
            Payload::Generation { cnts } => self.on_generation(t, cnts),
        }
    }

    // ---- data plane ----

    fn on_packet(&mut self, t: u64, mut p: Packet) -> Result<()> {
        let node = p.current().expect("packets always have a current node");
        self.counters.data_hops += 1;
        self.event(t, "packet_arrival", node, format!("{} {}->{} {}", p.id, p.src, p.dst, p.protocol));
        if self.infection.is_quarantined(node) {
            self.counters.packets_dropped += 1;
            self.event(t, "drop", node, format!("{} quarantine", p.id));
            return Ok(());
        }
        let i = self.idx(node);
        let mut ledger = CheckLedger::new(self.mode.shares_checks());
        let mut hits: Vec<Hit> = Vec::new();
        let theta = self.sc.cells.danger_threshold;
        let (classic, cells) = (&self.classic, &self.cells);
        let verdicts = self.envs[i].dispatch(EventKind::PacketArrival, |h| {
            if let Some(c) = classic.get(&h.component_id) {
                let out = filter_packet(&p, &c.rules, c.kind, &mut ledger);
                if let Some(sig) = out.sig {
                    if out.verdict != Verdict::Pass {
                        hits.push(Hit {
                            component: c.id,
                            kind: DetectionKind::Classic,
                            sig,
                            classic: true,
                        });
                    }
                }
                return out.verdict;
            }
            let Some(cell) = cells.get(&h.component_id) else {
                return Verdict::Pass;
            };
            let CellProgram::Matcher { rule } = &cell.program else {
                return Verdict::Pass;
            };
            let exact = p.payload_sigs.iter().find(|s| s.sig_id == rule.sig_id).copied();
            if ledger.check(Characteristic::Sig(rule.sig_id), || exact.is_some()) {
                if let Some(sig) = exact {
                    hits.push(Hit {
                        component: cell.id,
                        kind: DetectionKind::Exact,
                        sig,
                        classic: false,
                    });
                }
                return Verdict::Alert;
            }
            if cell.danger_level >= theta {
                let fam = p.payload_sigs.iter().find(|s| s.family == rule.family).copied();
                if ledger.check(Characteristic::Family(rule.family), || fam.is_some()) {
                    if let Some(sig) = fam {
                        hits.push(Hit {
                            component: cell.id,
                            kind: DetectionKind::Family,
                            sig,
                            classic: false,
                        });
                    }
                    return Verdict::Alert;
                }
            }
            Verdict::Pass
        });
        self.counters.inspections += ledger.performed;
        self.counters.redundant_checks += ledger.redundant;
        self.counters.reused_checks += ledger.reused;
        for (c, v) in &verdicts {
            self.audit(t, node, *c, EventKind::PacketArrival, v.to_string());
        }
        if !hits.is_empty() && !p.neutralized {
            p.neutralized = true;
            if p.payload_sigs.iter().any(|s| s.generation > 0) {
                self.counters.mutant_detected += 1;
            }
        }
        for h in hits {
            self.raise_intrusion(t, node, p.src, h);
        }
        if verdicts.iter().any(|(_, v)| v.stops_packet()) {
            self.counters.packets_dropped += 1;
            self.event(t, "drop", node, format!("{} filtered", p.id));
            return Ok(());
        }
        if p.at_destination() {
            self.counters.packets_delivered += 1;
            if !p.payload_sigs.is_empty() {
                self.kernel.schedule_in(
                    0,
                    EventKind::FileAccess,
                    Payload::File(FileEvent {
                        node,
                        sigs: p.payload_sigs.clone(),
                        implicated: p.src,
                        neutralized: p.neutralized,
                        activity: false,
                    }),
                );
            }
            return Ok(());
        }
        if forward_packet(&mut self.kernel, &self.topo, p).is_err() {
            self.counters.packets_unroutable += 1;
        }
        Ok(())
    }

    fn on_file(&mut self, t: u64, f: FileEvent) {
        let node = f.node;
        if f.activity && !self.infection.is_infected(node) {
            return;
        }
        self.event(
            t,
            "file_access",
            node,
            format!("{}{}", if f.activity { "activity " } else { "" }, f.sigs.first().map(|s| s.to_string()).unwrap_or_default()),
        );
        let i = self.idx(node);
        let mut hits = Vec::new();
        let classic = &self.classic;
        let verdicts = self.envs[i].dispatch(EventKind::FileAccess, |h| {
            let Some(c) = classic.get(&h.component_id) else {
                return Verdict::Pass;
            };
            match av_scan(&f.sigs, &c.db) {
                Some(sig) => {
                    hits.push(Hit {
                        component: c.id,
                        kind: DetectionKind::Classic,
                        sig,
                        classic: true,
                    });
                    Verdict::Alert
                }
                None => Verdict::Pass,
            }
        });
        for (c, v) in &verdicts {
            self.audit(t, node, *c, EventKind::FileAccess, v.to_string());
        }
        let shielded = !hits.is_empty() || f.neutralized;
        for h in hits {
            self.raise_intrusion(t, node, f.implicated, h);
        }
        if f.activity {
            if self.sc.response.warnings && self.mode.has_cells() && !self.blackout.contains(&node) {
                self.emit(node, Message::Warning { locus: node }, self.sc.substances.warning, &[EntityType::MatcherCell]);
            }
            let sig = self.infection.get(node).infecting_sig.expect("infected node has a signature");
            self.schedule_activity(node, sig);
            return;
        }
        if shielded || self.infection.is_quarantined(node) || self.infection.is_infected(node) {
            return;
        }
        for sig in &f.sigs {
            let vulnerable = self
                .worms
                .iter()
                .find(|w| w.spec.signature.family == sig.family)
                .is_none_or(|w| w.spec.is_vulnerable(node));
            if vulnerable && self.infection.infect(node, *sig, t) {
                self.timeline(t, node, TimelineStatus::Infected);
                self.event(t, "infect", node, sig.to_string());
                self.schedule_activity(node, *sig);
                break;
            }
        }
    }

    /// Records a detection and routes the alert: a local log for classic
    /// components in modes without a protection plane, otherwise substances.
    fn raise_intrusion(&mut self, t: u64, at: NodeId, implicated: NodeId, h: Hit) {
        self.trace.detections.push(DetectionRecord {
            tick: t,
            node: at,
            implicated,
            component: h.component,
            kind: h.kind,
            family: Some(h.sig.family),
            sig: Some(h.sig.sig_id),
        });
        self.last_implicated.insert(implicated, t);
        if h.classic && !self.mode.classic_alerts_as_substances() {
            self.counters.log_entries += 1;
            return;
        }
        let alert = Message::Alert(AlertInfo {
            source: h.component,
            kind: AlertKind::Intrusion,
            implicated,
            locus: at,
            sig: Some(h.sig),
            raised_at: t,
        });
        self.emit(at, alert, self.sc.substances.alert, &[EntityType::FusionCell, EntityType::LymphNode]);
        if self.sc.response.warnings {
            self.emit(at, Message::Warning { locus: at }, self.sc.substances.warning, &[EntityType::MatcherCell]);
        }
    }

    // ---- protection plane ----

    fn on_substance(&mut self, t: u64, at: NodeId, s: &ArtificialSubstance) {
        if self.blackout.contains(&at) {
            self.substance_record(t, s.id, at, SubstanceAction::Expire);
            return;
        }
        let forward_to = match self.router.arrive(s, at, t) {
            Arrival::Duplicate => return,
            Arrival::Expired => {
                self.substance_record(t, s.id, at, SubstanceAction::Expire);
                return;
            }
            Arrival::Process { forward_to } => forward_to,
        };
        self.event(t, "substance_arrival", at, format!("{} {:?}", s.id, s.message.kind()));
        for next in forward_to {
            self.substance_record(t, s.id, at, SubstanceAction::Forward);
            self.counters.protection_messages += 1;
            self.kernel.schedule_in(
                1,
                EventKind::SubstanceArrival,
                Payload::Substance {
                    at: next,
                    substance: Arc::new(s.forwarded()),
                },
            );
        }

        // the node's own environment
        let env_key = [self.receptors.key(EntityType::Environment)];
        if let Delivery::Message(m) = deliver(s, &env_key, &self.receptors.registry) {
            self.substance_record(t, s.id, at, SubstanceAction::Deliver);
            match m {
                Message::AttractionBeacon { strength, radius, .. } => {
                    let g = self.sc.selfmgmt.geometric;
                    let i = self.idx(at);
                    self.field.apply_beacon(i, *strength, g, s.hops_travelled(*radius));
                }
                Message::QuarantineRequest { node, family, .. } => {
                    if *node == at || self.topo.neighbors(at).contains(node) {
                        self.apply_quarantine(t, *node, *family);
                    }
                }
                _ => {}
            }
        }

        let i = self.idx(at);
        let registry = &self.receptors.registry;
        let mut read: Vec<ComponentId> = Vec::new();
        let verdicts = self.envs[i].dispatch(EventKind::SubstanceArrival, |h| match deliver(s, &h.receptors, registry) {
            Delivery::Message(_) => {
                read.push(h.component_id);
                Verdict::Consume
            }
            Delivery::Locked => Verdict::Pass,
        });
        for (c, v) in &verdicts {
            let action = if *v == Verdict::Consume {
                SubstanceAction::Deliver
            } else {
                SubstanceAction::Locked
            };
            self.substance_record(t, s.id, at, action);
            self.audit(t, at, *c, EventKind::SubstanceArrival, v.to_string());
        }
        for id in read {
            self.consume(t, at, id, &s.message);
        }
    }

    /// A component at `at` has authenticated and read `msg`.
    fn consume(&mut self, t: u64, at: NodeId, id: ComponentId, msg: &Message) {
        if let Some(k) = self.lymphs.iter().position(|(lid, _)| *lid == id) {
            let Some(resp) = self.lymphs[k].1.respond(msg, t) else { return };
            let release = self.lymphs[k].1.release_count;
            match resp.action {
                ResponseAction::NotifyAdmin => {
                    self.admin(id, resp.node, describe(msg));
                }
                ResponseAction::QuarantineNode => {
                    if let Some(node) = resp.node {
                        self.admin(id, Some(node), format!("quarantine {node}: {}", describe(msg)));
                        let req = Message::QuarantineRequest {
                            node,
                            family: resp.family,
                            requested_by: id,
                        };
                        self.emit(
                            at,
                            req,
                            self.sc.substances.quarantine,
                            &[EntityType::Environment, EntityType::RepairCell],
                        );
                    }
                }
                ResponseAction::ReleaseCells => {
                    if let Some(family) = resp.family {
                        let m = Message::CellRelease { family, count: release };
                        self.emit(at, m, self.sc.substances.to_cnts, &[EntityType::Cnts]);
                    }
                }
                ResponseAction::ForwardToCnts => {
                    self.emit(at, msg.clone(), self.sc.substances.to_cnts, &[EntityType::Cnts]);
                }
                ResponseAction::CacheStatus => {}
            }
            return;
        }
        if let Some((_, c)) = self.cnts.iter_mut().find(|(cid, _)| *cid == id) {
            c.observe(msg, t);
            return;
        }
        let Some(cell) = self.cells.get_mut(&id) else { return };
        match (&cell.program, msg) {
            (CellProgram::Matcher { .. }, Message::Warning { .. }) => cell.receive_warning(),
            (CellProgram::Fusion { window, threshold }, Message::Alert(a)) if a.kind == AlertKind::Intrusion => {
                let (window, threshold) = (*window, *threshold);
                cell.alert_window.push(AlertRecord {
                    tick: t,
                    implicated: a.implicated,
                    source: a.source,
                    family: a.family(),
                });
                cell.alert_window.retain(|r| r.tick + window >= t);
                let verdicts = fusion_evaluate(&cell.alert_window, threshold, window, t);
                let mut out = Vec::new();
                for node in verdicts {
                    let recent = cell.issued.get(&node).is_some_and(|&w| w + window > t);
                    if !recent {
                        cell.issued.insert(node, t);
                        let family = cell
                            .alert_window
                            .iter()
                            .rev()
                            .find(|r| r.implicated == node)
                            .and_then(|r| r.family);
                        out.push((node, family));
                    }
                }
                for (node, family) in out {
                    self.event(t, "fusion_verdict", at, format!("{id} implicates {node}"));
                    let req = Message::QuarantineRequest {
                        node,
                        family,
                        requested_by: id,
                    };
                    self.emit(
                        at,
                        req,
                        self.sc.substances.quarantine,
                        &[EntityType::Environment, EntityType::RepairCell, EntityType::LymphNode],
                    );
                }
            }
            (CellProgram::Repair { families }, Message::QuarantineRequest { node, family, .. }) => {
                let fits = family.is_none_or(|f| families.contains(&f));
                if fits && cell.repair_target.is_none() {
                    cell.repair_target = Some(*node);
                }
            }
            _ => {}
        }
    }

    fn apply_quarantine(&mut self, t: u64, node: NodeId, family: Option<FamilyId>) {
        if self.infection.quarantine(node, t) {
            self.timeline(t, node, TimelineStatus::Quarantined);
            self.event(t, "quarantine", node, String::new());
            self.quarantine.insert(
                node,
                QuarantineState {
                    family,
                    last_request: t,
                    cleared_at: None,
                },
            );
        } else if let Some(q) = self.quarantine.get_mut(&node) {
            if q.family.is_none() {
                q.family = family;
            }
        }
    }

    fn on_probe(&mut self, t: u64, id: ComponentId) {
        let Some(cell) = self.cells.get(&id) else { return };
        let CellProgram::Prober {
            period,
            staleness_bound,
            radius,
        } = cell.program
        else {
            return;
        };
        if !cell.is_resident() || self.blackout.contains(&cell.location) {
            self.kernel
                .schedule_in(1, EventKind::ComponentTimer, Payload::Timer(Timer::Probe { cell: id }));
            return;
        }
        let loc = cell.location;
        self.kernel
            .schedule_in(period, EventKind::ComponentTimer, Payload::Timer(Timer::Probe { cell: id }));
        self.event(t, "component_timer", loc, format!("probe {id}"));
        let newest = self.classic.values().filter(|c| c.uses_db()).map(|c| c.db.version).max().unwrap_or(0);
        for target in self.topo.ball(loc, radius) {
            let ti = self.idx(target);
            let view = NodeStatusView {
                node: target,
                responding: !self.blackout.contains(&target),
                versions: self.envs[ti]
                    .handles()
                    .filter_map(|h| self.classic.get(&h.component_id))
                    .filter(|c| c.uses_db())
                    .map(|c| (c.id, c.db.version))
                    .collect(),
                newest_version: newest,
            };
            let (kind, detection) = match probe_status(&view, staleness_bound) {
                ProbeResult::Ok => continue,
                ProbeResult::Silent => (AlertKind::Silent, DetectionKind::Silent),
                ProbeResult::Stale(stale) => {
                    // resynchronise from the freshest database in the network
                    if let Some(best) = self.classic.values().filter(|c| c.uses_db()).max_by_key(|c| c.db.version) {
                        let db = best.db.clone();
                        for cid in &stale {
                            if let Some(c) = self.classic.get_mut(cid) {
                                c.db.known.extend(db.known.iter().copied());
                                c.db.version = db.version;
                            }
                        }
                    }
                    (AlertKind::Stale, DetectionKind::Stale)
                }
            };
            self.trace.detections.push(DetectionRecord {
                tick: t,
                node: loc,
                implicated: target,
                component: id,
                kind: detection,
                family: None,
                sig: None,
            });
            let alert = Message::Alert(AlertInfo {
                source: id,
                kind,
                implicated: target,
                locus: loc,
                sig: None,
                raised_at: t,
            });
            self.emit(loc, alert, self.sc.substances.alert, &[EntityType::LymphNode]);
        }
    }

    fn on_migration(&mut self, t: u64, id: ComponentId) -> Result<()> {
        let Some(cell) = self.cells.get_mut(&id) else { return Ok(()) };
        let interval = self.sc.cells.migration_interval;
        if let Some(dest) = cell.in_transit.take() {
            cell.location = dest;
            self.register_cell(id, dest)?;
            self.event(t, "cell_migration", dest, format!("{id} arrive"));
            self.try_repair(t, id);
            self.kernel
                .schedule_in(interval, EventKind::CellMigration, Payload::Migration { cell: id });
            return Ok(());
        }
        let loc = cell.location;
        let next = if let Some(target) = cell.repair_target {
            if target == loc {
                self.try_repair(t, id);
                loc
            } else {
                self.topo.next_hop(loc, target).unwrap_or(loc)
            }
        } else {
            let i = self.idx(loc);
            // anchoring looks at the stable protection: fixed components and anchored cells
            let stable: Vec<f64> = self.envs[i]
                .handles()
                .filter(|h| h.active && h.component_id != id)
                .filter(|h| self.cells.get(&h.component_id).is_none_or(|c| c.mobility == MobilityState::Anchored))
                .map(|h| h.security_value)
                .collect();
            let level_without = compute_level(&stable);
            let cell = self.cells.get_mut(&id).expect("present");
            let mut streak = cell.release_streak;
            cell.mobility = anchor_policy(cell.mobility, &mut streak, level_without, cell.security_value, &self.sc.selfmgmt);
            cell.release_streak = streak;
            if cell.mobility == MobilityState::Anchored {
                loc
            } else {
                let mut candidates = vec![loc];
                candidates.extend(self.topo.neighbors(loc));
                let attraction: Vec<f64> = candidates.iter().map(|n| self.field.get(self.idx(*n))).collect();
                migrate(&candidates, &attraction, self.sc.cells.autonomy, &mut self.rng)
            }
        };
        // a dark node accepts no incoming cells
        let next = if self.blackout.contains(&next) { loc } else { next };
        if next == loc {
            self.kernel
                .schedule_in(interval, EventKind::CellMigration, Payload::Migration { cell: id });
            return Ok(());
        }
        let i = self.idx(loc);
        self.envs[i].deregister(id);
        let cell = self.cells.get_mut(&id).expect("present");
        cell.in_transit = Some(next);
        self.counters.protection_messages += 1;
        self.event(t, "cell_migration", loc, format!("{id} depart {next}"));
        self.kernel
            .schedule_in(1, EventKind::CellMigration, Payload::Migration { cell: id });
        Ok(())
    }

    fn try_repair(&mut self, t: u64, id: ComponentId) {
        let Some(cell) = self.cells.get(&id) else { return };
        let Some(target) = cell.repair_target else { return };
        if cell.location != target || !cell.is_resident() {
            return;
        }
        let sig = self.infection.get(target).infecting_sig;
        let outcome = disinfect(cell, &mut self.infection, target);
        self.event(t, "disinfect", target, format!("{id} {outcome:?}"));
        if outcome == DisinfectOutcome::Failed {
            // wrong repair kit; leave it to another cell
            self.cells.get_mut(&id).expect("present").repair_target = None;
            return;
        }
        self.cells.get_mut(&id).expect("present").repair_target = None;
        if outcome == DisinfectOutcome::Cleaned {
            self.timeline(t, target, TimelineStatus::Disinfected);
            if let Some(sig) = sig {
                // the node's antivirus learns the signature it was infected with
                let ti = self.idx(target);
                let avs: Vec<ComponentId> = self.envs[ti].handles().map(|h| h.component_id).collect();
                for c in avs {
                    if let Some(c) = self.classic.get_mut(&c) {
                        if c.uses_db() {
                            c.db.known.insert(sig.sig_id);
                        }
                    }
                }
            }
        }
        if let Some(q) = self.quarantine.get_mut(&target) {
            q.cleared_at = Some(t);
        }
    }

    fn on_expiry(&mut self, t: u64, id: ComponentId) {
        let Some(cell) = self.remove_cell(id) else { return };
        let at = cell.in_transit.unwrap_or(cell.location);
        self.event(t, "cell_expiry", at, id.to_string());
        if self.blackout.contains(&at) {
            return;
        }
        let msg = Message::DeathRecord {
            cell: id,
            cell_type: cell.cell_type(),
            family: cell.program.family(),
        };
        self.emit(at, msg, self.sc.substances.to_cnts, &[EntityType::Cnts]);
    }

    fn on_generation(&mut self, t: u64, k: usize) -> Result<()> {
        let (active, host) = (self.cnts[k].1.active, self.cnts[k].1.host);
        if !active {
            return Ok(());
        }
        let picks = self.cnts[k].1.generate(t, &mut self.rng);
        if !picks.is_empty() {
            self.event(t, "cnts_generation", host, format!("{} cells", picks.len()));
        }
        for tpl in picks {
            self.mint_cell(tpl, host)?;
        }
        self.kernel
            .schedule_in(1, EventKind::CntsGeneration, Payload::Generation { cnts: k });
        Ok(())
    }
}

fn describe(msg: &Message) -> String {
    match msg {
        Message::Alert(a) => format!(
            "{:?} alert on {} from {}{}",
            a.kind,
            a.implicated,
            a.source,
            a.sig.map(|s| format!(" ({s})")).unwrap_or_default()
        ),
        Message::QuarantineRequest { node, requested_by, .. } => format!("quarantine request for {node} by {requested_by}"),
        Message::StatusReport { node, detail } => format!("status {node}: {detail}"),
        other => format!("{:?}", other.kind()),
    }
}
