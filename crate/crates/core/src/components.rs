//! Classic protection components: antivirus, firewall, packet filter and IDS,
//! plus the polling update workflow against a central signature server.

use crate::adversary::IntrusionSignature;
use crate::ids::{ComponentId, FamilyId, NodeId, SigId};
use crate::kernel::{Packet, Protocol};
use crate::secenv::{ComponentKind, Verdict};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureDB {
    pub version: u64,
    pub known: BTreeSet<SigId>,
}

impl SignatureDB {
    pub fn with_known(known: impl IntoIterator<Item = SigId>) -> Self {
        SignatureDB {
            version: 0,
            known: known.into_iter().collect(),
        }
    }

    pub fn knows(&self, sig: SigId) -> bool {
        self.known.contains(&sig)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeaderPredicate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub src: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dst: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<Protocol>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
}

impl HeaderPredicate {
    pub fn port(port: u16) -> Self {
        HeaderPredicate {
            port: Some(port),
            ..Default::default()
        }
    }

    pub fn protocol(protocol: Protocol) -> Self {
        HeaderPredicate {
            protocol: Some(protocol),
            ..Default::default()
        }
    }

    pub fn matches(&self, p: &Packet) -> bool {
        self.src.is_none_or(|s| s == p.src)
            && self.dst.is_none_or(|d| d == p.dst)
            && self.protocol.is_none_or(|x| x == p.protocol)
            && self.port.is_none_or(|x| x == p.port)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMatch {
    Header(HeaderPredicate),
    Sig(SigId),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleAction {
    Drop,
    Alert,
    Pass,
}

impl From<RuleAction> for Verdict {
    fn from(a: RuleAction) -> Verdict {
        match a {
            RuleAction::Drop => Verdict::Drop,
            RuleAction::Alert => Verdict::Alert,
            RuleAction::Pass => Verdict::Pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    #[serde(rename = "match")]
    pub matcher: RuleMatch,
    pub action: RuleAction,
}

/// Ordered rules; the first match wins and an empty set passes everything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleSet { rules }
    }
}

/// A single property a component tests a packet for.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Characteristic {
    Header(HeaderPredicate),
    Sig(SigId),
    Family(FamilyId),
}

/// Counts the checks made against one packet at one node. With `share` on,
/// a characteristic already evaluated here is answered from the ledger.
#[derive(Debug, Default)]
pub struct CheckLedger {
    share: bool,
    results: BTreeMap<Characteristic, bool>,
    pub performed: u64,
    pub redundant: u64,
    pub reused: u64,
}

impl CheckLedger {
    pub fn new(share: bool) -> Self {
        CheckLedger {
            share,
            ..Default::default()
        }
    }

    pub fn check(&mut self, c: Characteristic, eval: impl FnOnce() -> bool) -> bool {
        if let Some(&r) = self.results.get(&c) {
            if self.share {
                self.reused += 1;
                return r;
            }
            self.redundant += 1;
        }
        self.performed += 1;
        let r = eval();
        self.results.insert(c, r);
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub verdict: Verdict,
    pub rule: Option<usize>,
    /// Payload signature that triggered a signature rule.
    pub sig: Option<IntrusionSignature>,
}

/// First matching rule's action. Only IDS components look at payload signatures.
pub fn filter_packet(packet: &Packet, rules: &RuleSet, kind: ComponentKind, ledger: &mut CheckLedger) -> FilterOutcome {
    let payload_ok = kind == ComponentKind::Ids;
    for (i, rule) in rules.rules.iter().enumerate() {
        let (hit, sig) = match &rule.matcher {
            RuleMatch::Header(h) => (ledger.check(Characteristic::Header(h.clone()), || h.matches(packet)), None),
            RuleMatch::Sig(s) if payload_ok => {
                let found = packet.payload_sigs.iter().find(|x| x.sig_id == *s).copied();
                (ledger.check(Characteristic::Sig(*s), || found.is_some()), found)
            }
            RuleMatch::Sig(_) => (false, None),
        };
        if hit {
            return FilterOutcome {
                verdict: rule.action.into(),
                rule: Some(i),
                sig,
            };
        }
    }
    FilterOutcome {
        verdict: Verdict::Pass,
        rule: None,
        sig: None,
    }
}

/// Exact-match scan of a file event's signatures.
pub fn av_scan(sigs: &[IntrusionSignature], db: &SignatureDB) -> Option<IntrusionSignature> {
    sigs.iter().find(|s| db.knows(s.sig_id)).copied()
}

/// Central signature server: a timeline of releases, each bumping the version.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateServer {
    pub initial: BTreeSet<SigId>,
    pub releases: Vec<(u64, Vec<SigId>)>,
}

impl UpdateServer {
    pub fn version_at(&self, tick: u64) -> u64 {
        self.releases.iter().filter(|(t, _)| *t <= tick).count() as u64
    }

    pub fn known_at(&self, tick: u64) -> BTreeSet<SigId> {
        let mut k = self.initial.clone();
        for (t, sigs) in &self.releases {
            if *t <= tick {
                k.extend(sigs.iter().copied());
            }
        }
        k
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdatePolicy {
    pub period: u64,
    #[serde(default)]
    pub failed: bool,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        UpdatePolicy {
            period: 10,
            failed: false,
        }
    }
}

pub fn update_due(tick: u64, period: u64) -> bool {
    period >= 1 && tick % period == 0
}

/// One poll: on schedule and not failed, the db catches up with the server.
/// Locally added signatures are kept.
pub fn central_update(db: &SignatureDB, server: &UpdateServer, policy: &UpdatePolicy, tick: u64) -> SignatureDB {
    if policy.failed || !update_due(tick, policy.period) {
        return db.clone();
    }
    let mut known = db.known.clone();
    known.extend(server.known_at(tick));
    SignatureDB {
        version: db.version.max(server.version_at(tick)),
        known,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogEntry {
    pub tick: u64,
    pub component: ComponentId,
    pub node: NodeId,
    pub entry: String,
}

#[derive(Clone, Debug)]
pub struct ClassicComponent {
    pub id: ComponentId,
    pub kind: ComponentKind,
    pub node: NodeId,
    pub rules: RuleSet,
    pub db: SignatureDB,
    pub update: UpdatePolicy,
    pub security_value: f64,
}

impl ClassicComponent {
    pub fn staleness(&self, server: &UpdateServer, tick: u64) -> u64 {
        server.version_at(tick).saturating_sub(self.db.version)
    }

    pub fn uses_db(&self) -> bool {
        matches!(self.kind, ComponentKind::Antivirus)
    }

    /// Characteristics this component checks a packet for, in rule order.
    pub fn packet_characteristics(&self) -> Vec<Characteristic> {
        self.rules
            .rules
            .iter()
            .filter_map(|r| match &r.matcher {
                RuleMatch::Header(h) => Some(Characteristic::Header(h.clone())),
                RuleMatch::Sig(s) if self.kind == ComponentKind::Ids => Some(Characteristic::Sig(*s)),
                RuleMatch::Sig(_) => None,
            })
            .collect()
    }
}
