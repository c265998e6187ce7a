use super::{AlertKind, Message, MessageKind};
use crate::ids::{ComponentId, FamilyId, NodeId};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessagePredicate {
    Kind(MessageKind),
    AlertKind(AlertKind),
    /// An intrusion alert whose family has at least `min_alerts` alerts in the window.
    AlertFlood { min_alerts: usize },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseAction {
    NotifyAdmin,
    ReleaseCells,
    ForwardToCnts,
    CacheStatus,
    /// Issue a quarantine request for the implicated node (also notifies the administrator).
    QuarantineNode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponseRule {
    pub when: MessagePredicate,
    pub action: ResponseAction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LymphResponse {
    pub action: ResponseAction,
    pub node: Option<NodeId>,
    pub family: Option<FamilyId>,
}

#[derive(Clone, Debug)]
pub struct LymphNode {
    pub id: ComponentId,
    pub host: NodeId,
    pub rules: Vec<ResponseRule>,
    pub status_cache: VecDeque<(u64, NodeId, String)>,
    pub cache_limit: usize,
    pub window: u64,
    pub release_count: u32,
    alerts: VecDeque<(u64, FamilyId)>,
    pub active: bool,
}

impl LymphNode {
    pub fn new(id: ComponentId, host: NodeId, flood_threshold: usize, window: u64) -> Self {
        LymphNode {
            id,
            host,
            rules: default_rules(flood_threshold),
            status_cache: VecDeque::new(),
            cache_limit: 64,
            window,
            release_count: 2,
            alerts: VecDeque::new(),
            active: true,
        }
    }

    pub fn family_alerts(&self, family: FamilyId) -> usize {
        self.alerts.iter().filter(|(_, f)| *f == family).count()
    }

    fn matches(&self, pred: &MessagePredicate, msg: &Message) -> bool {
        match (pred, msg) {
            (MessagePredicate::Kind(k), m) => m.kind() == *k,
            (MessagePredicate::AlertKind(k), Message::Alert(a)) => a.kind == *k,
            (MessagePredicate::AlertFlood { min_alerts }, Message::Alert(a)) => {
                a.kind == AlertKind::Intrusion
                    && a.family().is_some_and(|f| self.family_alerts(f) >= *min_alerts)
            }
            _ => false,
        }
    }

    /// Applies the first matching response rule.
    pub fn respond(&mut self, msg: &Message, now: u64) -> Option<LymphResponse> {
        while self
            .alerts
            .front()
            .is_some_and(|(t, _)| t + self.window < now)
        {
            self.alerts.pop_front();
        }
        if let Message::Alert(a) = msg {
            if let (AlertKind::Intrusion, Some(f)) = (a.kind, a.family()) {
                self.alerts.push_back((now, f));
            }
        }
        let rule = self.rules.iter().find(|r| self.matches(&r.when, msg))?.clone();
        let (node, family) = match msg {
            Message::Alert(a) => (Some(a.implicated), a.family()),
            Message::QuarantineRequest { node, family, .. } => (Some(*node), *family),
            Message::StatusReport { node, .. } => (Some(*node), None),
            Message::DeathRecord { family, .. } => (None, *family),
            Message::CellRelease { family, .. } => (None, Some(*family)),
            Message::Warning { locus } => (Some(*locus), None),
            Message::AttractionBeacon { origin, .. } => (Some(*origin), None),
        };
        match rule.action {
            ResponseAction::CacheStatus => {
                if let Message::StatusReport { node, detail } = msg {
                    self.status_cache.push_back((now, *node, detail.clone()));
                    while self.status_cache.len() > self.cache_limit {
                        self.status_cache.pop_front();
                    }
                }
            }
            ResponseAction::ReleaseCells => {
                if let Some(f) = family {
                    self.alerts.retain(|(_, g)| *g != f);
                }
            }
            _ => {}
        }
        Some(LymphResponse {
            action: rule.action,
            node,
            family,
        })
    }
}

pub fn default_rules(flood_threshold: usize) -> Vec<ResponseRule> {
    use MessagePredicate as P;
    use ResponseAction as A;
    vec![
        ResponseRule {
            when: P::Kind(MessageKind::QuarantineRequest),
            action: A::NotifyAdmin,
        },
        ResponseRule {
            when: P::AlertKind(AlertKind::Silent),
            action: A::QuarantineNode,
        },
        ResponseRule {
            when: P::AlertKind(AlertKind::Eviction),
            action: A::NotifyAdmin,
        },
        ResponseRule {
            when: P::AlertKind(AlertKind::Stale),
            action: A::NotifyAdmin,
        },
        ResponseRule {
            when: P::AlertFlood {
                min_alerts: flood_threshold,
            },
            action: A::ReleaseCells,
        },
        ResponseRule {
            when: P::Kind(MessageKind::Alert),
            action: A::ForwardToCnts,
        },
        ResponseRule {
            when: P::Kind(MessageKind::StatusReport),
            action: A::CacheStatus,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::IntrusionSignature;
    use crate::ids::SigId;
    use crate::substances::AlertInfo;

    fn alert(tick: u64, fam: u32) -> Message {
        Message::Alert(AlertInfo {
            source: ComponentId(tick),
            kind: AlertKind::Intrusion,
            implicated: NodeId(3),
            locus: NodeId(3),
            sig: Some(IntrusionSignature::original(SigId(fam))),
            raised_at: tick,
        })
    }

    #[test]
    fn quarantine_request_notifies_admin() {
        let mut l = LymphNode::new(ComponentId(1), NodeId(0), 5, 10);
        let r = l
            .respond(
                &Message::QuarantineRequest {
                    node: NodeId(7),
                    family: None,
                    requested_by: ComponentId(9),
                },
                0,
            )
            .unwrap();
        assert_eq!(r.action, ResponseAction::NotifyAdmin);
        assert_eq!(r.node, Some(NodeId(7)));
    }

    #[test]
    fn flood_releases_cells_once_threshold_reached() {
        let mut l = LymphNode::new(ComponentId(1), NodeId(0), 3, 10);
        // windowed-count oracle: the r-th alert within the window triggers release
        let actions: Vec<_> = (0..4).map(|t| l.respond(&alert(t, 1), t).unwrap().action).collect();
        assert_eq!(
            actions,
            vec![
                ResponseAction::ForwardToCnts,
                ResponseAction::ForwardToCnts,
                ResponseAction::ReleaseCells,
                ResponseAction::ForwardToCnts
            ]
        );
        // alerts outside the window do not count
        let mut l = LymphNode::new(ComponentId(1), NodeId(0), 3, 2);
        for t in [0, 5, 10] {
            assert_eq!(l.respond(&alert(t, 1), t).unwrap().action, ResponseAction::ForwardToCnts);
        }
    }

    #[test]
    fn status_reports_are_cached() {
        let mut l = LymphNode::new(ComponentId(1), NodeId(0), 3, 10);
        l.respond(
            &Message::StatusReport {
                node: NodeId(4),
                detail: "evicted c9".into(),
            },
            2,
        );
        assert_eq!(l.status_cache.len(), 1);
        assert_eq!(l.status_cache[0].1, NodeId(4));
    }
}
