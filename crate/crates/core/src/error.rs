use crate::ids::{ComponentId, NodeId};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("topology is not connected")]
    DisconnectedGraph,
    #[error("edge {0}-{1} references an unknown node")]
    DanglingEdge(NodeId, NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("event due at tick {due} but clock is already at {now}")]
    PastDue { due: u64, now: u64 },
    #[error("no route from {0} to {1}")]
    UnroutablePacket(NodeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("component {0} is already registered at this node")]
    DuplicateRegistration(ComponentId),
    #[error("component {0} has no violation on record")]
    NoViolationOnRecord(ComponentId),
    #[error("substance carries a lock not minted by the receptor registry")]
    UnmintedLock,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
