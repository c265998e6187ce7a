use super::queue::{Event, EventKind, Kernel};
use super::topology::Topology;
use crate::adversary::IntrusionSignature;
use crate::error::{Result, SimError};
use crate::ids::{NodeId, PacketId};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Http,
    Smtp,
    Dns,
    Ssh,
    Telnet,
    Smb,
    Ftp,
}

impl Protocol {
    pub fn default_port(self) -> u16 {
        match self {
            Protocol::Http => 80,
            Protocol::Smtp => 25,
            Protocol::Dns => 53,
            Protocol::Ssh => 22,
            Protocol::Telnet => 23,
            Protocol::Smb => 445,
            Protocol::Ftp => 21,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Protocol::Http => "http",
            Protocol::Smtp => "smtp",
            Protocol::Dns => "dns",
            Protocol::Ssh => "ssh",
            Protocol::Telnet => "telnet",
            Protocol::Smb => "smb",
            Protocol::Ftp => "ftp",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    pub id: PacketId,
    pub src: NodeId,
    pub dst: NodeId,
    pub protocol: Protocol,
    pub port: u16,
    pub payload_sigs: Vec<IntrusionSignature>,
    pub hop_trace: Vec<NodeId>,
    pub sent_at: u64,
    /// Set once any detector on the path matched one of the payload signatures.
    #[serde(default)]
    pub neutralized: bool,
}

impl Packet {
    pub fn new(id: PacketId, src: NodeId, dst: NodeId, protocol: Protocol) -> Self {
        Packet {
            id,
            src,
            dst,
            protocol,
            port: protocol.default_port(),
            payload_sigs: Vec::new(),
            hop_trace: Vec::new(),
            sent_at: 0,
            neutralized: false,
        }
    }

    pub fn with_sigs(mut self, sigs: Vec<IntrusionSignature>) -> Self {
        self.payload_sigs = sigs;
        self
    }

    pub fn is_benign(&self) -> bool {
        self.payload_sigs.is_empty()
    }

    pub fn current(&self) -> Option<NodeId> {
        self.hop_trace.last().copied()
    }

    pub fn at_destination(&self) -> bool {
        self.current() == Some(self.dst)
    }
}

/// Schedules the first `packet_arrival` (at `src`, tick `at`). Fails if no route exists.
pub fn send_packet<P: From<Packet>>(
    kernel: &mut Kernel<P>,
    topo: &Topology,
    mut packet: Packet,
    at: u64,
) -> Result<()> {
    if !topo.contains(packet.src) {
        return Err(SimError::UnknownNode(packet.src));
    }
    if !topo.contains(packet.dst) {
        return Err(SimError::UnknownNode(packet.dst));
    }
    if topo.distance(packet.src, packet.dst).is_none() {
        return Err(SimError::UnroutablePacket(packet.src, packet.dst));
    }
    packet.hop_trace = vec![packet.src];
    packet.sent_at = at;
    kernel.schedule(Event::new(at, EventKind::PacketArrival, packet.into()))
}

/// After a packet has been inspected at its current node, moves it one hop
/// and schedules the next arrival. Returns `false` if already at `dst`.
pub fn forward_packet<P: From<Packet>>(
    kernel: &mut Kernel<P>,
    topo: &Topology,
    mut packet: Packet,
) -> Result<bool> {
    let cur = packet.current().ok_or(SimError::UnknownNode(packet.src))?;
    if cur == packet.dst {
        return Ok(false);
    }
    let next = topo
        .next_hop(cur, packet.dst)
        .ok_or(SimError::UnroutablePacket(packet.src, packet.dst))?;
    packet.hop_trace.push(next);
    kernel.schedule_in(1, EventKind::PacketArrival, packet.into());
    Ok(true)
}
