//! Deterministic discrete-time engine: topology, event queue and packet transport.

pub mod packet;
pub mod queue;
pub mod topology;

pub use packet::{forward_packet, send_packet, Packet, Protocol};
pub use queue::{Event, EventKind, Kernel};
pub use topology::{random_tree_plus_edges, NodeSpec, Role, Topology, TopologySpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream used for adversary draws (background traffic, worms, mutations).
pub const ADVERSARY_STREAM: u64 = 0;
/// Stream used for everything the protection system draws.
pub const PROTECTION_STREAM: u64 = 1;

/// A seeded generator on one of the simulation's two streams.
pub fn seeded_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
