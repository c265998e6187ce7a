//! Identifier newtypes shared by every module.

use serde::{Deserialize, Serialize};
use std::fmt;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $inner:ty, $prefix:literal) => {
        $(#[$meta])*
        #[derive(
            Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// A node in the simulated network.
    NodeId, u32, "n"
);
id_type!(
    /// Any protection component: classic component, cell, lymph node or CNTS.
    ComponentId, u64, "c"
);
id_type!(SubstanceId, u64, "s");
id_type!(PacketId, u64, "p");
id_type!(
    /// Intrusion signature symbol.
    SigId, u32, "S"
);
id_type!(
    /// Signature family; equals the sig id of the original (generation 0) ancestor.
    FamilyId, u32, "F"
);
