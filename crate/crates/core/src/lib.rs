//! Deterministic discrete-event simulator of an artificial-immune network
//! protection architecture, with a classic protection stack as control.

pub mod adversary;
pub mod cells;
pub mod components;
pub mod error;
pub mod harness;
pub mod ids;
pub mod kernel;
pub mod secenv;
pub mod selfmgmt;
pub mod sim;
pub mod substances;

pub use error::{Result, SimError};
