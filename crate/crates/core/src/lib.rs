//! Deterministic discrete-event simulator of a cross-network covert
//! timing channel through a shared server's DRAM banks.
//!
//! An RDMA-style fabric carries one-sided 64B reads from a sender and a
//! receiver into disjoint regions of an intermediary's memory. The sender
//! modulates the queue depth of one bank with shaped read bursts; the
//! receiver decodes the resulting round-trip swings against a calibrated
//! baseline. The crate also implements the attacker-side bank-bit
//! discovery search and the keyed-interleaving mitigation that defeats it.

pub mod channel;
pub mod discovery;
pub mod error;
pub mod memsys;
pub mod presets;
pub mod rdmanet;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod simkernel;
pub mod stats;

pub use error::{Error, Result};
pub use simkernel::SimTime;
