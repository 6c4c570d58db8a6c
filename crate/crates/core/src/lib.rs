//! Random walks computed by spiking neural circuits.
//!
//! * [`network`]: discrete-time integrate-and-fire simulator with delays and
//!   stochastic firing.
//! * [`residue`]: residue number system position code.
//! * [`particle`]: per-walker ring oscillators read against shared reference rings.
//! * [`density`]: per-node counter units that count out and route walkers.
//! * [`oracle`] and [`stats`]: non-spiking Monte-Carlo reference and
//!   goodness-of-fit tools used to check the circuits.
//! * [`harness`]: scenario files, runs, file exports and oracle comparison.

pub mod density;
pub mod harness;
pub mod network;
pub mod oracle;
pub mod particle;
pub mod residue;
pub mod seed;
pub mod stats;
