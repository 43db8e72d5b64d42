//! Fock-space simulation of decoherence-free entanglement distribution with
//! a counter-propagating coherent ancilla over lossy, collectively dephasing
//! channels.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod analysis;
pub mod detection;
pub mod error;
pub mod fock;
pub mod optics;
pub mod oracle;
pub mod protocol;
pub mod sources;

pub use error::{Error, Result};
