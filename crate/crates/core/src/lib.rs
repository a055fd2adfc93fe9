//! Probabilistic imaginary-time evolution (PITE), its amplitude-amplified
//! multi-step variant, and QFT-based phase estimation on small Heisenberg
//! chains, simulated exactly on dense statevectors.
//!
//! Module map:
//! - [`statevector`]: state, gates, circuits, depth accounting
//! - [`spin_model`]: chain, even/odd split, spectrum, initial states
//! - [`trotter`]: bond propagators and Suzuki product formulas
//! - [`kak`]: two-qubit KAK synthesis and controlled two-qubit circuits
//! - [`pite`]: block encodings, step circuits, multi-step runs
//! - [`qaa`]: amplitude amplification around the multi-step PITE block
//! - [`qpe`]: phase-estimation baseline
//! - [`cost`]: analytic depth and cost formulas
//! - [`experiment`]: configuration, sweeps and CSV/JSON output

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod error;
pub mod experiment;
pub mod kak;
pub mod linalg;
pub mod pite;
pub mod qaa;
pub mod qpe;
pub mod spin_model;
pub mod statevector;
pub mod trotter;

pub use error::{Error, Result};
