//! Self-adapting MIMO channel estimation.
//!
//! This crate is `no_std` (with `alloc`) and holds every piece of the system
//! that is pure computation:
//!
//! - [`channel`]: clustered multipath channel synthesis, mobility, pilot
//!   observations and scenario presets.
//! - [`estimators`]: least squares, ISTA over an angular dictionary, LMMSE,
//!   the learned linear (empirical Wiener) estimator and the NMSE metric.
//! - [`agent`]: the single-agent observation/action loop, memory and toolbox.
//! - [`selector`]: the deterministic rule engine that picks an estimator
//!   class from environment features.
//! - [`suite`]: per-scenario estimator resources shared by baselines and agents.
//! - [`orchestration`]: the supervisor that plans an executor workflow and
//!   the selector/code-agent closed loop with diagnostic-driven reselection.
//!
//! IO, configuration files, the chat-completion adapter and the experiment
//! harness live in the companion `automas` crate.

#![no_std]
#![warn(missing_debug_implementations)]
// `!(x >= 0.0)` rejects NaN along with negatives
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agent;
pub mod channel;
pub mod estimators;
pub mod linalg;
pub mod math;
pub mod orchestration;
pub mod rng;
pub mod selector;
pub mod suite;

pub use num_complex::Complex64 as C64;
