//! Noise-wave analysis of interconnected multiport networks.
//!
//! A system is a set of scattering blocks joined port-to-port. Every port
//! carries an incident wave `a`, an outgoing wave `b`, and a noise wave `c`
//! emitted by the component behind it, related by `b = S (K b + a_s) + c`
//! where `K` is the 0/1 connection matrix and `a_s` are external source
//! waves. Solving that system gives the propagation matrix
//! `Q = (I - S K)^-1`, from which output noise correlations, beam-equivalent
//! receiver temperatures, mutual coherence and correlation gain follow.
//!
//! Noise correlations are carried in kelvin throughout (power spectral
//! density divided by `k B`).
//!
//! The [`canceler`] module builds the two-element replica-array coupling
//! canceler and [`sweep`] drives the parameter studies over it.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod canceler;
mod error;
pub mod gainmod;
pub mod linalg;
pub mod network;
pub mod noisewave;
pub mod sweep;
pub mod touchstone;
pub mod units;

pub use error::{Error, Result};
pub use units::{CMatrix, CVector, T0, Z0};
