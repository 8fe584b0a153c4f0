//! Wigner-Eisenbud reaction-matrix scattering for a potential that is periodic
//! along `x` and localized along `z`.
//!
//! The crate splits the problem by Bloch channel: every channel `K` gets its own
//! reaction-region eigenbasis ([`reaction`]), from which reaction matrices, the
//! evanescent-mode S-matrix ([`scattering`]) and the continuum-state analysis
//! ([`continuum`]) follow. [`validation`] holds independent oracles used to
//! certify the pipeline, and [`cli`] drives the figure-level experiments.
//!
//! Units are atomic throughout (ħ = m = 1).

pub mod bloch;
pub mod cli;
pub mod continuum;
pub mod error;
pub mod linalg;
pub mod potential;
pub mod quad;
pub mod reaction;
pub mod scattering;
pub mod special;
pub mod validation;

pub use error::{BicError, Result};
pub use num_complex::Complex64;
