//! Variational separation of object and interference components in
//! chirp-sequence FMCW radar frames.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: ramp geometry, dictionaries, AAF models and the interference envelope.
//! - [`synth`]: scenario sampling and synthetic frame generation.
//! - [`vsep`]: the variational inference engine.
//! - [`baselines`]: zeroing, morphological component analysis and reduced engines.
//! - [`metrics`]: SNR/SIR, Cramér–Rao bounds, GOSPA and the coherence check.
//! - [`harness`]: Monte Carlo sweeps, configuration files and result export.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod vsep;

pub use error::{Error, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
