//! Stochastic simulation of high-gain twin-beam generation and detection.
//!
//! The crate models vacuum-seeded three-wave mixing in a χ² crystal with a
//! phase-space Monte Carlo method: every run draws Gaussian vacuum noise for
//! the signal and idler envelopes, propagates the coupled three-wave
//! equations through the crystal with a symmetric split-step solver, lenses
//! the output into the far field, and pushes it through a detection chain
//! (quantum efficiency, pixel integration, additive background). The
//! statistics layer measures twin-beam correlations between
//! point-symmetric detector regions — difference variance against the shot
//! noise of matched coherent illumination, correlation maps, binning sweeps —
//! and the oracle module supplies the closed-form single-mode expectations
//! the numerics are validated against.
//!
//! Modules:
//! - [`grid`] — the computational lattice and its Fourier axes
//! - [`field`] — optical envelopes, pump construction, material parameters
//! - [`propagation`] — the split-step solver
//! - [`detection`] — far-field mapping, loss, pixel counts, background
//! - [`stats`] — pairing, difference variance, correlation maps, binning
//! - [`oracle`] — closed-form expectations for validation
//! - [`config`] — TOML experiment description and validation
//! - [`rng`] — deterministic, stream-separated random numbers
//! - [`io`] — matrix and image artifact writers

// Validation guards are written `!(x > 0.0)` so that NaN fails them; the
// forms the lint suggests would wave NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detection;
pub mod error;
pub mod fft;
pub mod field;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod propagation;
pub mod rng;
pub mod stats;

pub use error::{Result, SimError, MAX_GAIN_PER_STEP};
pub use grid::Grid;
