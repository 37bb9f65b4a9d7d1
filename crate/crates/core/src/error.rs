//! Error types shared by every module of the simulator.

use thiserror::Error;

/// Hard limit on the nonlinear phase advanced in one z-step, `σ·|a_p|·dz`.
/// Above this the split-step composition is no longer trustworthy.
pub const MAX_GAIN_PER_STEP: f64 = 0.3;

#[derive(Debug, Error)]
pub enum SimError {
    /// Configuration rejected while parsing or validating.
    #[error("config error: {0}")]
    Config(String),

    /// A physical scale cannot be resolved on the requested grid.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// The z-step is too coarse for the nonlinear coupling strength.
    #[error(
        "step-size error: peak coupling per z-step σ·|a_p|·dz = {gain_per_step:.4} exceeds {limit}; \
         increase solver nz by at least a factor {:.2}",
        gain_per_step / limit
    )]
    StepSize { gain_per_step: f64, limit: f64 },

    /// Pixel-region geometry that does not fit the simulated grid.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Degenerate statistical input: empty ensemble, zero variance, zero
    /// shot-noise level, or an empty search window.
    #[error("statistics error: {0}")]
    Statistics(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
