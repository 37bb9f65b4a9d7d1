//! Field model: interaction parameters and the three-envelope state.
//!
//! Envelopes are kept in photon-amplitude normalization: after correcting for
//! symmetric ordering, `|a|² − 1/2` is the photon number carried by one grid
//! mode. Vacuum input is therefore a circular complex Gaussian with
//! `⟨|a|²⟩ = 1/2` (quadrature variance 1/4) in every mode. The pump amplitude
//! carries arbitrary units; only the product `σ·A₀·L` — the dimensionless
//! gain exponent — is physical.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SimError};
use crate::grid::Grid;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Dispersion data for one interacting wave at its carrier frequency.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveDispersion {
    /// Phase refractive index n (sets the diffraction term via k = 2πn/λ).
    pub refractive_index: f64,
    /// Group index n_g = c/v_g.
    pub group_index: f64,
    /// Group-velocity dispersion k'' [s²/m].
    pub gvd: f64,
    /// Transverse walk-off angle [deg]; zero for ordinary waves.
    pub walkoff_deg: f64,
}

impl WaveDispersion {
    /// A wave with no dispersion at all (useful for synthetic test media).
    pub fn vacuum_like() -> Self {
        WaveDispersion { refractive_index: 1.0, group_index: 1.0, gvd: 0.0, walkoff_deg: 0.0 }
    }
}

/// Nonlinear crystal cut for collinear degenerate type-II down-conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalParams {
    /// Propagation length along z [m].
    pub length: f64,
    /// Nonlinear coupling σ [1/(amplitude·m)]; σ·A₀·length is the peak gain
    /// exponent g of the run.
    pub coupling: f64,
    /// Phase-matching cut angle [deg]; book-keeping only — its physical
    /// content is already folded into the per-wave dispersion data.
    pub theta_deg: f64,
    /// Azimuthal orientation [deg].
    pub phi_deg: f64,
    pub signal: WaveDispersion,
    pub idler: WaveDispersion,
    pub pump: WaveDispersion,
}

impl CrystalParams {
    /// Beta-barium-borate cut at θ = 49.05° for a 352 nm pump, Sellmeier-derived
    /// coefficients. Signal is the ordinary wave (no walk-off); idler and pump
    /// are extraordinary.
    pub fn bbo_type_ii() -> Self {
        CrystalParams {
            length: 4.0e-3,
            coupling: 250.0,
            theta_deg: 49.05,
            phi_deg: 0.0,
            signal: WaveDispersion {
                refractive_index: 1.66473,
                group_index: 1.69335,
                gvd: 8.79e-26,
                walkoff_deg: 0.0,
            },
            idler: WaveDispersion {
                refractive_index: 1.59529,
                group_index: 1.61808,
                gvd: 7.52e-26,
                walkoff_deg: 4.05,
            },
            pump: WaveDispersion {
                refractive_index: 1.62965,
                group_index: 1.72858,
                gvd: 2.17e-25,
                walkoff_deg: 4.37,
            },
        }
    }

    /// A fictitious medium with no linear dispersion, for solver validation
    /// against the single-mode closed forms.
    pub fn dispersionless(length: f64, coupling: f64) -> Self {
        CrystalParams {
            length,
            coupling,
            theta_deg: 0.0,
            phi_deg: 0.0,
            signal: WaveDispersion::vacuum_like(),
            idler: WaveDispersion::vacuum_like(),
            pump: WaveDispersion::vacuum_like(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0) {
            return Err(SimError::Config(format!(
                "crystal length = {} must be positive",
                self.length
            )));
        }
        if self.coupling < 0.0 {
            return Err(SimError::Config(format!(
                "crystal coupling = {} must be nonnegative",
                self.coupling
            )));
        }
        for (name, w) in [("signal", &self.signal), ("idler", &self.idler), ("pump", &self.pump)] {
            if w.refractive_index < 1.0 {
                return Err(SimError::Config(format!(
                    "{name} refractive index = {} must be at least 1",
                    w.refractive_index
                )));
            }
            if w.group_index < 1.0 {
                return Err(SimError::Config(format!(
                    "{name} group index = {} must be at least 1",
                    w.group_index
                )));
            }
        }
        Ok(())
    }
}

/// Pump pulse description. The transverse and temporal widths are intensity
/// full widths at half maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct PumpParams {
    /// Pump carrier wavelength λ_p [m].
    pub wavelength: f64,
    /// Transverse intensity FWHM [m].
    pub waist_fwhm: f64,
    /// Temporal intensity FWHM [s].
    pub duration_fwhm: f64,
    /// Peak field amplitude A₀ ≥ 0 [amplitude units].
    pub peak_amplitude: f64,
}

impl PumpParams {
    /// Degenerate signal/idler carrier wavelength — always derived as 2·λ_p,
    /// never stored separately.
    pub fn downconverted_wavelength(&self) -> f64 {
        2.0 * self.wavelength
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("pump wavelength", self.wavelength),
            ("pump waist_fwhm", self.waist_fwhm),
            ("pump duration_fwhm", self.duration_fwhm),
        ] {
            if !(v > 0.0) {
                return Err(SimError::Config(format!("{name} = {v} must be positive")));
            }
        }
        if self.peak_amplitude < 0.0 {
            return Err(SimError::Config(format!(
                "pump peak_amplitude = {} must be nonnegative",
                self.peak_amplitude
            )));
        }
        Ok(())
    }

    /// Peak amplitude from pulse energy via the ideal Gaussian pulse-energy
    /// integral: `ε_p = cal·A₀²·(π·w²/(4·ln2))·(τ·√(π/(4·ln2)))`, with the
    /// temporal factor dropped in the CW limit (`nt == 1`), where the
    /// calibration constant absorbs the per-unit-time normalization.
    pub fn amplitude_from_energy(
        pulse_energy: f64,
        calibration: f64,
        waist_fwhm: f64,
        duration_fwhm: f64,
        cw: bool,
    ) -> Result<f64> {
        if !(pulse_energy >= 0.0) {
            return Err(SimError::Config(format!(
                "pump pulse_energy = {pulse_energy} must be nonnegative"
            )));
        }
        if !(calibration > 0.0) {
            return Err(SimError::Config(format!(
                "pump energy_calibration = {calibration} must be positive"
            )));
        }
        let mut volume = transverse_profile_integral(waist_fwhm);
        if !cw {
            volume *= temporal_profile_integral(duration_fwhm);
        }
        Ok((pulse_energy / (calibration * volume)).sqrt())
    }
}

/// `∫∫ exp(−4·ln2·(x²+y²)/w²) dx dy = π·w²/(4·ln2)`.
pub fn transverse_profile_integral(waist_fwhm: f64) -> f64 {
    std::f64::consts::PI * waist_fwhm * waist_fwhm / (4.0 * std::f64::consts::LN_2)
}

/// `∫ exp(−4·ln2·t²/τ²) dt = τ·√(π/(4·ln2))`.
pub fn temporal_profile_integral(duration_fwhm: f64) -> f64 {
    duration_fwhm * (std::f64::consts::PI / (4.0 * std::f64::consts::LN_2)).sqrt()
}

/// The three complex envelopes on the lattice plus propagation bookkeeping.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub grid: Grid,
    /// Signal envelope a_s(x, y, t), indexed [x, y, t].
    pub signal: Array3<Complex64>,
    pub idler: Array3<Complex64>,
    pub pump: Array3<Complex64>,
    /// Propagation distance reached [m].
    pub z: f64,
}

impl FieldState {
    fn shape(grid: &Grid) -> (usize, usize, usize) {
        (grid.nx, grid.ny, grid.nt)
    }

    /// Total `Σ|a|²` of one envelope.
    pub fn norm(arr: &Array3<Complex64>) -> f64 {
        arr.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Fill signal and idler with vacuum noise: independent circular complex
/// Gaussians of mean zero and `⟨|a|²⟩ = 1/2` per mode (variance 1/4 in each
/// quadrature). The pump starts empty. Samples are drawn in memory order,
/// signal first — part of the reproducibility contract.
pub fn init_vacuum(grid: &Grid, rng: &mut impl Rng) -> FieldState {
    let quad = Normal::new(0.0, 0.5).expect("valid std");
    let shape = FieldState::shape(grid);
    let mut draw = |_| Complex64::new(quad.sample(rng), quad.sample(rng));
    let signal = Array3::from_shape_simple_fn(shape, || draw(()));
    let idler = Array3::from_shape_simple_fn(shape, || draw(()));
    FieldState {
        grid: grid.clone(),
        signal,
        idler,
        pump: Array3::zeros(shape),
        z: 0.0,
    }
}

/// Gaussian pump envelope
/// `A₀·exp(−2·ln2·(x²+y²)/w₀²)·exp(−2·ln2·t²/τ²)`, centred on the grid.
/// With `nt == 1` the temporal factor collapses to 1.
pub fn make_pump(params: &PumpParams, grid: &Grid) -> Result<Array3<Complex64>> {
    params.validate()?;
    if params.waist_fwhm < 4.0 * grid.dx || params.waist_fwhm < 4.0 * grid.dy {
        return Err(SimError::Resolution(format!(
            "pump waist {} m spans fewer than 4 grid steps (dx = {}, dy = {})",
            params.waist_fwhm, grid.dx, grid.dy
        )));
    }
    if grid.nt > 1 && params.duration_fwhm < 4.0 * grid.dt {
        return Err(SimError::Resolution(format!(
            "pump duration {} s spans fewer than 4 grid steps (dt = {})",
            params.duration_fwhm, grid.dt
        )));
    }
    if 4.0 * params.waist_fwhm > grid.width_x() || 4.0 * params.waist_fwhm > grid.width_y() {
        return Err(SimError::Resolution(format!(
            "grid window {} m × {} m must exceed 4× the pump waist {} m \
             (guard band against periodic wrap-around)",
            grid.width_x(),
            grid.width_y(),
            params.waist_fwhm
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    let w2 = params.waist_fwhm * params.waist_fwhm;
    let tau2 = params.duration_fwhm * params.duration_fwhm;
    let arr = Array3::from_shape_fn(FieldState::shape(grid), |(i, j, k)| {
        let x = grid.x(i);
        let y = grid.y(j);
        let spatial = (-2.0 * ln2 * (x * x + y * y) / w2).exp();
        let temporal = if grid.nt > 1 {
            let t = grid.t(k);
            (-2.0 * ln2 * t * t / tau2).exp()
        } else {
            1.0
        };
        Complex64::new(params.peak_amplitude * spatial * temporal, 0.0)
    });
    Ok(arr)
}

/// Uniform (plane-wave) pump of constant amplitude, for validating the solver
/// against the single-mode closed forms.
pub fn make_uniform_pump(peak_amplitude: f64, grid: &Grid) -> Array3<Complex64> {
    Array3::from_elem(FieldState::shape(grid), Complex64::new(peak_amplitude, 0.0))
}

/// Numerical pulse-energy integral of a pump map: `Σ|A|²·dx·dy(·dt)`.
pub fn pump_energy_integral(pump: &Array3<Complex64>, grid: &Grid) -> f64 {
    let cell = grid.dx * grid.dy * if grid.nt > 1 { grid.dt } else { 1.0 };
    FieldState::norm(pump) * cell
}

/// Transverse pump amplitude map at the central time slice (for gain-profile
/// references).
pub fn pump_transverse_map(pump: &Array3<Complex64>, grid: &Grid) -> Array2<f64> {
    let k = grid.nt / 2;
    Array2::from_shape_fn((grid.nx, grid.ny), |(i, j)| pump[[i, j, k]].norm())
}
