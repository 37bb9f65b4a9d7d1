//! Split-step propagation of the coupled three-wave equations.
//!
//! The coupled equations, pointwise in (x, y, t),
//!
//! ```text
//! da_s/dz =  σ·a_p·a_i*      da_i/dz =  σ·a_p·a_s*      da_p/dz = −σ·a_s·a_i
//! ```
//!
//! are advanced by a symmetric Strang composition per z-step: half a linear
//! step, one nonlinear step, half a linear step. The linear step multiplies
//! each envelope in Fourier space by `exp(i·dz·D_j(q_x, q_y, Ω))` — a pure
//! phase, so each wave's norm is conserved exactly. With a frozen pump
//! (`pump_dynamic = false`, the default) the nonlinear step applies the exact
//! cosh/sinh two-mode squeezer solution; with a dynamic pump it integrates
//! the full triple with a pointwise fourth-order Runge–Kutta step.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SimError, MAX_GAIN_PER_STEP};
use crate::fft::FftEngine;
use crate::field::{CrystalParams, FieldState, PumpParams, WaveDispersion, SPEED_OF_LIGHT};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wave {
    Signal,
    Idler,
    Pump,
}

/// Solver controls. The split-step ordering itself is fixed (symmetric
/// Strang); only the resolution and the pump treatment are configurable.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverParams {
    /// Number of z-steps across the crystal.
    pub nz: usize,
    /// Evolve the pump through the nonlinear step (depletion) instead of
    /// holding it frozen.
    pub pump_dynamic: bool,
    /// Treat the outer 10% of each transverse axis as an absorbing boundary,
    /// suppressing periodic wrap-around of walked-off emission. The boundary
    /// is a loss channel: after each step the signal and idler amplitudes in
    /// the taper band are attenuated and topped up with fresh vacuum noise,
    /// so the phase-space noise floor stays at half a photon per mode and the
    /// subtraction performed at detection remains unbiased. Disable for
    /// conservation tests.
    pub absorber: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { nz: 64, pump_dynamic: false, absorber: true }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.nz < 8 {
            return Err(SimError::Config(format!(
                "solver nz = {} must be at least 8",
                self.nz
            )));
        }
        Ok(())
    }
}

/// Dispersion phase rate D_j(q_x, q_y, Ω) [rad/m] for wave j: second-order
/// expansion of its wave-vector about the collinear degenerate carrier, in a
/// frame comoving at the pump group velocity —
///
/// ```text
/// D_j = −(q_x² + q_y²)/(2·k_j) − tan(ρ_j)·q_y − (n_g,j − n_g,p)/c·Ω + (k''_j/2)·Ω²
/// ```
///
/// with k_j = 2π·n_j/λ_j. The extraordinary-wave walk-off plane is the y
/// axis, leaving the long x axis of the default 256×64 grid walk-off free.
/// Temporal frequencies follow the same discrete sign convention as the
/// spatial axes. Collinear degenerate phase matching is assumed, so
/// D_j(0, 0, 0) = 0 for every wave.
pub fn dispersion_rate(
    crystal: &CrystalParams,
    pump: &PumpParams,
    wave: Wave,
    qx: f64,
    qy: f64,
    omega: f64,
) -> f64 {
    let (disp, lambda) = wave_data(crystal, pump, wave);
    let k = 2.0 * std::f64::consts::PI * disp.refractive_index / lambda;
    let walkoff = disp.walkoff_deg.to_radians().tan();
    let group_delay = (disp.group_index - crystal.pump.group_index) / SPEED_OF_LIGHT;
    -(qx * qx + qy * qy) / (2.0 * k) - walkoff * qy - group_delay * omega
        + 0.5 * disp.gvd * omega * omega
}

fn wave_data<'a>(
    crystal: &'a CrystalParams,
    pump: &PumpParams,
    wave: Wave,
) -> (&'a WaveDispersion, f64) {
    match wave {
        Wave::Signal => (&crystal.signal, pump.downconverted_wavelength()),
        Wave::Idler => (&crystal.idler, pump.downconverted_wavelength()),
        Wave::Pump => (&crystal.pump, pump.wavelength),
    }
}

/// Precomputed linear evolution over a fixed dz: per-wave unit-modulus
/// multipliers in Fourier space.
pub struct LinearStep {
    mult: [Array3<Complex64>; 3],
    norm: f64,
}

impl LinearStep {
    pub fn new(grid: &Grid, crystal: &CrystalParams, pump: &PumpParams, dz: f64) -> Self {
        let qx = grid.qx();
        let qy = grid.qy();
        let om = grid.omega();
        let build = |wave: Wave| {
            Array3::from_shape_fn((grid.nx, grid.ny, grid.nt), |(i, j, k)| {
                let d = dispersion_rate(crystal, pump, wave, qx[i], qy[j], om[k]);
                Complex64::from_polar(1.0, dz * d)
            })
        };
        LinearStep {
            mult: [build(Wave::Signal), build(Wave::Idler), build(Wave::Pump)],
            norm: 1.0 / grid.mode_count() as f64,
        }
    }

    /// Apply the step to all three envelopes: FFT, multiply, inverse FFT.
    pub fn apply(&self, state: &mut FieldState, engine: &mut FftEngine) {
        for (arr, mult) in [
            (&mut state.signal, &self.mult[0]),
            (&mut state.idler, &self.mult[1]),
            (&mut state.pump, &self.mult[2]),
        ] {
            engine.transform_all(arr, false);
            azip_mul(arr, mult);
            engine.transform_all(arr, true);
            let norm = self.norm;
            arr.mapv_inplace(|v| v * norm);
        }
    }
}

fn azip_mul(arr: &mut Array3<Complex64>, mult: &Array3<Complex64>) {
    ndarray::Zip::from(arr).and(mult).for_each(|a, &m| *a *= m);
}

/// One nonlinear step of length dz. Guards that the peak coupling phase
/// `σ·|a_p|·dz` stays below [`MAX_GAIN_PER_STEP`] and otherwise reports a
/// step-size error asking for a larger nz.
pub fn nonlinear_step(
    state: &mut FieldState,
    crystal: &CrystalParams,
    dz: f64,
    pump_dynamic: bool,
) -> Result<()> {
    let sigma = crystal.coupling;
    if sigma == 0.0 {
        return Ok(());
    }
    let peak = state.pump.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let gain_per_step = sigma * peak * dz;
    if gain_per_step >= MAX_GAIN_PER_STEP {
        return Err(SimError::StepSize { gain_per_step, limit: MAX_GAIN_PER_STEP });
    }
    if pump_dynamic {
        rk4_step(state, sigma, dz);
    } else {
        frozen_pump_step(state, sigma, dz);
    }
    Ok(())
}

/// Exact two-mode squeezer update for a frozen pump: for κ = σ·a_p·dz,
///
/// ```text
/// a_s ← cosh|κ|·a_s + (κ/|κ|)·sinh|κ|·a_i*
/// a_i ← cosh|κ|·a_i + (κ/|κ|)·sinh|κ|·a_s*
/// ```
fn frozen_pump_step(state: &mut FieldState, sigma: f64, dz: f64) {
    ndarray::Zip::from(&mut state.signal)
        .and(&mut state.idler)
        .and(&state.pump)
        .for_each(|s, i, &p| {
            let kappa = p.norm() * sigma * dz;
            if kappa == 0.0 {
                return;
            }
            let u = p / p.norm();
            let (ch, sh) = (kappa.cosh(), kappa.sinh());
            let s0 = *s;
            let i0 = *i;
            *s = ch * s0 + u * sh * i0.conj();
            *i = ch * i0 + u * sh * s0.conj();
        });
}

/// Classic fourth-order Runge–Kutta on the full three-wave triple, pointwise.
fn rk4_step(state: &mut FieldState, sigma: f64, dz: f64) {
    let f = |s: Complex64, i: Complex64, p: Complex64| {
        (sigma * p * i.conj(), sigma * p * s.conj(), -sigma * s * i)
    };
    ndarray::Zip::from(&mut state.signal)
        .and(&mut state.idler)
        .and(&mut state.pump)
        .for_each(|s, i, p| {
            let (s0, i0, p0) = (*s, *i, *p);
            let (k1s, k1i, k1p) = f(s0, i0, p0);
            let (k2s, k2i, k2p) =
                f(s0 + 0.5 * dz * k1s, i0 + 0.5 * dz * k1i, p0 + 0.5 * dz * k1p);
            let (k3s, k3i, k3p) =
                f(s0 + 0.5 * dz * k2s, i0 + 0.5 * dz * k2i, p0 + 0.5 * dz * k2p);
            let (k4s, k4i, k4p) = f(s0 + dz * k3s, i0 + dz * k3i, p0 + dz * k3p);
            let w = dz / 6.0;
            *s = s0 + w * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
            *i = i0 + w * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
            *p = p0 + w * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        });
}

/// Cosine-taper absorbing mask: unity over the inner 80% of each transverse
/// axis, falling smoothly to zero at the boundary over the outer 10% per side.
pub fn absorber_mask(grid: &Grid) -> Array2<f64> {
    let taper = |i: usize, n: usize| -> f64 {
        let edge = n / 10;
        if edge == 0 {
            return 1.0;
        }
        let d = i.min(n - 1 - i);
        if d >= edge {
            1.0
        } else {
            let s = (edge - d) as f64 / edge as f64;
            (std::f64::consts::FRAC_PI_2 * s).cos().powi(2)
        }
    };
    Array2::from_shape_fn((grid.nx, grid.ny), |(i, j)| taper(i, grid.nx) * taper(j, grid.ny))
}

/// Absorbing-boundary pass over one envelope: where the mask falls below
/// unity the amplitude is attenuated and the lost fraction replaced by fresh
/// vacuum, `a ← m·a + √(1−m²)·ξ`, keeping `⟨|a|²⟩ ≥ 1/2` everywhere. Dropping
/// the refill term would drain the vacuum floor below half a photon per mode
/// and bias every detected pixel negative.
fn apply_absorber(arr: &mut Array3<Complex64>, mask: &Array2<f64>, rng: &mut impl Rng) {
    let vacuum = Normal::new(0.0, 0.5).expect("fixed quadrature width");
    let (nx, ny, nt) = arr.dim();
    for i in 0..nx {
        for j in 0..ny {
            let m = mask[[i, j]];
            if m != 1.0 {
                let refill = (1.0 - m * m).sqrt();
                for k in 0..nt {
                    let xi = Complex64::new(vacuum.sample(rng), vacuum.sample(rng));
                    arr[[i, j, k]] = m * arr[[i, j, k]] + refill * xi;
                }
            }
        }
    }
}

/// Propagate the state through the crystal: nz symmetric split steps.
/// Advances `state.z` by the crystal length. The RNG feeds only the absorbing
/// boundary; with `absorber = false` the evolution is deterministic and the
/// RNG is never sampled.
pub fn propagate(
    state: &mut FieldState,
    crystal: &CrystalParams,
    pump: &PumpParams,
    solver: &SolverParams,
    rng: &mut impl Rng,
) -> Result<()> {
    solver.validate()?;
    crystal.validate()?;
    let dz = crystal.length / solver.nz as f64;
    let half = LinearStep::new(&state.grid, crystal, pump, dz / 2.0);
    let mask = solver.absorber.then(|| absorber_mask(&state.grid));
    let mut engine = FftEngine::new();
    for _ in 0..solver.nz {
        half.apply(state, &mut engine);
        nonlinear_step(state, crystal, dz, solver.pump_dynamic)?;
        half.apply(state, &mut engine);
        if let Some(mask) = &mask {
            apply_absorber(&mut state.signal, mask, rng);
            apply_absorber(&mut state.idler, mask, rng);
        }
    }
    state.z += crystal.length;
    Ok(())
}

/// Photon-flux imbalance `Σ(|a_s|² − |a_i|²)` — conserved by the coupling at
/// every point and by the linear step in total.
pub fn manley_rowe_difference(state: &FieldState) -> f64 {
    state
        .signal
        .iter()
        .zip(state.idler.iter())
        .map(|(s, i)| s.norm_sqr() - i.norm_sqr())
        .sum()
}

/// Total exchange-corrected energy `Σ(|a_p|² + (|a_s|² + |a_i|²)/2)` —
/// conserved by the coupling when the pump is dynamic.
pub fn energy_bookkeeping(state: &FieldState) -> f64 {
    let si: f64 = state
        .signal
        .iter()
        .zip(state.idler.iter())
        .map(|(s, i)| s.norm_sqr() + i.norm_sqr())
        .sum();
    FieldState::norm(&state.pump) + 0.5 * si
}
