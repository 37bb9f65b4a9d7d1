//! Experiment configuration: TOML schema, defaults, and cross-validation.
//!
//! A configuration file describes one numbered experiment: the simulation
//! lattice, the crystal medium, the pump pulse, the solver controls, the
//! detection line, and the measurement plan (amplitude sweep, shot counts,
//! seeds, binning factors). [`ExperimentConfig::build`] turns the raw file
//! content into validated runtime parameter structs, rejecting unknown keys,
//! inconsistent geometry, and physically meaningless values up front — before
//! any propagation time is spent.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detection::{point_reflected, DetectorModel, PixelRegion, SpectralMask};
use crate::error::{Result, SimError};
use crate::field::{CrystalParams, PumpParams, WaveDispersion};
use crate::grid::Grid;
use crate::propagation::SolverParams;

/// Top-level TOML schema. Every section rejects unknown keys so that typos
/// fail loudly instead of silently falling back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub crystal: CrystalSection,
    pub pump: PumpSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub detector: DetectorSection,
    #[serde(default)]
    pub plan: PlanSection,
}

/// `[grid]` — the simulation lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    /// Temporal samples; 1 selects the monochromatic (CW) limit.
    #[serde(default = "default_nt")]
    pub nt: usize,
    /// Transverse steps [m].
    pub dx: f64,
    pub dy: f64,
    /// Temporal step [s]; irrelevant (but still validated) when nt = 1.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_nt() -> usize {
    1
}

fn default_dt() -> f64 {
    1e-13
}

/// `[crystal]` — the medium, as a named preset plus optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    /// `"bbo-type-ii"` (the physical medium) or `"dispersionless"` (a
    /// synthetic medium with no linear phase, for solver validation).
    #[serde(default = "default_preset")]
    pub preset: String,
    /// Crystal length [m]; overrides the preset value.
    pub length: Option<f64>,
    /// Nonlinear coupling σ [1/(amplitude·m)]; overrides the preset value.
    pub coupling: Option<f64>,
    /// Set false to zero all walk-off angles while keeping the rest of the
    /// dispersion data (isolates walk-off effects in studies).
    #[serde(default = "default_true")]
    pub walkoff: bool,
    /// Full per-wave dispersion overrides, replacing the preset tables.
    pub signal: Option<WaveDispersion>,
    pub idler: Option<WaveDispersion>,
    pub pump: Option<WaveDispersion>,
}

fn default_preset() -> String {
    "bbo-type-ii".into()
}

fn default_true() -> bool {
    true
}

impl CrystalSection {
    fn build(&self) -> Result<CrystalParams> {
        let mut crystal = match self.preset.as_str() {
            "bbo-type-ii" => CrystalParams::bbo_type_ii(),
            "dispersionless" => {
                let base = CrystalParams::bbo_type_ii();
                CrystalParams::dispersionless(base.length, base.coupling)
            }
            other => {
                return Err(SimError::Config(format!(
                    "unknown crystal preset {other:?}; \
                     expected \"bbo-type-ii\" or \"dispersionless\""
                )))
            }
        };
        if let Some(length) = self.length {
            crystal.length = length;
        }
        if let Some(coupling) = self.coupling {
            crystal.coupling = coupling;
        }
        if let Some(signal) = self.signal {
            crystal.signal = signal;
        }
        if let Some(idler) = self.idler {
            crystal.idler = idler;
        }
        if let Some(pump) = self.pump {
            crystal.pump = pump;
        }
        if !self.walkoff {
            crystal.signal.walkoff_deg = 0.0;
            crystal.idler.walkoff_deg = 0.0;
            crystal.pump.walkoff_deg = 0.0;
        }
        crystal.validate()?;
        Ok(crystal)
    }
}

/// `[pump]` — the pump pulse. Exactly one of `peak_amplitude` and
/// `pulse_energy` must be given; the latter is converted through the ideal
/// Gaussian profile integrals and `energy_calibration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    /// Carrier wavelength [m].
    pub wavelength: f64,
    /// Transverse intensity FWHM [m].
    pub waist_fwhm: f64,
    /// Temporal intensity FWHM [s].
    pub duration_fwhm: f64,
    pub peak_amplitude: Option<f64>,
    pub pulse_energy: Option<f64>,
    /// Energy-to-amplitude² conversion constant for `pulse_energy`.
    #[serde(default = "default_calibration")]
    pub energy_calibration: f64,
}

fn default_calibration() -> f64 {
    1.0
}

impl PumpSection {
    fn build(&self, cw: bool) -> Result<PumpParams> {
        let peak_amplitude = match (self.peak_amplitude, self.pulse_energy) {
            (Some(a), None) => a,
            (None, Some(energy)) => PumpParams::amplitude_from_energy(
                energy,
                self.energy_calibration,
                self.waist_fwhm,
                self.duration_fwhm,
                cw,
            )?,
            (Some(_), Some(_)) => {
                return Err(SimError::Config(
                    "pump.peak_amplitude and pump.pulse_energy are mutually exclusive; \
                     give exactly one"
                        .into(),
                ))
            }
            (None, None) => {
                return Err(SimError::Config(
                    "the pump needs either peak_amplitude or pulse_energy".into(),
                ))
            }
        };
        let pump = PumpParams {
            wavelength: self.wavelength,
            waist_fwhm: self.waist_fwhm,
            duration_fwhm: self.duration_fwhm,
            peak_amplitude,
        };
        pump.validate()?;
        Ok(pump)
    }
}

/// `[solver]` — split-step controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_nz")]
    pub nz: usize,
    #[serde(default)]
    pub pump_dynamic: bool,
    #[serde(default = "default_true")]
    pub absorber: bool,
}

fn default_nz() -> usize {
    64
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { nz: default_nz(), pump_dynamic: false, absorber: true }
    }
}

/// `[detector]` — imaging lens, CCD geometry, losses, and analysis boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub focal_length: f64,
    pub pixel_pitch: f64,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    pub efficiency: f64,
    #[serde(default)]
    pub background_sigma: f64,
    pub signal_region: PixelRegion,
    /// Omit to derive the idler box as the point reflection of the signal box
    /// through `center`.
    pub idler_region: Option<PixelRegion>,
    /// Far-field symmetry center in grid-cell coordinates (x, y).
    pub center: [f64; 2],
    pub spectral_mask: Option<SpectralMask>,
}

fn default_oversample() -> usize {
    1
}

impl DetectorSection {
    fn build(&self) -> Result<DetectorModel> {
        let center = (self.center[0], self.center[1]);
        let idler_region = match self.idler_region {
            Some(region) => region,
            None => point_reflected(&self.signal_region, center)?,
        };
        Ok(DetectorModel {
            focal_length: self.focal_length,
            pixel_pitch: self.pixel_pitch,
            oversample: self.oversample,
            efficiency: self.efficiency,
            background_sigma: self.background_sigma,
            signal_region: self.signal_region,
            idler_region,
            center,
            spectral_mask: self.spectral_mask,
        })
    }
}

/// Which per-shot photoelectron maps to write to disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaveMaps {
    /// No map artifacts.
    None,
    /// The first shot of every amplitude group.
    #[default]
    First,
    /// Every shot.
    All,
}

/// `[plan]` — the measurement campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    /// Master seed; every shot derives its own independent streams from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_shots")]
    pub shots_per_amplitude: usize,
    /// Pump peak amplitudes to sweep; each value substitutes the pump's
    /// nominal amplitude for its group of shots.
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    /// Symmetry-center search radius [px].
    #[serde(default = "default_center_shift")]
    pub max_center_shift: usize,
    /// Super-pixel sizes for the binning sweep; empty disables it.
    #[serde(default)]
    pub binning_factors: Vec<usize>,
    #[serde(default)]
    pub save_maps: SaveMaps,
    /// Deliberate idler-map displacement (x, y) [px] applied before analysis,
    /// emulating a misregistered symmetry center.
    #[serde(default)]
    pub misregistration: [f64; 2],
}

fn default_seed() -> u64 {
    42
}

fn default_shots() -> usize {
    10
}

fn default_center_shift() -> usize {
    2
}

impl Default for PlanSection {
    fn default() -> Self {
        PlanSection {
            seed: default_seed(),
            shots_per_amplitude: default_shots(),
            amplitudes: Vec::new(),
            max_center_shift: default_center_shift(),
            binning_factors: Vec::new(),
            save_maps: SaveMaps::default(),
            misregistration: [0.0, 0.0],
        }
    }
}

/// Validated measurement plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanParams {
    pub seed: u64,
    pub shots_per_amplitude: usize,
    pub amplitudes: Vec<f64>,
    pub max_center_shift: usize,
    pub binning_factors: Vec<usize>,
    pub save_maps: SaveMaps,
    pub misregistration: (f64, f64),
}

/// Fully validated runtime parameters, ready to drive shots.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub grid: Grid,
    pub crystal: CrystalParams,
    pub pump: PumpParams,
    pub solver: SolverParams,
    pub detector: DetectorModel,
    pub plan: PlanParams,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| SimError::Config(format!("configuration parse error: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Serialize back to TOML (for run manifests).
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| SimError::Config(format!("configuration serialize error: {e}")))
    }

    /// Validate everything and assemble the runtime parameter set.
    pub fn build(&self) -> Result<Experiment> {
        let grid = Grid::new(
            self.grid.nx,
            self.grid.ny,
            self.grid.nt,
            self.grid.dx,
            self.grid.dy,
            self.grid.dt,
        )?;
        let crystal = self.crystal.build()?;
        let pump = self.pump.build(grid.nt == 1)?;
        if 4.0 * pump.waist_fwhm > grid.width_x() || 4.0 * pump.waist_fwhm > grid.width_y() {
            return Err(SimError::Resolution(format!(
                "grid window {} m × {} m must exceed 4× the pump waist {} m \
                 (guard band against periodic wrap-around)",
                grid.width_x(),
                grid.width_y(),
                pump.waist_fwhm
            )));
        }
        let solver = SolverParams {
            nz: self.solver.nz,
            pump_dynamic: self.solver.pump_dynamic,
            absorber: self.solver.absorber,
        };
        solver.validate()?;
        let detector = self.detector.build()?;
        detector.validate(&grid, pump.downconverted_wavelength())?;

        let plan = &self.plan;
        if plan.seed > i64::MAX as u64 {
            return Err(SimError::Config(format!(
                "plan.seed = {} exceeds the TOML integer range; the run manifest \
                 echoes the configuration, so seeds must stay at or below 2^63 − 1",
                plan.seed
            )));
        }
        if plan.shots_per_amplitude == 0 {
            return Err(SimError::Config("plan.shots_per_amplitude must be at least 1".into()));
        }
        if plan.amplitudes.is_empty() {
            return Err(SimError::Config(
                "plan.amplitudes must list at least one pump amplitude".into(),
            ));
        }
        if let Some(bad) = plan.amplitudes.iter().find(|a| !(**a > 0.0)) {
            return Err(SimError::Config(format!(
                "plan amplitude {bad} must be positive"
            )));
        }
        if plan.binning_factors.contains(&0) {
            return Err(SimError::Config("binning factors must be at least 1".into()));
        }
        let region = &self.detector.signal_region;
        for &factor in &plan.binning_factors {
            let s = self.detector.oversample;
            if region.width / s / factor == 0 || region.height / s / factor == 0 {
                return Err(SimError::Config(format!(
                    "binning factor {factor} exceeds the {}×{} pixel analysis region",
                    region.width / s,
                    region.height / s
                )));
            }
        }
        Ok(Experiment {
            grid,
            crystal,
            pump,
            solver,
            detector,
            plan: PlanParams {
                seed: plan.seed,
                shots_per_amplitude: plan.shots_per_amplitude,
                amplitudes: plan.amplitudes.clone(),
                max_center_shift: plan.max_center_shift,
                binning_factors: plan.binning_factors.clone(),
                save_maps: plan.save_maps,
                misregistration: (plan.misregistration[0], plan.misregistration[1]),
            },
        })
    }
}
