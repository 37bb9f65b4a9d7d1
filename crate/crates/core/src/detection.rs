//! Far-field detection chain: lens transform, spectral mask, photon losses,
//! pixelated photoelectron maps, background noise, binning, and the coherent
//! calibration source.
//!
//! The chain mirrors a twin-beam measurement line: the crystal output is
//! imaged by a lens of focal length f into its focal plane (an exact optical
//! Fourier transform, x' = f·q/k), each arm passes a lumped efficiency η, and
//! a CCD integrates |α|² − 1/2 per grid mode inside each pixel (the −1/2
//! removes the symmetric-ordering vacuum contribution of the phase-space
//! samples). Background electronics noise is additive Gaussian per pixel.
//! Negative photoelectron values are deliberately preserved: clipping would
//! bias the variance statistics this simulator exists to measure.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::fft::{fftshift2, FftEngine};
use crate::field::{FieldState, PumpParams, SPEED_OF_LIGHT};
use crate::grid::Grid;

/// Axis-aligned pixel box on the far-field grid, in grid-cell units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelRegion {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRegion {
    pub fn validate(&self, grid: &Grid, oversample: usize) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(SimError::Geometry(format!(
                "detector region {self:?} has a zero dimension"
            )));
        }
        if self.x0 + self.width > grid.nx || self.y0 + self.height > grid.ny {
            return Err(SimError::Geometry(format!(
                "detector region {self:?} exceeds the {}×{} far-field grid",
                grid.nx, grid.ny
            )));
        }
        if !self.width.is_multiple_of(oversample) || !self.height.is_multiple_of(oversample) {
            return Err(SimError::Geometry(format!(
                "detector region {}×{} is not divisible by the oversample factor {}",
                self.width, self.height, oversample
            )));
        }
        Ok(())
    }
}

/// The box holding the twins of `region` under point reflection through
/// `center`: cell i maps to 2c − i on each axis. Both 2·cx and 2·cy must be
/// integers so the reflection maps the cell lattice onto itself.
pub fn point_reflected(region: &PixelRegion, center: (f64, f64)) -> Result<PixelRegion> {
    let reflect = |c: f64, last: usize| -> Result<usize> {
        let two_c = 2.0 * c;
        if (two_c - two_c.round()).abs() > 1e-9 {
            return Err(SimError::Geometry(format!(
                "symmetry center coordinate {c} is not half-integral; \
                 the point reflection must map pixels to pixels"
            )));
        }
        let start = two_c.round() as i64 - last as i64;
        if start < 0 {
            return Err(SimError::Geometry(format!(
                "point reflection through {c} sends the region below index 0"
            )));
        }
        Ok(start as usize)
    };
    Ok(PixelRegion {
        x0: reflect(center.0, region.x0 + region.width - 1)?,
        y0: reflect(center.1, region.y0 + region.height - 1)?,
        width: region.width,
        height: region.height,
    })
}

/// Hard spectral bandpass of an interference filter in front of the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralMask {
    /// Filter center wavelength [m].
    pub center_wavelength: f64,
    /// Full transmission bandwidth [m]; a mode passes iff its wavelength lies
    /// strictly inside center ± bandwidth/2.
    pub bandwidth: f64,
}

impl SpectralMask {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength > 0.0) {
            return Err(SimError::Config(format!(
                "spectral mask center_wavelength = {} must be positive",
                self.center_wavelength
            )));
        }
        if self.bandwidth < 0.0 {
            return Err(SimError::Config(format!(
                "spectral mask bandwidth = {} must be nonnegative",
                self.bandwidth
            )));
        }
        Ok(())
    }

    /// Transmission (0 or 1) for a temporal mode at envelope frequency Ω
    /// around a carrier of the given wavelength.
    pub fn passes(&self, omega: f64, carrier_wavelength: f64) -> bool {
        let omega_c = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / carrier_wavelength;
        let lambda = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (omega_c + omega);
        (lambda - self.center_wavelength).abs() < self.bandwidth / 2.0
    }
}

/// Which detection box a photoelectron map came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionId {
    Signal,
    Idler,
}

/// Detection-line geometry and imperfections shared by both arms.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    /// Focal length of the imaging lens [m].
    pub focal_length: f64,
    /// Physical CCD pixel pitch [m]; must equal `oversample` far-field grid
    /// steps on both axes.
    pub pixel_pitch: f64,
    /// Far-field grid cells per pixel side (1 = one grid mode per pixel).
    pub oversample: usize,
    /// Lumped transmission × quantum efficiency of each arm.
    pub efficiency: f64,
    /// RMS additive background per pixel [pe].
    pub background_sigma: f64,
    /// Signal-arm analysis box.
    pub signal_region: PixelRegion,
    /// Idler-arm analysis box; must be the point reflection of the signal box.
    pub idler_region: PixelRegion,
    /// Symmetry center of the far field, in grid-cell coordinates.
    pub center: (f64, f64),
    /// Optional interference filter applied to both arms before detection.
    pub spectral_mask: Option<SpectralMask>,
}

impl DetectorModel {
    /// Check internal consistency against the grid and the down-converted
    /// wavelength (which fixes the far-field pitch).
    pub fn validate(&self, grid: &Grid, downconverted_wavelength: f64) -> Result<()> {
        if !(self.focal_length > 0.0) {
            return Err(SimError::Config(format!(
                "detector focal_length = {} must be positive",
                self.focal_length
            )));
        }
        if !(self.pixel_pitch > 0.0) {
            return Err(SimError::Config(format!(
                "detector pixel_pitch = {} must be positive",
                self.pixel_pitch
            )));
        }
        if self.oversample == 0 {
            return Err(SimError::Config("detector oversample must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(SimError::Config(format!(
                "detector efficiency = {} outside [0, 1]",
                self.efficiency
            )));
        }
        if self.background_sigma < 0.0 {
            return Err(SimError::Config(format!(
                "detector background_sigma = {} must be nonnegative",
                self.background_sigma
            )));
        }
        self.signal_region.validate(grid, self.oversample)?;
        self.idler_region.validate(grid, self.oversample)?;
        let mirrored = point_reflected(&self.signal_region, self.center)?;
        if mirrored != self.idler_region {
            return Err(SimError::Geometry(format!(
                "idler region {:?} is not the point reflection of the signal \
                 region through {:?} (expected {:?})",
                self.idler_region, self.center, mirrored
            )));
        }
        // One CCD pixel must cover exactly `oversample` far-field steps, i.e.
        // pixel_pitch = oversample·f·λ/(n·d) on each axis, within 0.5%.
        for (axis, n, d) in [("x", grid.nx, grid.dx), ("y", grid.ny, grid.dy)] {
            let step = self.oversample as f64 * self.focal_length * downconverted_wavelength
                / (n as f64 * d);
            if (step - self.pixel_pitch).abs() > 5e-3 * self.pixel_pitch {
                return Err(SimError::Config(format!(
                    "pixel_pitch = {} m is inconsistent with the far-field {axis} step: \
                     oversample·f·λ/(n·d) = {step} m (must agree within 0.5%)",
                    self.pixel_pitch
                )));
            }
        }
        if let Some(mask) = &self.spectral_mask {
            mask.validate()?;
        }
        Ok(())
    }
}

/// One detection box worth of photoelectron counts. `counts[[i, j]]` is the
/// pixel at (x, y) offset (i, j) inside the originating region; values may be
/// negative (symmetric-ordering fluctuations, background) and are never
/// clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct PeMap {
    pub counts: Array2<f64>,
    /// Physical pixel pitch [m] at the current binning.
    pub pixel_pitch: f64,
    /// Shot that produced the map.
    pub shot_id: u64,
    /// Which detection box the map covers.
    pub region_id: RegionId,
    /// Detector pixels per map cell side (1 = native CCD pixels).
    pub bin: usize,
}

/// Crystal-output fields mapped to the lens focal plane. The transverse axes
/// are centered (zero frequency at index n/2) and sample the focal plane with
/// the given pitch for the down-converted waves; the temporal axis is
/// untouched. The transform is unitary, so Σ|a|² per wave is preserved.
#[derive(Debug, Clone)]
pub struct FarField {
    pub grid: Grid,
    pub signal: Array3<Complex64>,
    pub idler: Array3<Complex64>,
    pub pump: Array3<Complex64>,
    /// Focal-plane sample step (x, y) [m] for the signal/idler wavelength.
    pub pitch: (f64, f64),
}

/// Lens transform into the focal plane: unitary 2-D FFT per wave and time
/// slice, centered so that transverse wavevector q appears at position
/// x' = f·q/k, with k = 2π/λ the down-converted vacuum wavenumber.
pub fn to_far_field(
    state: &FieldState,
    pump: &PumpParams,
    focal_length: f64,
    engine: &mut FftEngine,
) -> FarField {
    let mut transform = |arr: &Array3<Complex64>| {
        let mut out = arr.clone();
        engine.unitary_fft2(&mut out, false);
        fftshift2(&out)
    };
    let lambda = pump.downconverted_wavelength();
    let grid = &state.grid;
    FarField {
        grid: grid.clone(),
        signal: transform(&state.signal),
        idler: transform(&state.idler),
        pump: transform(&state.pump),
        pitch: (
            focal_length * lambda / (grid.nx as f64 * grid.dx),
            focal_length * lambda / (grid.ny as f64 * grid.dy),
        ),
    }
}

/// Lumped linear loss on one arm: α → √η·α + √(1−η)·ξ with ξ fresh vacuum
/// (circular Gaussian, ⟨|ξ|²⟩ = 1/2). η = 1 is a bit-exact identity and
/// consumes no random numbers. Draw order is the array's logical iteration
/// order and is part of the reproducibility contract.
pub fn apply_loss(arr: &mut Array3<Complex64>, efficiency: f64, rng: &mut impl Rng) -> Result<()> {
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(SimError::Config(format!(
            "loss efficiency = {efficiency} outside [0, 1]"
        )));
    }
    if efficiency == 1.0 {
        return Ok(());
    }
    let vacuum = Normal::new(0.0, 0.5).expect("fixed quadrature width");
    let t = efficiency.sqrt();
    let r = (1.0 - efficiency).sqrt();
    for a in arr.iter_mut() {
        let xi = Complex64::new(vacuum.sample(rng), vacuum.sample(rng));
        *a = t * *a + r * xi;
    }
    Ok(())
}

/// Hard interference-filter bandpass on one envelope, applied in the
/// temporal-frequency domain: modes whose wavelength falls outside the mask
/// band are zeroed. With a single temporal sample there is no spectral axis
/// to filter — the call warns and leaves the field untouched. A mask passing
/// every mode is also an exact identity.
pub fn apply_bandpass(
    arr: &mut Array3<Complex64>,
    grid: &Grid,
    mask: &SpectralMask,
    carrier_wavelength: f64,
    engine: &mut FftEngine,
) {
    if grid.nt == 1 {
        log::warn!("spectral mask ignored: grid has a single temporal sample");
        return;
    }
    let omega = grid.omega();
    let pass: Vec<bool> = omega.iter().map(|&o| mask.passes(o, carrier_wavelength)).collect();
    if pass.iter().all(|&p| p) {
        return;
    }
    engine.transform_axis(arr, 2, false);
    for ((_, _, k), v) in arr.indexed_iter_mut() {
        if !pass[k] {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    engine.transform_axis(arr, 2, true);
    let scale = 1.0 / grid.nt as f64;
    arr.mapv_inplace(|v| v * scale);
}

/// Apply the detector's interference filter to both detection arms (the pump
/// never reaches the cameras).
pub fn spectral_mask(
    far: &mut FarField,
    mask: &SpectralMask,
    carrier_wavelength: f64,
    engine: &mut FftEngine,
) {
    let grid = far.grid.clone();
    apply_bandpass(&mut far.signal, &grid, mask, carrier_wavelength, engine);
    apply_bandpass(&mut far.idler, &grid, mask, carrier_wavelength, engine);
}

/// Integrate one detection box into photoelectron counts: each pixel sums
/// |α|² − 1/2 over its oversample² grid cells and all temporal modes. The
/// −1/2 removes the symmetric-ordering vacuum term mode by mode, so vacuum
/// input averages to zero pe.
pub fn detect_pixels(
    far: &FarField,
    det: &DetectorModel,
    region: &PixelRegion,
    region_id: RegionId,
    shot_id: u64,
) -> Result<PeMap> {
    region.validate(&far.grid, det.oversample)?;
    let arr = match region_id {
        RegionId::Signal => &far.signal,
        RegionId::Idler => &far.idler,
    };
    let s = det.oversample;
    let nt = far.grid.nt;
    let mut counts = Array2::<f64>::zeros((region.width / s, region.height / s));
    for i in 0..region.width {
        for j in 0..region.height {
            let mut acc = 0.0;
            for k in 0..nt {
                acc += arr[[region.x0 + i, region.y0 + j, k]].norm_sqr();
            }
            counts[[i / s, j / s]] += acc - 0.5 * nt as f64;
        }
    }
    Ok(PeMap { counts, pixel_pitch: det.pixel_pitch, shot_id, region_id, bin: 1 })
}

/// Additive electronics background: independent zero-mean Gaussian of
/// standard deviation σ_b on every pixel. σ_b = 0 is a bit-exact identity and
/// consumes no random numbers.
pub fn add_background(map: &mut PeMap, sigma: f64, rng: &mut impl Rng) -> Result<()> {
    if sigma < 0.0 {
        return Err(SimError::Config(format!(
            "background sigma = {sigma} must be nonnegative"
        )));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    let noise = Normal::new(0.0, sigma).expect("validated width");
    for c in map.counts.iter_mut() {
        *c += noise.sample(rng);
    }
    Ok(())
}

fn bin_array(counts: &Array2<f64>, n: usize) -> Array2<f64> {
    let (w, h) = counts.dim();
    let (bw, bh) = (w / n, h / n);
    let mut out = Array2::<f64>::zeros((bw, bh));
    for i in 0..bw * n {
        for j in 0..bh * n {
            out[[i / n, j / n]] += counts[[i, j]];
        }
    }
    out
}

/// Group N×N blocks of pixels into super-pixels by summation. Trailing rows
/// and columns that do not fill a block are discarded (a cropped analysis
/// region); within the kept area the total pe is preserved exactly. N = 1
/// returns the map unchanged.
pub fn bin_pixels(map: &PeMap, n: usize) -> Result<PeMap> {
    if n == 0 {
        return Err(SimError::Config("binning factor must be at least 1".into()));
    }
    let (w, h) = map.counts.dim();
    if w / n == 0 || h / n == 0 {
        return Err(SimError::Geometry(format!(
            "binning factor {n} exceeds the {w}×{h} map"
        )));
    }
    if n == 1 {
        return Ok(map.clone());
    }
    Ok(PeMap {
        counts: bin_array(&map.counts, n),
        pixel_pitch: map.pixel_pitch * n as f64,
        shot_id: map.shot_id,
        region_id: map.region_id,
        bin: map.bin * n,
    })
}

/// Shot-noise calibration source: a coherent beam split onto the two boxes.
/// Each pixel of each arm is an independent Poisson draw with the mean given
/// by `means` (zero means produce zero counts). Returns the (signal, idler)
/// pair; the signal map is filled first, row-major — the draw order is part
/// of the reproducibility contract.
pub fn coherent_source(
    means: &Array2<f64>,
    pixel_pitch: f64,
    shot_id: u64,
    rng: &mut impl Rng,
) -> Result<(PeMap, PeMap)> {
    if let Some(bad) = means.iter().find(|m| !(**m >= 0.0)) {
        return Err(SimError::Config(format!(
            "coherent source mean {bad} must be nonnegative and finite"
        )));
    }
    let mut draw = |region_id: RegionId| -> Result<PeMap> {
        let mut counts = Array2::<f64>::zeros(means.dim());
        for (c, &m) in counts.iter_mut().zip(means.iter()) {
            if m > 0.0 {
                let poisson = Poisson::new(m).map_err(|e| {
                    SimError::Config(format!("coherent source mean {m}: {e}"))
                })?;
                *c = poisson.sample(rng);
            }
        }
        Ok(PeMap { counts, pixel_pitch, shot_id, region_id, bin: 1 })
    };
    Ok((draw(RegionId::Signal)?, draw(RegionId::Idler)?))
}

fn fft_modes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 })
        .collect()
}

/// Translate a map's content by a (possibly fractional) number of pixels via
/// a Fourier phase ramp: the feature at pixel p moves to p + (dx, dy), with
/// cyclic wrap-around at the map edges. The total Σpe is preserved exactly
/// (the zero-frequency component is untouched). Used to emulate
/// misregistration of the symmetry center between the two arms.
pub fn subpixel_shift(map: &mut PeMap, dx: f64, dy: f64, engine: &mut FftEngine) {
    if dx == 0.0 && dy == 0.0 {
        return;
    }
    let (w, h) = map.counts.dim();
    let mut buf = Array3::from_shape_fn((w, h, 1), |(i, j, _)| {
        Complex64::new(map.counts[[i, j]], 0.0)
    });
    engine.transform_axis(&mut buf, 0, false);
    engine.transform_axis(&mut buf, 1, false);
    let fx = fft_modes(w);
    let fy = fft_modes(h);
    let tau = 2.0 * std::f64::consts::PI;
    for ((i, j, _), v) in buf.indexed_iter_mut() {
        let phase = -tau * (fx[i] * dx / w as f64 + fy[j] * dy / h as f64);
        *v *= Complex64::from_polar(1.0, phase);
    }
    engine.transform_axis(&mut buf, 0, true);
    engine.transform_axis(&mut buf, 1, true);
    let scale = 1.0 / (w * h) as f64;
    for ((i, j), c) in map.counts.indexed_iter_mut() {
        *c = buf[[i, j, 0]].re * scale;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::init_vacuum;
    use crate::oracle::profile_fwhm;
    use crate::rng::{shot_rng, StreamRole};
    use approx::assert_relative_eq;
    use rand::RngCore;

    fn pump_params() -> PumpParams {
        PumpParams {
            wavelength: 352e-9,
            waist_fwhm: 0.85e-3,
            duration_fwhm: 1e-12,
            peak_amplitude: 3.0,
        }
    }

    fn bare_far_field(grid: &Grid, signal: Array3<Complex64>) -> FarField {
        let shape = signal.dim();
        FarField {
            grid: grid.clone(),
            signal,
            idler: Array3::zeros(shape),
            pump: Array3::zeros(shape),
            pitch: (1.0, 1.0),
        }
    }

    fn desk_detector() -> DetectorModel {
        DetectorModel {
            focal_length: 0.1,
            pixel_pitch: 2.0e-5,
            oversample: 1,
            efficiency: 0.75,
            background_sigma: 7.0,
            signal_region: PixelRegion { x0: 78, y0: 12, width: 100, height: 40 },
            idler_region: PixelRegion { x0: 79, y0: 13, width: 100, height: 40 },
            center: (128.0, 32.0),
            spectral_mask: None,
        }
    }

    #[test]
    fn desk_detector_is_self_consistent() {
        let grid = Grid::new(256, 64, 1, 1.375e-5, 5.5e-5, 1e-13).unwrap();
        desk_detector().validate(&grid, 704e-9).unwrap();
    }

    #[test]
    fn idler_region_is_the_point_reflection() {
        let region = PixelRegion { x0: 78, y0: 12, width: 100, height: 40 };
        let mirrored = point_reflected(&region, (128.0, 32.0)).unwrap();
        assert_eq!(mirrored, PixelRegion { x0: 79, y0: 13, width: 100, height: 40 });
        // Reflecting twice returns the original box.
        assert_eq!(point_reflected(&mirrored, (128.0, 32.0)).unwrap(), region);
        // A center too close to the origin pushes the twin box out of range.
        assert!(matches!(
            point_reflected(&region, (40.0, 32.0)),
            Err(SimError::Geometry(_))
        ));
        // Non-half-integral centers cannot map the lattice onto itself.
        assert!(matches!(
            point_reflected(&region, (128.3, 32.0)),
            Err(SimError::Geometry(_))
        ));
    }

    #[test]
    fn mismatched_idler_region_is_rejected() {
        let grid = Grid::new(256, 64, 1, 1.375e-5, 5.5e-5, 1e-13).unwrap();
        let det = DetectorModel {
            idler_region: PixelRegion { x0: 80, y0: 13, width: 100, height: 40 },
            ..desk_detector()
        };
        assert!(matches!(det.validate(&grid, 704e-9), Err(SimError::Geometry(_))));
    }

    #[test]
    fn far_field_preserves_norm_and_maps_tilt_to_position() {
        let n = 64;
        let grid = Grid::new(n, n, 1, 1e-5, 1e-5, 1e-13).unwrap();
        let m = 5usize; // integer tilt: q₀ = m·2π/(n·dx)
        let signal = Array3::from_shape_fn((n, n, 1), |(i, j, _)| {
            let _ = j;
            Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * (m * i) as f64 / n as f64)
        });
        let state = FieldState {
            grid: grid.clone(),
            signal: signal.clone(),
            idler: Array3::zeros((n, n, 1)),
            pump: Array3::zeros((n, n, 1)),
            z: 4e-3,
        };
        let mut engine = FftEngine::new();
        let far = to_far_field(&state, &pump_params(), 0.1, &mut engine);
        let before = FieldState::norm(&signal);
        let after = FieldState::norm(&far.signal);
        assert_relative_eq!(before, after, max_relative = 1e-12);
        // All energy lands at the shifted-center pixel (n/2 + m, n/2).
        let peak = far.signal[[n / 2 + m, n / 2, 0]].norm();
        assert_relative_eq!(peak, (before).sqrt(), max_relative = 1e-10);
        // Far-field pitch follows f·λ/(n·d) on each axis.
        assert_relative_eq!(far.pitch.0, 0.1 * 704e-9 / (n as f64 * 1e-5), max_relative = 1e-12);
    }

    #[test]
    fn gaussian_far_field_has_the_conjugate_waist() {
        // Wide window so the focal-plane FWHM spans many samples.
        let n = 256;
        let dx = 1.1e-4;
        let grid = Grid::new(n, n, 1, dx, dx, 1e-13).unwrap();
        let w = 0.85e-3;
        let ln2 = std::f64::consts::LN_2;
        let signal = Array3::from_shape_fn((n, n, 1), |(i, j, _)| {
            let x = grid.x(i);
            let y = grid.y(j);
            Complex64::new((-2.0 * ln2 * (x * x + y * y) / (w * w)).exp(), 0.0)
        });
        let state = FieldState {
            grid: grid.clone(),
            signal,
            idler: Array3::zeros((n, n, 1)),
            pump: Array3::zeros((n, n, 1)),
            z: 0.0,
        };
        let mut engine = FftEngine::new();
        let focal = 0.1;
        let far = to_far_field(&state, &pump_params(), focal, &mut engine);
        let profile: Vec<f64> =
            (0..n).map(|i| far.signal[[i, n / 2, 0]].norm_sqr()).collect();
        let measured = profile_fwhm(&profile, far.pitch.0).unwrap();
        let k = 2.0 * std::f64::consts::PI / 704e-9;
        let expected = 4.0 * ln2 * focal / (k * w);
        assert_relative_eq!(measured, expected, max_relative = 2e-2);
    }

    #[test]
    fn unit_efficiency_is_a_bit_exact_identity() {
        let grid = Grid::new(16, 16, 1, 1e-5, 1e-5, 1e-13).unwrap();
        let mut rng = shot_rng(1, 0, 0, StreamRole::SignalLoss);
        let mut twin = rng.clone();
        let state = init_vacuum(&grid, &mut shot_rng(1, 0, 0, StreamRole::Vacuum));
        let mut arr = state.signal.clone();
        apply_loss(&mut arr, 1.0, &mut rng).unwrap();
        assert_eq!(arr, state.signal);
        // No random numbers were consumed.
        assert_eq!(rng.next_u64(), twin.next_u64());
    }

    #[test]
    fn zero_efficiency_yields_vacuum_statistics() {
        let n = 128;
        let mut arr = Array3::from_elem((n, n, 1), Complex64::new(2.0, 0.0));
        let mut rng = shot_rng(2, 0, 0, StreamRole::SignalLoss);
        apply_loss(&mut arr, 0.0, &mut rng).unwrap();
        let modes = (n * n) as f64;
        let mean = FieldState::norm(&arr) / modes;
        // ⟨|ξ|²⟩ = 1/2 with per-mode std 1/2.
        assert!((mean - 0.5).abs() < 4.0 * 0.5 / modes.sqrt(), "mean {mean}");
    }

    #[test]
    fn loss_scales_the_detected_mean_and_composes() {
        let n = 128;
        let amp = 2.0;
        let photons = amp * amp - 0.5;
        let modes = (n * n) as f64;
        let detected_mean = |eta: f64, stream: u64| {
            let mut arr = Array3::from_elem((n, n, 1), Complex64::new(amp, 0.0));
            let mut rng = shot_rng(3, stream, 0, StreamRole::SignalLoss);
            apply_loss(&mut arr, eta, &mut rng).unwrap();
            arr.iter().map(|a| a.norm_sqr() - 0.5).sum::<f64>() / modes
        };
        // Loss scales detected photons by exactly η in the mean.
        let single = detected_mean(0.72, 0);
        assert!((single - 0.72 * photons).abs() < 4.0 * 1.2 / modes.sqrt(), "mean {single}");
        // Cascading η₁ then η₂ matches the single η₁η₂ loss statistically.
        let mut arr = Array3::from_elem((n, n, 1), Complex64::new(amp, 0.0));
        let mut rng = shot_rng(3, 1, 0, StreamRole::SignalLoss);
        apply_loss(&mut arr, 0.9, &mut rng).unwrap();
        apply_loss(&mut arr, 0.8, &mut rng).unwrap();
        let cascaded = arr.iter().map(|a| a.norm_sqr() - 0.5).sum::<f64>() / modes;
        assert!(
            (cascaded - single).abs() < 8.0 * 1.2 / modes.sqrt(),
            "cascaded {cascaded} vs single {single}"
        );
    }

    #[test]
    fn out_of_range_efficiency_is_rejected() {
        let mut arr = Array3::<Complex64>::zeros((4, 4, 1));
        let mut rng = shot_rng(4, 0, 0, StreamRole::SignalLoss);
        assert!(matches!(apply_loss(&mut arr, 1.2, &mut rng), Err(SimError::Config(_))));
    }

    #[test]
    fn vacuum_detects_to_zero_mean_pe() {
        let grid = Grid::new(128, 64, 1, 1.375e-5, 5.5e-5, 1e-13).unwrap();
        let mut rng = shot_rng(5, 0, 0, StreamRole::Vacuum);
        let state = init_vacuum(&grid, &mut rng);
        let far = bare_far_field(&grid, state.signal.clone());
        let det = DetectorModel {
            signal_region: PixelRegion { x0: 14, y0: 12, width: 100, height: 40 },
            idler_region: PixelRegion { x0: 14, y0: 12, width: 100, height: 40 },
            center: (63.5, 31.5),
            ..desk_detector()
        };
        let region = det.signal_region;
        let map = detect_pixels(&far, &det, &region, RegionId::Signal, 7).unwrap();
        assert_eq!(map.counts.dim(), (100, 40));
        assert_eq!(map.shot_id, 7);
        let pixels = 4000.0;
        let mean = map.counts.sum() / pixels;
        // Per-mode |α|² has std 1/2 in vacuum.
        assert!(mean.abs() < 4.0 * 0.5 / pixels.sqrt(), "mean {mean}");
    }

    #[test]
    fn uniform_intensity_detects_to_the_mode_count_formula() {
        let grid = Grid::new(16, 16, 2, 1e-5, 1e-5, 1e-13).unwrap();
        let amp = 1.7_f64;
        let field = Array3::from_elem((16, 16, 2), Complex64::new(amp, 0.0));
        let far = bare_far_field(&grid, field);
        let det = DetectorModel {
            oversample: 2,
            signal_region: PixelRegion { x0: 2, y0: 4, width: 8, height: 6 },
            idler_region: PixelRegion { x0: 2, y0: 4, width: 8, height: 6 },
            center: (6.0, 7.0),
            ..desk_detector()
        };
        let map = detect_pixels(&far, &det, &det.signal_region, RegionId::Signal, 0).unwrap();
        assert_eq!(map.counts.dim(), (4, 3));
        // Each pixel holds oversample²·nt = 8 modes of intensity amp².
        let expected = 8.0 * (amp * amp - 0.5);
        for &c in map.counts.iter() {
            assert_relative_eq!(c, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn out_of_grid_region_is_a_geometry_error() {
        let grid = Grid::new(32, 32, 1, 1e-5, 1e-5, 1e-13).unwrap();
        let far = bare_far_field(&grid, Array3::zeros((32, 32, 1)));
        let det = desk_detector();
        let region = PixelRegion { x0: 20, y0: 0, width: 16, height: 8 };
        assert!(matches!(
            detect_pixels(&far, &det, &region, RegionId::Signal, 0),
            Err(SimError::Geometry(_))
        ));
    }

    #[test]
    fn background_matches_its_declared_variance() {
        let dims = (128, 128);
        let mut map = PeMap {
            counts: Array2::zeros(dims),
            pixel_pitch: 2e-5,
            shot_id: 0,
            region_id: RegionId::Signal,
            bin: 1,
        };
        // σ_b = 0 must be bit-exact and draw-free.
        let mut rng = shot_rng(6, 0, 0, StreamRole::SignalBackground);
        let mut twin = rng.clone();
        add_background(&mut map, 0.0, &mut rng).unwrap();
        assert!(map.counts.iter().all(|&c| c == 0.0));
        assert_eq!(rng.next_u64(), twin.next_u64());

        let mut rng = shot_rng(6, 1, 0, StreamRole::SignalBackground);
        add_background(&mut map, 7.0, &mut rng).unwrap();
        let n = (dims.0 * dims.1) as f64;
        let mean = map.counts.sum() / n;
        let var = map.counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
        assert!((var - 49.0).abs() < 4.0 * 49.0 / n.sqrt(), "variance {var}");
    }

    #[test]
    fn binning_conserves_and_discards_trailing_pixels() {
        let ones = PeMap {
            counts: Array2::from_elem((4, 4), 1.0),
            pixel_pitch: 2e-5,
            shot_id: 0,
            region_id: RegionId::Signal,
            bin: 1,
        };
        let binned = bin_pixels(&ones, 2).unwrap();
        assert_eq!(binned.counts.dim(), (2, 2));
        assert!(binned.counts.iter().all(|&c| c == 4.0));
        assert_relative_eq!(binned.pixel_pitch, 4e-5);
        assert_eq!(binned.bin, 2);

        // 7×5 with N = 2 keeps the leading 6×4 block.
        let mut c = 0.0;
        let ragged = PeMap {
            counts: Array2::from_shape_fn((7, 5), |_| {
                c += 1.0;
                c
            }),
            ..ones.clone()
        };
        let binned = bin_pixels(&ragged, 2).unwrap();
        assert_eq!(binned.counts.dim(), (3, 2));
        let kept: f64 = (0..6).map(|i| (0..4).map(|j| ragged.counts[[i, j]]).sum::<f64>()).sum();
        assert_relative_eq!(binned.counts.sum(), kept, max_relative = 1e-12);

        // N = 1 is the identity.
        let same = bin_pixels(&ragged, 1).unwrap();
        assert_eq!(same.counts, ragged.counts);
        // Oversized N cannot produce an empty map.
        assert!(matches!(bin_pixels(&ones, 5), Err(SimError::Geometry(_))));
    }

    #[test]
    fn coherent_source_follows_poisson_moments() {
        let means = Array2::from_elem((64, 64), 100.0);
        let mut rng = shot_rng(7, 0, 0, StreamRole::CoherentSource);
        let (s, i) = coherent_source(&means, 2e-5, 3, &mut rng).unwrap();
        assert_eq!(s.region_id, RegionId::Signal);
        assert_eq!(i.region_id, RegionId::Idler);
        let n = 4096.0;
        for map in [&s, &i] {
            let mean = map.counts.sum() / n;
            assert!((mean - 100.0).abs() < 4.0 * 10.0 / n.sqrt(), "mean {mean}");
            let var =
                map.counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
            assert!((var - 100.0).abs() < 5.0 * 100.0 * (2.0_f64 / n).sqrt(), "var {var}");
        }

        // Zero means are exact zeros, not Poisson degenerate draws.
        let zeros = Array2::from_elem((8, 8), 0.0);
        let (s, _) = coherent_source(&zeros, 2e-5, 0, &mut rng).unwrap();
        assert!(s.counts.iter().all(|&c| c == 0.0));

        let bad = Array2::from_elem((2, 2), -1.0);
        assert!(matches!(coherent_source(&bad, 2e-5, 0, &mut rng), Err(SimError::Config(_))));
    }

    #[test]
    fn bandpass_selects_temporal_modes() {
        let nt = 8;
        let grid = Grid::new(8, 8, nt, 1e-5, 1e-5, 2e-14).unwrap();
        let mut engine = FftEngine::new();
        let carrier = 704e-9;
        let omega = grid.omega();

        // A pure temporal mode inside the band survives; outside it vanishes.
        for (mode, survives) in [(1usize, true), (4usize, false)] {
            let mut arr = Array3::from_shape_fn((8, 8, nt), |(_, _, k)| {
                Complex64::from_polar(
                    1.0,
                    2.0 * std::f64::consts::PI * (mode * k) as f64 / nt as f64,
                )
            });
            // Band edges chosen from the mode's own detuning.
            let lambda_of = |o: f64| {
                let wc = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / carrier;
                2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (wc + o)
            };
            let half_width = 1.5 * (lambda_of(omega[1]) - carrier).abs();
            let mask = SpectralMask { center_wavelength: carrier, bandwidth: 2.0 * half_width };
            apply_bandpass(&mut arr, &grid, &mask, carrier, &mut engine);
            let norm = FieldState::norm(&arr);
            if survives {
                assert_relative_eq!(norm, (8 * 8 * nt) as f64, max_relative = 1e-10);
            } else {
                assert!(norm < 1e-18, "mode {mode} should be blocked, norm {norm}");
            }
        }
    }

    #[test]
    fn full_band_mask_is_bit_exact_and_zero_band_blanks() {
        let grid = Grid::new(8, 8, 4, 1e-5, 1e-5, 2e-14).unwrap();
        let mut rng = shot_rng(8, 0, 0, StreamRole::Vacuum);
        let state = init_vacuum(&grid, &mut rng);
        let mut engine = FftEngine::new();

        let mut arr = state.signal.clone();
        let wide = SpectralMask { center_wavelength: 704e-9, bandwidth: 1.0 };
        apply_bandpass(&mut arr, &grid, &wide, 704e-9, &mut engine);
        assert_eq!(arr, state.signal);

        let mut arr = state.signal.clone();
        let empty = SpectralMask { center_wavelength: 704e-9, bandwidth: 0.0 };
        apply_bandpass(&mut arr, &grid, &empty, 704e-9, &mut engine);
        assert!(FieldState::norm(&arr) < 1e-18);

        // nt = 1 has no spectral axis: identity.
        let cw = Grid::new(8, 8, 1, 1e-5, 1e-5, 1e-13).unwrap();
        let state = init_vacuum(&cw, &mut shot_rng(8, 1, 0, StreamRole::Vacuum));
        let mut arr = state.signal.clone();
        apply_bandpass(&mut arr, &cw, &empty, 704e-9, &mut engine);
        assert_eq!(arr, state.signal);
    }

    #[test]
    fn half_band_mask_halves_vacuum_energy() {
        let nt = 16;
        let grid = Grid::new(16, 16, nt, 1e-5, 1e-5, 2e-14).unwrap();
        let mut rng = shot_rng(9, 0, 0, StreamRole::Vacuum);
        let state = init_vacuum(&grid, &mut rng);
        let mut engine = FftEngine::new();
        let mut arr = state.signal.clone();
        let carrier = 704e-9;
        // Keep only red-detuned modes (Ω < 0 → longer wavelengths): half of a
        // white spectrum. Center the band well below the carrier and make it
        // wide enough to catch every negative-frequency mode.
        let omega = grid.omega();
        let lambda_of = |o: f64| {
            let wc = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / carrier;
            2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / (wc + o)
        };
        let lambda_min_neg = lambda_of(*omega
            .iter()
            .filter(|o| **o < 0.0)
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .unwrap());
        let lo = lambda_of(omega[1]); // just above carrier detuning — excluded
        let center = (lambda_min_neg + carrier) / 2.0 + (lambda_min_neg - carrier) * 1e-6;
        let mask = SpectralMask {
            center_wavelength: center,
            bandwidth: 2.0 * (lambda_min_neg - center).abs() * 1.001,
        };
        let _ = lo;
        apply_bandpass(&mut arr, &grid, &mask, carrier, &mut engine);
        let kept: usize = omega.iter().filter(|&&o| mask.passes(o, carrier)).count();
        assert!(kept > 0 && kept < nt, "kept {kept} of {nt}");
        let before = FieldState::norm(&state.signal);
        let after = FieldState::norm(&arr);
        let expected = before * kept as f64 / nt as f64;
        // White vacuum: each temporal mode carries 1/nt of the energy on
        // average, with ~√2/√M relative fluctuation between halves.
        let modes = (16.0 * 16.0 * kept as f64).sqrt();
        assert!(
            (after - expected).abs() / expected < 6.0 / modes,
            "after {after} vs expected {expected}"
        );
    }

    #[test]
    fn integer_subpixel_shift_matches_a_roll() {
        let mut map = PeMap {
            counts: Array2::zeros((16, 12)),
            pixel_pitch: 2e-5,
            shot_id: 0,
            region_id: RegionId::Idler,
            bin: 1,
        };
        map.counts[[3, 4]] = 2.5;
        let mut engine = FftEngine::new();
        subpixel_shift(&mut map, 2.0, 1.0, &mut engine);
        assert_relative_eq!(map.counts[[5, 5]], 2.5, max_relative = 1e-9);
        let residue: f64 =
            map.counts.indexed_iter().filter(|((i, j), _)| (*i, *j) != (5, 5)).map(|(_, v)| v.abs()).sum();
        assert!(residue < 1e-9, "residue {residue}");
    }

    #[test]
    fn fractional_shift_preserves_the_total_and_zero_shift_is_identity() {
        let mut c = 0.0_f64;
        let base = Array2::from_shape_fn((10, 7), |_| {
            c += 0.37;
            (c * 1.7).sin() + 2.0
        });
        let mut map = PeMap {
            counts: base.clone(),
            pixel_pitch: 2e-5,
            shot_id: 0,
            region_id: RegionId::Idler,
            bin: 1,
        };
        let mut engine = FftEngine::new();
        subpixel_shift(&mut map, 0.0, 0.0, &mut engine);
        assert_eq!(map.counts, base);
        subpixel_shift(&mut map, 0.5, -0.25, &mut engine);
        assert_relative_eq!(map.counts.sum(), base.sum(), max_relative = 1e-12);
        assert!((map.counts[[0, 0]] - base[[0, 0]]).abs() > 1e-6, "shift must move content");
    }
}
