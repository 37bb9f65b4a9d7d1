//! Shot-noise calibration: sample the coherent reference source at a series
//! of mean photoelectron levels and tabulate the measured difference
//! statistics. For an ideal Poissonian source split onto the two analysis
//! boxes, the normalized variance Var(n_s − n_i)/⟨n_s + n_i⟩ equals 1 at
//! every level — this table is the instrument's ruler for the shot-noise
//! limit.

use std::path::Path;

use anyhow::{bail, Context};
use ndarray::Array2;

use twinbeam_core::detection::coherent_source;
use twinbeam_core::rng::{shot_rng, StreamRole};
use twinbeam_core::stats::PairEnsemble;

/// One calibration level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationRow {
    /// Requested mean photoelectrons per pixel.
    pub mean_pe: f64,
    /// Measured ⟨n_s + n_i⟩ per pixel pair.
    pub mean_sum: f64,
    /// Measured Var(n_s − n_i).
    pub difference_variance: f64,
    /// Var(n_s − n_i)/⟨n_s + n_i⟩; NaN when the level is degenerate.
    pub normalized_variance: f64,
    /// Set when the normalized variance is undefined (zero mean level).
    pub degenerate: bool,
}

/// Sample every requested level on a `width`×`height` pixel map. Level k
/// draws from its own seeded stream, so adding levels never perturbs the
/// earlier rows.
pub fn calibrate(
    seed: u64,
    means: &[f64],
    width: usize,
    height: usize,
) -> anyhow::Result<Vec<CalibrationRow>> {
    if means.is_empty() {
        bail!("at least one mean photoelectron level is required");
    }
    if width * height < 2 {
        bail!("the calibration map needs at least 2 pixels, got {width}×{height}");
    }
    means
        .iter()
        .enumerate()
        .map(|(k, &mean_pe)| {
            let mut rng = shot_rng(seed, k as u64, 0, StreamRole::CoherentSource);
            let map = Array2::from_elem((width, height), mean_pe);
            let (signal, idler) = coherent_source(&map, 1.0, k as u64, &mut rng)
                .with_context(|| format!("calibration level {k} ({mean_pe} pe)"))?;
            let ensemble = PairEnsemble::from_maps(&signal, &idler)
                .with_context(|| format!("pairing calibration level {k}"))?;
            let mean_sum = ensemble.mean_sum();
            let difference_variance = ensemble.difference_variance();
            let (normalized_variance, degenerate) = match ensemble.normalized_variance() {
                Ok(v) => (v, false),
                Err(_) => (f64::NAN, true),
            };
            Ok(CalibrationRow {
                mean_pe,
                mean_sum,
                difference_variance,
                normalized_variance,
                degenerate,
            })
        })
        .collect()
}

/// Write the calibration table as CSV.
pub fn write_calibration_csv(path: &Path, rows: &[CalibrationRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "mean_pe",
        "mean_sum",
        "diff_variance",
        "normalized_variance",
        "degenerate_flag",
    ])?;
    for r in rows {
        w.write_record([
            format!("{}", r.mean_pe),
            format!("{}", r.mean_sum),
            format!("{}", r.difference_variance),
            format!("{}", r.normalized_variance),
            (r.degenerate as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibration_sits_on_the_shot_noise_limit() {
        let rows = calibrate(42, &[10.0, 100.0, 1000.0], 64, 64).unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert!(!row.degenerate);
            // Poisson pairs: V = 1 with sampling error √((2 + 1/μ̄)/K)-ish;
            // 4096 pairs keep it within a few percent.
            assert!(
                (row.normalized_variance - 1.0).abs() < 0.1,
                "level {} pe: V = {}",
                row.mean_pe,
                row.normalized_variance
            );
            assert!(
                (row.mean_sum - 2.0 * row.mean_pe).abs() < 8.0 * (2.0 * row.mean_pe / 4096.0).sqrt().max(0.05),
                "level {} pe: mean_sum = {}",
                row.mean_pe,
                row.mean_sum
            );
        }
    }

    #[test]
    fn zero_level_is_degenerate_not_fatal() {
        let rows = calibrate(1, &[0.0, 50.0], 16, 16).unwrap();
        assert!(rows[0].degenerate);
        assert!(rows[0].normalized_variance.is_nan());
        assert_eq!(rows[0].mean_sum, 0.0);
        assert!(!rows[1].degenerate);
    }

    #[test]
    fn identical_seeds_reproduce_identical_tables() {
        let a = calibrate(7, &[25.0], 32, 32).unwrap();
        let b = calibrate(7, &[25.0], 32, 32).unwrap();
        assert_eq!(a[0].mean_sum, b[0].mean_sum);
        assert_eq!(a[0].difference_variance, b[0].difference_variance);
        let c = calibrate(8, &[25.0], 32, 32).unwrap();
        assert_ne!(a[0].difference_variance, c[0].difference_variance);
    }

    #[test]
    fn empty_or_tiny_requests_are_rejected() {
        assert!(calibrate(1, &[], 8, 8).is_err());
        assert!(calibrate(1, &[10.0], 1, 1).is_err());
    }
}
