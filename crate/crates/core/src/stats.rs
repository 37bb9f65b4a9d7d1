//! Twin-pixel correlation statistics: pairing by point symmetry, difference
//! variance against the shot-noise reference, background correction,
//! symmetry-center search, binning sweeps, and per-amplitude scatter tables.
//!
//! The central quantity is the normalized variance
//! V = Var(n_s − n_i) / ⟨n_s + n_i⟩, which equals 1 for shot-noise-limited
//! (coherent) illumination, drops below 1 for twin beams, and grows above 1
//! once excess noise dominates. Pixels are paired by point reflection: the
//! twin of signal-map cell (i, j) in a W×H box is idler-map cell
//! (W−1−i, H−1−j), because signal and idler regions are mirror images of one
//! another through the far-field symmetry center.

use std::collections::BTreeMap;

use ndarray::{s, Array2};

use crate::detection::{PeMap, RegionId};
use crate::error::{Result, SimError};

/// Paired photoelectron samples (n_s, n_i), one entry per twin-pixel pair.
#[derive(Debug, Clone)]
pub struct PairEnsemble {
    signal: Vec<f64>,
    idler: Vec<f64>,
}

fn check_pair(signal: &PeMap, idler: &PeMap) -> Result<()> {
    if signal.region_id != RegionId::Signal || idler.region_id != RegionId::Idler {
        return Err(SimError::Config(format!(
            "pairing expects a signal map and an idler map, got {:?} and {:?}",
            signal.region_id, idler.region_id
        )));
    }
    if signal.counts.dim() != idler.counts.dim() {
        return Err(SimError::Geometry(format!(
            "paired maps have different dimensions: {:?} vs {:?}",
            signal.counts.dim(),
            idler.counts.dim()
        )));
    }
    if signal.bin != idler.bin {
        return Err(SimError::Geometry(format!(
            "paired maps have different binning: {} vs {}",
            signal.bin, idler.bin
        )));
    }
    Ok(())
}

impl PairEnsemble {
    /// Pair twin pixels assuming a perfectly registered symmetry center.
    pub fn from_maps(signal: &PeMap, idler: &PeMap) -> Result<Self> {
        Self::from_maps_shifted(signal, idler, 0, 0)
    }

    /// Pair twin pixels with the idler content displaced by (dx, dy) pixels:
    /// the twin of signal cell (i, j) is looked up at idler cell
    /// (W−1−i+dx, H−1−j+dy). Pairs whose idler index falls outside the map
    /// are dropped; at least two pairs must survive.
    pub fn from_maps_shifted(signal: &PeMap, idler: &PeMap, dx: i64, dy: i64) -> Result<Self> {
        check_pair(signal, idler)?;
        let (w, h) = signal.counts.dim();
        let mut out = PairEnsemble {
            signal: Vec::with_capacity(w * h),
            idler: Vec::with_capacity(w * h),
        };
        for i in 0..w {
            let ii = (w as i64 - 1 - i as i64) + dx;
            if ii < 0 || ii >= w as i64 {
                continue;
            }
            for j in 0..h {
                let jj = (h as i64 - 1 - j as i64) + dy;
                if jj < 0 || jj >= h as i64 {
                    continue;
                }
                out.signal.push(signal.counts[[i, j]]);
                out.idler.push(idler.counts[[ii as usize, jj as usize]]);
            }
        }
        if out.len() < 2 {
            return Err(SimError::Statistics(format!(
                "pixel pairing at shift ({dx}, {dy}) leaves {} pair(s); \
                 at least 2 are required",
                out.len()
            )));
        }
        Ok(out)
    }

    /// Build an ensemble from already-paired samples, e.g. when pooling
    /// superpixel pairs across repeated shots. Index k of both vectors must
    /// refer to the same twin pair.
    pub fn from_pairs(signal: Vec<f64>, idler: Vec<f64>) -> Result<Self> {
        if signal.len() != idler.len() {
            return Err(SimError::Geometry(format!(
                "paired sample lists have different lengths: {} vs {}",
                signal.len(),
                idler.len()
            )));
        }
        if signal.len() < 2 {
            return Err(SimError::Statistics(
                "at least 2 pixel pairs are required for a variance".into(),
            ));
        }
        Ok(PairEnsemble { signal, idler })
    }

    /// Pair two equally shaped count arrays cell by cell (no mirror flip);
    /// used after the idler map has already been reflected.
    pub fn from_aligned(signal: &Array2<f64>, idler: &Array2<f64>) -> Result<Self> {
        if signal.dim() != idler.dim() {
            return Err(SimError::Geometry(format!(
                "aligned maps have different dimensions: {:?} vs {:?}",
                signal.dim(),
                idler.dim()
            )));
        }
        if signal.len() < 2 {
            return Err(SimError::Statistics(
                "at least 2 pixel pairs are required for a variance".into(),
            ));
        }
        Ok(PairEnsemble {
            signal: signal.iter().copied().collect(),
            idler: idler.iter().copied().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.signal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signal.is_empty()
    }

    /// ⟨n_s + n_i⟩ over pairs — the shot-noise reference level.
    pub fn mean_sum(&self) -> f64 {
        let total: f64 = self
            .signal
            .iter()
            .zip(&self.idler)
            .map(|(s, i)| s + i)
            .sum();
        total / self.len() as f64
    }

    /// Population variance of n_s − n_i over pairs.
    pub fn difference_variance(&self) -> f64 {
        let n = self.len() as f64;
        let diffs: Vec<f64> = self
            .signal
            .iter()
            .zip(&self.idler)
            .map(|(s, i)| s - i)
            .collect();
        let mean = diffs.iter().sum::<f64>() / n;
        diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n
    }

    /// Var(n_s − n_i) / ⟨n_s + n_i⟩ without background correction. The
    /// shot-noise reference must be positive.
    pub fn normalized_variance(&self) -> Result<f64> {
        let reference = self.mean_sum();
        if reference <= 0.0 {
            return Err(SimError::Statistics(format!(
                "shot-noise reference ⟨n_s + n_i⟩ = {reference} is not positive; \
                 the normalized variance is undefined"
            )));
        }
        Ok(self.difference_variance() / reference)
    }

    /// Pearson correlation between the paired signal and idler samples.
    /// Both marginals must have nonzero variance.
    pub fn correlation(&self) -> Result<f64> {
        let n = self.len() as f64;
        let ms = self.signal.iter().sum::<f64>() / n;
        let mi = self.idler.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut vs = 0.0;
        let mut vi = 0.0;
        for (s0, i0) in self.signal.iter().zip(&self.idler) {
            let ds = s0 - ms;
            let di = i0 - mi;
            cov += ds * di;
            vs += ds * ds;
            vi += di * di;
        }
        if vs <= 0.0 || vi <= 0.0 {
            return Err(SimError::Statistics(
                "cross-correlation is undefined for a constant map".into(),
            ));
        }
        Ok(cov / (vs * vi).sqrt())
    }
}

/// Cross-correlation degree γ between twin pixels with the idler content
/// displaced by `shift` pixels (see [`PairEnsemble::from_maps_shifted`]).
pub fn cross_correlation_degree(
    signal: &PeMap,
    idler: &PeMap,
    shift: (i64, i64),
) -> Result<f64> {
    PairEnsemble::from_maps_shifted(signal, idler, shift.0, shift.1)?.correlation()
}

/// γ evaluated on every displacement in a (2r+1)×(2r+1) window; cell
/// (a, b) holds the shift (a − r, b − r). Displacements where γ is undefined
/// (too few surviving pairs, or a constant marginal) hold NaN.
pub fn correlation_map(signal: &PeMap, idler: &PeMap, max_shift: usize) -> Result<Array2<f64>> {
    check_pair(signal, idler)?;
    let r = max_shift as i64;
    let side = 2 * max_shift + 1;
    let mut map = Array2::from_elem((side, side), f64::NAN);
    for a in 0..side {
        for b in 0..side {
            let dx = a as i64 - r;
            let dy = b as i64 - r;
            if let Ok(g) = cross_correlation_degree(signal, idler, (dx, dy)) {
                map[[a, b]] = g;
            }
        }
    }
    Ok(map)
}

/// Result of the symmetry-center search: the displacement that maximizes γ
/// and the peak value itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterFit {
    pub dx: i64,
    pub dy: i64,
    pub gamma: f64,
}

/// Locate the twin-correlation peak within ±`search_radius` pixels. Ties are
/// broken toward the smallest displacement magnitude, then lexicographically
/// by (dx, dy). Errors if γ is undefined at every candidate displacement.
pub fn find_symmetry_center(
    signal: &PeMap,
    idler: &PeMap,
    search_radius: usize,
) -> Result<CenterFit> {
    check_pair(signal, idler)?;
    let r = search_radius as i64;
    let mut best: Option<CenterFit> = None;
    for dx in -r..=r {
        for dy in -r..=r {
            let gamma = match cross_correlation_degree(signal, idler, (dx, dy)) {
                Ok(g) if g.is_finite() => g,
                _ => continue,
            };
            let candidate = CenterFit { dx, dy, gamma };
            let replace = match &best {
                None => true,
                Some(b) => {
                    gamma > b.gamma
                        || (gamma == b.gamma
                            && (dx * dx + dy * dy < b.dx * b.dx + b.dy * b.dy
                                || (dx * dx + dy * dy == b.dx * b.dx + b.dy * b.dy
                                    && (dx, dy) < (b.dx, b.dy))))
                }
            };
            if replace {
                best = Some(candidate);
            }
        }
    }
    best.ok_or_else(|| {
        SimError::Statistics(format!(
            "cross-correlation undefined at every displacement within ±{search_radius} px"
        ))
    })
}

/// Subtract the additive-background contribution from a raw difference
/// variance: two pixels each carrying (bin·σ_b)² of independent electronics
/// variance contribute 2·(bin·σ_b)² to Var(n_s − n_i). Returns the corrected
/// value and a flag set when the correction overshoots below zero (the value
/// is kept, not clipped).
pub fn background_correct(raw_variance: f64, background_sigma: f64, bin: usize) -> (f64, bool) {
    let correction = 2.0 * (bin as f64 * background_sigma).powi(2);
    let corrected = raw_variance - correction;
    (corrected, corrected < 0.0)
}

/// Per-shot correlation summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotStatistics {
    /// ⟨n_s + n_i⟩ per twin-pixel pair at the fitted center.
    pub mean_sum: f64,
    /// Raw Var(n_s − n_i), background included.
    pub difference_variance: f64,
    /// Background-corrected Var(n_s − n_i) / ⟨n_s + n_i⟩.
    pub normalized_variance: f64,
    /// Peak twin correlation γ at the fitted center.
    pub gamma_peak: f64,
    /// Fitted center displacement, pixels.
    pub center_dx: i64,
    pub center_dy: i64,
    /// True when the background correction drove the variance negative.
    pub flagged: bool,
}

/// Full per-shot analysis: fit the symmetry center within ±`max_center_shift`
/// pixels, pair twins at that center, and form the background-corrected
/// normalized variance.
pub fn analyze_shot(
    signal: &PeMap,
    idler: &PeMap,
    background_sigma: f64,
    max_center_shift: usize,
) -> Result<ShotStatistics> {
    let fit = find_symmetry_center(signal, idler, max_center_shift)?;
    let ensemble = PairEnsemble::from_maps_shifted(signal, idler, fit.dx, fit.dy)?;
    let mean_sum = ensemble.mean_sum();
    if mean_sum <= 0.0 {
        return Err(SimError::Statistics(format!(
            "shot-noise reference ⟨n_s + n_i⟩ = {mean_sum} is not positive; \
             the normalized variance is undefined"
        )));
    }
    let raw = ensemble.difference_variance();
    let (corrected, flagged) = background_correct(raw, background_sigma, signal.bin);
    Ok(ShotStatistics {
        mean_sum,
        difference_variance: raw,
        normalized_variance: corrected / mean_sum,
        gamma_peak: fit.gamma,
        center_dx: fit.dx,
        center_dy: fit.dy,
        flagged,
    })
}

/// One row of the shot table: per-shot statistics tagged with identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub shot_id: u64,
    pub amp_index: usize,
    pub amplitude: f64,
    pub stats: ShotStatistics,
}

/// Per-amplitude aggregation of the shot table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterGroup {
    pub amp_index: usize,
    pub amplitude: f64,
    pub shots: usize,
    /// Mean over shots of the per-shot ⟨n_s + n_i⟩.
    pub mean_sum: f64,
    pub mean_normalized_variance: f64,
    /// Sample standard deviation across shots (0 for a single shot).
    pub std_normalized_variance: f64,
}

/// Shot records grouped by pump amplitude, ordered by amplitude index.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterTable {
    pub groups: Vec<ScatterGroup>,
}

/// Group shot records by amplitude index and aggregate the normalized
/// variance into mean ± sample standard deviation per group.
pub fn shot_scatter(records: &[ShotRecord]) -> ScatterTable {
    let mut grouped: BTreeMap<usize, Vec<&ShotRecord>> = BTreeMap::new();
    for record in records {
        grouped.entry(record.amp_index).or_default().push(record);
    }
    let groups = grouped
        .into_iter()
        .map(|(amp_index, rows)| {
            let n = rows.len() as f64;
            let mean_sum = rows.iter().map(|r| r.stats.mean_sum).sum::<f64>() / n;
            let mean_v =
                rows.iter().map(|r| r.stats.normalized_variance).sum::<f64>() / n;
            let std_v = if rows.len() < 2 {
                0.0
            } else {
                let ss = rows
                    .iter()
                    .map(|r| (r.stats.normalized_variance - mean_v).powi(2))
                    .sum::<f64>();
                (ss / (n - 1.0)).sqrt()
            };
            ScatterGroup {
                amp_index,
                amplitude: rows[0].amplitude,
                shots: rows.len(),
                mean_sum,
                mean_normalized_variance: mean_v,
                std_normalized_variance: std_v,
            }
        })
        .collect();
    ScatterTable { groups }
}

/// One point of a binning sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinnedPoint {
    /// Super-pixel side length in native pixels.
    pub factor: usize,
    /// Twin super-pixel pairs entering the statistics.
    pub pairs: usize,
    /// ⟨n_s + n_i⟩ per super-pixel pair.
    pub mean_sum: f64,
    /// Raw Var(n_s − n_i) at this binning.
    pub difference_variance: f64,
    /// Background-corrected normalized variance.
    pub normalized_variance: f64,
    /// True when the background correction overshot below zero.
    pub flagged: bool,
}

fn block_sum(counts: &Array2<f64>, n: usize) -> Array2<f64> {
    let (w, h) = counts.dim();
    let mut out = Array2::<f64>::zeros((w / n, h / n));
    for i in 0..(w / n) * n {
        for j in 0..(h / n) * n {
            out[[i / n, j / n]] += counts[[i, j]];
        }
    }
    out
}

/// Normalized variance as a function of super-pixel size. The idler map is
/// point-reflected once so that N×N blocks of the two maps cover twin pixel
/// sets exactly; both maps are then binned with trailing-pixel discard and
/// paired cell by cell. The background correction grows as (bin·N·σ_b)².
pub fn binning_sweep(
    signal: &PeMap,
    idler: &PeMap,
    factors: &[usize],
    background_sigma: f64,
) -> Result<Vec<BinnedPoint>> {
    check_pair(signal, idler)?;
    let flipped = idler.counts.slice(s![..;-1, ..;-1]).to_owned();
    let (w, h) = signal.counts.dim();
    let mut points = Vec::with_capacity(factors.len());
    for &factor in factors {
        if factor == 0 {
            return Err(SimError::Config("binning factor must be at least 1".into()));
        }
        if w / factor == 0 || h / factor == 0 {
            return Err(SimError::Geometry(format!(
                "binning factor {factor} exceeds the {w}×{h} analysis region"
            )));
        }
        let s_binned = block_sum(&signal.counts, factor);
        let i_binned = block_sum(&flipped, factor);
        let ensemble = PairEnsemble::from_aligned(&s_binned, &i_binned)?;
        let mean_sum = ensemble.mean_sum();
        if mean_sum <= 0.0 {
            return Err(SimError::Statistics(format!(
                "shot-noise reference {mean_sum} at binning factor {factor} is not positive"
            )));
        }
        let raw = ensemble.difference_variance();
        let (corrected, flagged) =
            background_correct(raw, background_sigma, signal.bin * factor);
        points.push(BinnedPoint {
            factor,
            pairs: ensemble.len(),
            mean_sum,
            difference_variance: raw,
            normalized_variance: corrected / mean_sum,
            flagged,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map(counts: Array2<f64>, region_id: RegionId) -> PeMap {
        PeMap { counts, pixel_pitch: 2e-5, shot_id: 0, region_id, bin: 1 }
    }

    fn flipped(counts: &Array2<f64>) -> Array2<f64> {
        counts.slice(s![..;-1, ..;-1]).to_owned()
    }

    fn random_map(seed: u64, dims: (usize, usize)) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn(dims, |_| rng.random::<f64>() * 10.0)
    }

    #[test]
    fn hand_computed_variance_and_mean() {
        // Pairs (2,0) and (0,2): differences ±2, population variance 4.
        let signal = Array2::from_shape_vec((2, 1), vec![2.0, 0.0]).unwrap();
        let idler = Array2::from_shape_vec((2, 1), vec![0.0, 2.0]).unwrap();
        let ens = PairEnsemble::from_aligned(&signal, &idler).unwrap();
        assert_relative_eq!(ens.mean_sum(), 2.0);
        assert_relative_eq!(ens.difference_variance(), 4.0);
        assert_relative_eq!(ens.normalized_variance().unwrap(), 2.0);

        // Identical constant pairs: zero variance, mean sum 8.
        let constant = Array2::from_elem((3, 3), 3.0);
        let partner = Array2::from_elem((3, 3), 5.0);
        let ens = PairEnsemble::from_aligned(&constant, &partner).unwrap();
        assert_relative_eq!(ens.mean_sum(), 8.0);
        assert_relative_eq!(ens.difference_variance(), 0.0);
    }

    #[test]
    fn pooled_pairs_match_the_aligned_constructor() {
        let signal = Array2::from_shape_vec((2, 2), vec![2.0, 1.0, 0.5, 3.0]).unwrap();
        let idler = Array2::from_shape_vec((2, 2), vec![1.5, 1.0, 1.0, 2.5]).unwrap();
        let aligned = PairEnsemble::from_aligned(&signal, &idler).unwrap();
        let pooled = PairEnsemble::from_pairs(
            signal.iter().copied().collect(),
            idler.iter().copied().collect(),
        )
        .unwrap();
        assert_eq!(pooled.len(), aligned.len());
        assert_relative_eq!(pooled.mean_sum(), aligned.mean_sum());
        assert_relative_eq!(pooled.difference_variance(), aligned.difference_variance());

        assert!(matches!(
            PairEnsemble::from_pairs(vec![1.0, 2.0], vec![1.0]),
            Err(SimError::Geometry(_))
        ));
        assert!(matches!(
            PairEnsemble::from_pairs(vec![1.0], vec![1.0]),
            Err(SimError::Statistics(_))
        ));
    }

    #[test]
    fn zero_mean_sum_has_no_shot_noise_reference() {
        let signal = Array2::from_shape_vec((2, 1), vec![1.0, -1.0]).unwrap();
        let idler = Array2::from_shape_vec((2, 1), vec![-1.0, 1.0]).unwrap();
        let ens = PairEnsemble::from_aligned(&signal, &idler).unwrap();
        assert!(matches!(ens.normalized_variance(), Err(SimError::Statistics(_))));
    }

    #[test]
    fn perfect_twins_have_zero_variance_and_unit_gamma() {
        let m = random_map(11, (12, 9));
        let signal = map(m.clone(), RegionId::Signal);
        let idler = map(flipped(&m), RegionId::Idler);
        let ens = PairEnsemble::from_maps(&signal, &idler).unwrap();
        assert_eq!(ens.len(), 12 * 9);
        assert!(ens.difference_variance() < 1e-20);
        let gamma = cross_correlation_degree(&signal, &idler, (0, 0)).unwrap();
        assert_relative_eq!(gamma, 1.0, max_relative = 1e-12);

        // Anticorrelated twins: γ = −1.
        let anti = map(flipped(&m).mapv(|v| -v), RegionId::Idler);
        let gamma = cross_correlation_degree(&signal, &anti, (0, 0)).unwrap();
        assert_relative_eq!(gamma, -1.0, max_relative = 1e-12);
    }

    #[test]
    fn gamma_is_invariant_under_positive_affine_maps() {
        let m = random_map(12, (10, 10));
        let other = random_map(13, (10, 10));
        let signal = map(m, RegionId::Signal);
        let idler = map(other.clone(), RegionId::Idler);
        let gamma = cross_correlation_degree(&signal, &idler, (0, 0)).unwrap();
        let scaled = map(other.mapv(|v| 2.5 * v + 7.0), RegionId::Idler);
        let gamma2 = cross_correlation_degree(&signal, &scaled, (0, 0)).unwrap();
        assert_relative_eq!(gamma, gamma2, max_relative = 1e-12);
    }

    #[test]
    fn variance_is_invariant_under_common_offsets() {
        let m = random_map(14, (8, 8));
        let n = random_map(15, (8, 8));
        let signal = map(m, RegionId::Signal);
        let idler = map(n.clone(), RegionId::Idler);
        let base = PairEnsemble::from_maps(&signal, &idler).unwrap();
        let shifted = map(n.mapv(|v| v + 11.0), RegionId::Idler);
        let moved = PairEnsemble::from_maps(&signal, &shifted).unwrap();
        assert_relative_eq!(
            base.difference_variance(),
            moved.difference_variance(),
            max_relative = 1e-12
        );
        assert_relative_eq!(moved.mean_sum(), base.mean_sum() + 11.0, max_relative = 1e-12);
    }

    #[test]
    fn brute_force_pairing_equivalence_on_a_small_map() {
        let sm = random_map(16, (4, 4));
        let im = random_map(17, (4, 4));
        let signal = map(sm.clone(), RegionId::Signal);
        let idler = map(im.clone(), RegionId::Idler);
        let ens = PairEnsemble::from_maps(&signal, &idler).unwrap();

        let mut diffs = Vec::new();
        let mut sums = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                let twin = im[[3 - i, 3 - j]];
                diffs.push(sm[[i, j]] - twin);
                sums.push(sm[[i, j]] + twin);
            }
        }
        let mean_sum = sums.iter().sum::<f64>() / 16.0;
        let mean_diff = diffs.iter().sum::<f64>() / 16.0;
        let var =
            diffs.iter().map(|d| (d - mean_diff) * (d - mean_diff)).sum::<f64>() / 16.0;
        assert_relative_eq!(ens.mean_sum(), mean_sum, max_relative = 1e-14);
        assert_relative_eq!(ens.difference_variance(), var, max_relative = 1e-14);
    }

    #[test]
    fn translated_twin_content_is_recovered_by_the_center_search() {
        let m = random_map(18, (20, 16));
        let signal = map(m.clone(), RegionId::Signal);
        // Displace the reflected content by (3, −2) with cyclic wrap; the
        // wrapped cells fall outside the shifted pairing window and drop out.
        let base = flipped(&m);
        let (w, h) = base.dim();
        let mut rolled = Array2::zeros((w, h));
        for i in 0..w {
            for j in 0..h {
                rolled[[(i + 3) % w, (j + h - 2) % h]] = base[[i, j]];
            }
        }
        let idler = map(rolled, RegionId::Idler);
        let fit = find_symmetry_center(&signal, &idler, 4).unwrap();
        assert_eq!((fit.dx, fit.dy), (3, -2));
        assert_relative_eq!(fit.gamma, 1.0, max_relative = 1e-10);
        // At the recovered displacement the difference variance vanishes.
        let ens = PairEnsemble::from_maps_shifted(&signal, &idler, 3, -2).unwrap();
        assert!(ens.difference_variance() < 1e-20);
        // The correlation map carries the same peak at cell (r+3, r−2).
        let cmap = correlation_map(&signal, &idler, 4).unwrap();
        assert_relative_eq!(cmap[[7, 2]], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn aligned_twins_win_the_center_search_at_zero() {
        let m = random_map(19, (16, 16));
        let signal = map(m.clone(), RegionId::Signal);
        let idler = map(flipped(&m), RegionId::Idler);
        let fit = find_symmetry_center(&signal, &idler, 3).unwrap();
        assert_eq!((fit.dx, fit.dy), (0, 0));
        let stats = analyze_shot(&signal, &idler, 0.0, 3).unwrap();
        assert_relative_eq!(stats.gamma_peak, 1.0, max_relative = 1e-12);
        assert!(stats.normalized_variance < 1e-15);
        assert!(!stats.flagged);
    }

    #[test]
    fn constant_maps_have_no_defined_center() {
        let signal = map(Array2::from_elem((6, 6), 2.0), RegionId::Signal);
        let idler = map(Array2::from_elem((6, 6), 2.0), RegionId::Idler);
        assert!(matches!(
            find_symmetry_center(&signal, &idler, 2),
            Err(SimError::Statistics(_))
        ));
        // The correlation map is all-NaN rather than an error.
        let cmap = correlation_map(&signal, &idler, 1).unwrap();
        assert!(cmap.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn pairing_rejects_mismatched_maps() {
        let a = map(Array2::zeros((4, 4)), RegionId::Signal);
        let b = map(Array2::zeros((4, 5)), RegionId::Idler);
        assert!(matches!(PairEnsemble::from_maps(&a, &b), Err(SimError::Geometry(_))));
        let c = map(Array2::zeros((4, 4)), RegionId::Signal);
        assert!(matches!(PairEnsemble::from_maps(&a, &c), Err(SimError::Config(_))));
        let mut d = map(Array2::zeros((4, 4)), RegionId::Idler);
        d.bin = 2;
        assert!(matches!(PairEnsemble::from_maps(&a, &d), Err(SimError::Geometry(_))));
    }

    #[test]
    fn background_correction_arithmetic() {
        let (corrected, flagged) = background_correct(100.0, 7.0, 1);
        assert_relative_eq!(corrected, 2.0);
        assert!(!flagged);
        let (corrected, flagged) = background_correct(90.0, 7.0, 1);
        assert_relative_eq!(corrected, -8.0);
        assert!(flagged);
        // Binned super-pixels aggregate bin² native backgrounds.
        let (corrected, _) = background_correct(500.0, 7.0, 2);
        assert_relative_eq!(corrected, 500.0 - 2.0 * (2.0 * 7.0) * (2.0 * 7.0));
    }

    #[test]
    fn binning_identity_row_matches_the_full_analysis() {
        let m = random_map(20, (12, 8));
        let n = random_map(21, (12, 8));
        let signal = map(m, RegionId::Signal);
        let idler = map(n, RegionId::Idler);
        let sweep = binning_sweep(&signal, &idler, &[1, 2], 0.0).unwrap();
        let direct = analyze_shot(&signal, &idler, 0.0, 0).unwrap();
        assert_eq!(sweep[0].factor, 1);
        assert_eq!(sweep[0].pairs, 96);
        assert_relative_eq!(sweep[0].mean_sum, direct.mean_sum, max_relative = 1e-12);
        assert_relative_eq!(
            sweep[0].normalized_variance,
            direct.normalized_variance,
            max_relative = 1e-12
        );
        // Summation conserves total pe: mean per pair scales as factor².
        assert_eq!(sweep[1].pairs, 24);
        assert_relative_eq!(sweep[1].mean_sum, 4.0 * sweep[0].mean_sum, max_relative = 1e-12);
    }

    #[test]
    fn binning_keeps_perfect_twins_perfect() {
        // Twin-aligned binning must not mix non-twin content: a perfectly
        // correlated pair stays at zero difference variance for every factor.
        let m = random_map(22, (12, 9));
        let signal = map(m.clone(), RegionId::Signal);
        let idler = map(flipped(&m), RegionId::Idler);
        let sweep = binning_sweep(&signal, &idler, &[1, 2, 3], 0.0).unwrap();
        for point in &sweep {
            assert!(
                point.difference_variance < 1e-18,
                "factor {} variance {}",
                point.factor,
                point.difference_variance
            );
        }
        // Trailing discard: 12×9 at factor 2 keeps 6×4 super-pixels.
        assert_eq!(sweep[1].pairs, 24);
        assert!(matches!(
            binning_sweep(&signal, &idler, &[0], 0.0),
            Err(SimError::Config(_))
        ));
        assert!(matches!(
            binning_sweep(&signal, &idler, &[13], 0.0),
            Err(SimError::Geometry(_))
        ));
    }

    #[test]
    fn scatter_table_groups_by_amplitude() {
        let stats = |v: f64| ShotStatistics {
            mean_sum: 10.0,
            difference_variance: v * 10.0,
            normalized_variance: v,
            gamma_peak: 0.9,
            center_dx: 0,
            center_dy: 0,
            flagged: false,
        };
        let records = vec![
            ShotRecord { shot_id: 0, amp_index: 0, amplitude: 1.5, stats: stats(0.30) },
            ShotRecord { shot_id: 1, amp_index: 0, amplitude: 1.5, stats: stats(0.34) },
            ShotRecord { shot_id: 2, amp_index: 0, amplitude: 1.5, stats: stats(0.32) },
            ShotRecord { shot_id: 3, amp_index: 1, amplitude: 2.1, stats: stats(0.50) },
        ];
        let table = shot_scatter(&records);
        assert_eq!(table.groups.len(), 2);
        let g0 = &table.groups[0];
        assert_eq!((g0.amp_index, g0.shots), (0, 3));
        assert_relative_eq!(g0.amplitude, 1.5);
        assert_relative_eq!(g0.mean_normalized_variance, 0.32, max_relative = 1e-12);
        assert_relative_eq!(g0.std_normalized_variance, 0.02, max_relative = 1e-9);
        let g1 = &table.groups[1];
        assert_eq!(g1.shots, 1);
        assert_relative_eq!(g1.std_normalized_variance, 0.0);
    }
}
