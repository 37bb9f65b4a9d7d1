//! End-to-end execution of a measurement plan: one shot per (amplitude,
//! repetition) pair, each running vacuum seeding → crystal propagation →
//! far-field imaging → losses → pixel detection → background → statistics,
//! followed by the artifact set (CSV tables, optional map files, and a
//! manifest written last so its presence marks a complete run).
//!
//! Every shot derives all of its random streams from the plan's master seed
//! and its own (amplitude index, shot index) coordinates, so results are
//! independent of thread count and schedule; shots may run in any order on
//! any number of workers.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use twinbeam_core::config::{ExperimentConfig, SaveMaps};
use twinbeam_core::detection::{
    add_background, apply_loss, detect_pixels, spectral_mask, subpixel_shift, to_far_field, PeMap,
    RegionId,
};
use twinbeam_core::fft::FftEngine;
use twinbeam_core::field::{init_vacuum, make_pump, PumpParams};
use twinbeam_core::io::{write_matrix_text, write_pgm16};
use twinbeam_core::propagation::propagate;
use twinbeam_core::rng::{shot_rng, shot_seed, StreamRole};
use twinbeam_core::stats::{
    analyze_shot, binning_sweep, correlation_map, shot_scatter, BinnedPoint, ScatterTable,
    ShotRecord,
};

/// Everything a completed run leaves behind, for callers that want to keep
/// processing in memory instead of re-reading the CSV artifacts.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    /// Per-shot statistics, ordered by shot id.
    pub records: Vec<ShotRecord>,
    /// Per-amplitude aggregation of the records.
    pub scatter: ScatterTable,
    /// Artifact names written into `out_dir`, manifest included.
    pub files: Vec<String>,
}

struct ShotMaps {
    signal: PeMap,
    idler: PeMap,
    gamma: Array2<f64>,
}

struct ShotOutput {
    record: ShotRecord,
    binning: Vec<BinnedPoint>,
    maps: Option<ShotMaps>,
}

#[derive(Serialize)]
struct ManifestShot {
    shot_id: u64,
    amp_index: usize,
    shot_index: usize,
    amplitude: f64,
    /// Derived per-shot seed, hex-encoded: full-range u64 values do not fit
    /// TOML's signed integer type.
    seed: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'a str,
    files: &'a [String],
    config: &'a ExperimentConfig,
    shots: Vec<ManifestShot>,
}

/// Execute the configured plan and write the artifact set into `out_dir`.
/// `threads` caps the rayon worker pool (`None` uses all cores).
pub fn run_plan(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    threads: Option<usize>,
) -> anyhow::Result<RunSummary> {
    let exp = cfg.build().context("configuration rejected")?;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let plan = &exp.plan;
    let mut jobs = Vec::new();
    for (amp_index, &amplitude) in plan.amplitudes.iter().enumerate() {
        for shot_index in 0..plan.shots_per_amplitude {
            jobs.push((amp_index, shot_index, amplitude));
        }
    }
    log::info!(
        "running {} shots ({} amplitudes × {})",
        jobs.len(),
        plan.amplitudes.len(),
        plan.shots_per_amplitude
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .context("building the worker pool")?;
    let mut outputs: Vec<ShotOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|&(amp_index, shot_index, amplitude)| {
                run_shot(&exp, amp_index, shot_index, amplitude)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    })?;
    outputs.sort_by_key(|o| o.record.shot_id);

    let mut files = Vec::new();
    write_shots_csv(out_dir, &outputs, &mut files)?;
    let records: Vec<ShotRecord> = outputs.iter().map(|o| o.record).collect();
    let scatter = shot_scatter(&records);
    write_groups_csv(out_dir, &scatter, &mut files)?;
    if !plan.binning_factors.is_empty() {
        write_binning_csvs(out_dir, &outputs, plan.amplitudes.len(), &mut files)?;
    }
    write_maps(out_dir, &outputs, &mut files)?;

    // The manifest goes last and lists itself: a directory containing
    // manifest.toml is a complete run.
    files.push("manifest.toml".to_string());
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        files: &files,
        config: cfg,
        shots: outputs
            .iter()
            .map(|o| ManifestShot {
                shot_id: o.record.shot_id,
                amp_index: o.record.amp_index,
                shot_index: o.record.shot_id as usize
                    - o.record.amp_index * plan.shots_per_amplitude,
                amplitude: o.record.amplitude,
                seed: format!(
                    "{:#018x}",
                    shot_seed(
                        plan.seed,
                        o.record.amp_index as u64,
                        (o.record.shot_id as usize
                            - o.record.amp_index * plan.shots_per_amplitude)
                            as u64,
                    )
                ),
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&manifest).context("serializing the run manifest")?;
    fs::write(out_dir.join("manifest.toml"), text).context("writing manifest.toml")?;

    Ok(RunSummary { out_dir: out_dir.to_path_buf(), records, scatter, files })
}

fn run_shot(
    exp: &twinbeam_core::config::Experiment,
    amp_index: usize,
    shot_index: usize,
    amplitude: f64,
) -> anyhow::Result<ShotOutput> {
    let plan = &exp.plan;
    let shot_id = (amp_index * plan.shots_per_amplitude + shot_index) as u64;
    let stage = |name: &str| {
        format!("shot {shot_id} (amplitude index {amp_index}, repetition {shot_index}): {name}")
    };
    let ai = amp_index as u64;
    let si = shot_index as u64;
    let seed = plan.seed;

    // Independent streams per shot and purpose; never shared across stages.
    let mut state = init_vacuum(&exp.grid, &mut shot_rng(seed, ai, si, StreamRole::Vacuum));
    let pump = PumpParams { peak_amplitude: amplitude, ..exp.pump.clone() };
    state.pump = make_pump(&pump, &exp.grid).with_context(|| stage("pump construction"))?;
    propagate(
        &mut state,
        &exp.crystal,
        &pump,
        &exp.solver,
        &mut shot_rng(seed, ai, si, StreamRole::Absorber),
    )
    .with_context(|| stage("crystal propagation"))?;

    let det = &exp.detector;
    let mut engine = FftEngine::new();
    let mut far = to_far_field(&state, &pump, det.focal_length, &mut engine);
    if let Some(mask) = &det.spectral_mask {
        spectral_mask(&mut far, mask, pump.downconverted_wavelength(), &mut engine);
    }
    apply_loss(
        &mut far.signal,
        det.efficiency,
        &mut shot_rng(seed, ai, si, StreamRole::SignalLoss),
    )
    .with_context(|| stage("signal-arm loss"))?;
    apply_loss(
        &mut far.idler,
        det.efficiency,
        &mut shot_rng(seed, ai, si, StreamRole::IdlerLoss),
    )
    .with_context(|| stage("idler-arm loss"))?;

    let mut signal = detect_pixels(&far, det, &det.signal_region, RegionId::Signal, shot_id)
        .with_context(|| stage("signal detection"))?;
    let mut idler = detect_pixels(&far, det, &det.idler_region, RegionId::Idler, shot_id)
        .with_context(|| stage("idler detection"))?;
    add_background(
        &mut signal,
        det.background_sigma,
        &mut shot_rng(seed, ai, si, StreamRole::SignalBackground),
    )
    .with_context(|| stage("signal background"))?;
    add_background(
        &mut idler,
        det.background_sigma,
        &mut shot_rng(seed, ai, si, StreamRole::IdlerBackground),
    )
    .with_context(|| stage("idler background"))?;

    let (mis_x, mis_y) = plan.misregistration;
    if mis_x != 0.0 || mis_y != 0.0 {
        subpixel_shift(&mut idler, mis_x, mis_y, &mut engine);
    }

    let stats = analyze_shot(&signal, &idler, det.background_sigma, plan.max_center_shift)
        .with_context(|| stage("correlation statistics"))?;
    let binning = if plan.binning_factors.is_empty() {
        Vec::new()
    } else {
        binning_sweep(&signal, &idler, &plan.binning_factors, det.background_sigma)
            .with_context(|| stage("binning sweep"))?
    };

    let want_maps = match plan.save_maps {
        SaveMaps::None => false,
        SaveMaps::First => shot_index == 0,
        SaveMaps::All => true,
    };
    let maps = if want_maps {
        let gamma = correlation_map(&signal, &idler, plan.max_center_shift.max(4))
            .with_context(|| stage("correlation map"))?;
        Some(ShotMaps { signal, idler, gamma })
    } else {
        None
    };

    Ok(ShotOutput {
        record: ShotRecord { shot_id, amp_index, amplitude, stats },
        binning,
        maps,
    })
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn write_shots_csv(
    out_dir: &Path,
    outputs: &[ShotOutput],
    files: &mut Vec<String>,
) -> anyhow::Result<()> {
    let name = "shots.csv";
    let mut w = csv::Writer::from_path(out_dir.join(name))
        .with_context(|| format!("creating {name}"))?;
    w.write_record([
        "shot_id",
        "mean_sum",
        "diff_variance",
        "normalized_variance",
        "gamma_peak",
        "center_dx",
        "center_dy",
        "corrected_flag",
    ])?;
    for o in outputs {
        let s = &o.record.stats;
        w.write_record([
            o.record.shot_id.to_string(),
            fmt(s.mean_sum),
            fmt(s.difference_variance),
            fmt(s.normalized_variance),
            fmt(s.gamma_peak),
            s.center_dx.to_string(),
            s.center_dy.to_string(),
            (s.flagged as u8).to_string(),
        ])?;
    }
    w.flush()?;
    files.push(name.to_string());
    Ok(())
}

fn write_groups_csv(
    out_dir: &Path,
    scatter: &ScatterTable,
    files: &mut Vec<String>,
) -> anyhow::Result<()> {
    let name = "groups.csv";
    let mut w = csv::Writer::from_path(out_dir.join(name))
        .with_context(|| format!("creating {name}"))?;
    w.write_record([
        "amp_index",
        "amplitude",
        "shots",
        "mean_sum",
        "mean_normalized_variance",
        "std_normalized_variance",
    ])?;
    for g in &scatter.groups {
        w.write_record([
            g.amp_index.to_string(),
            fmt(g.amplitude),
            g.shots.to_string(),
            fmt(g.mean_sum),
            fmt(g.mean_normalized_variance),
            fmt(g.std_normalized_variance),
        ])?;
    }
    w.flush()?;
    files.push(name.to_string());
    Ok(())
}

fn write_binning_csvs(
    out_dir: &Path,
    outputs: &[ShotOutput],
    amplitudes: usize,
    files: &mut Vec<String>,
) -> anyhow::Result<()> {
    for amp_index in 0..amplitudes {
        let group: Vec<&ShotOutput> =
            outputs.iter().filter(|o| o.record.amp_index == amp_index).collect();
        let Some(first) = group.first() else { continue };
        let name = format!("binning_a{amp_index}.csv");
        let mut w = csv::Writer::from_path(out_dir.join(&name))
            .with_context(|| format!("creating {name}"))?;
        w.write_record(["N", "mean_sum_per_pair", "normalized_variance"])?;
        for (pos, point) in first.binning.iter().enumerate() {
            let mut mean_sum = 0.0;
            let mut mean_v = 0.0;
            for o in &group {
                let p = &o.binning[pos];
                ensure!(
                    p.factor == point.factor,
                    "binning factor order diverged between shots of amplitude {amp_index}"
                );
                mean_sum += p.mean_sum;
                mean_v += p.normalized_variance;
            }
            let n = group.len() as f64;
            w.write_record([
                point.factor.to_string(),
                fmt(mean_sum / n),
                fmt(mean_v / n),
            ])?;
        }
        w.flush()?;
        files.push(name);
    }
    Ok(())
}

fn write_maps(
    out_dir: &Path,
    outputs: &[ShotOutput],
    files: &mut Vec<String>,
) -> anyhow::Result<()> {
    for o in outputs {
        let Some(maps) = &o.maps else { continue };
        let id = o.record.shot_id;
        for (tag, data) in [
            ("signal", &maps.signal.counts),
            ("idler", &maps.idler.counts),
            ("gamma", &maps.gamma),
        ] {
            let txt = format!("{tag}_shot{id:04}.txt");
            write_matrix_text(&out_dir.join(&txt), data)
                .with_context(|| format!("writing {txt}"))?;
            files.push(txt);
            let pgm = format!("{tag}_shot{id:04}.pgm");
            write_pgm16(&out_dir.join(&pgm), data)
                .with_context(|| format!("writing {pgm}"))?;
            files.push(format!("{pgm}.scale"));
            files.push(pgm);
        }
    }
    Ok(())
}
