//! `twinbeam` — stochastic twin-beam simulator and correlation analyzer.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use twinbeam_cli::calibrate::{calibrate, write_calibration_csv};
use twinbeam_cli::report::{render_report, ReportOptions};
use twinbeam_cli::runner::run_plan;
use twinbeam_core::config::ExperimentConfig;
use twinbeam_core::oracle::{ideal_normalized_variance, two_mode_gain};

#[derive(Parser)]
#[command(
    name = "twinbeam",
    version,
    about = "Stochastic simulator of high-gain twin-beam generation and \
             sub-shot-noise correlation analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a configured measurement plan end to end.
    Run {
        /// Experiment configuration file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the plan's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: $TWINBEAM_OUT, then "out").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the plan's shots per amplitude.
        #[arg(long)]
        shots: Option<usize>,
        /// Worker threads for the shot loop (default: all cores).
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Sample the coherent calibration source and tabulate shot-noise levels.
    Calibrate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Comma-separated mean photoelectron levels.
        #[arg(long, value_delimiter = ',', default_values_t = vec![10.0, 100.0, 1000.0])]
        means: Vec<f64>,
        /// Calibration map width in pixels.
        #[arg(long, default_value_t = 64)]
        width: usize,
        /// Calibration map height in pixels.
        #[arg(long, default_value_t = 64)]
        height: usize,
        /// Output directory (default: $TWINBEAM_OUT, then "out").
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an SVG report from a completed run directory.
    Report {
        /// Run directory holding shots.csv and friends
        /// (default: $TWINBEAM_OUT, then "out").
        #[arg(long)]
        out: Option<PathBuf>,
        /// Detection efficiency; draws the 1−η loss floor.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Print closed-form reference values for a gain setting.
    Oracle {
        /// Gain exponent g = σ·A₀·L.
        #[arg(long)]
        gain: f64,
        /// Detection efficiency for the noise floor.
        #[arg(long, default_value_t = 1.0)]
        efficiency: f64,
    },
}

/// Output-directory precedence: `--out` flag, then `TWINBEAM_OUT`, then "out".
fn resolve_out(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("TWINBEAM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out, shots, parallel } => {
            let mut cfg = ExperimentConfig::from_path(&config)
                .with_context(|| format!("loading configuration {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.plan.seed = seed;
            }
            if let Some(shots) = shots {
                cfg.plan.shots_per_amplitude = shots;
            }
            let out_dir = resolve_out(out);
            let summary = run_plan(&cfg, &out_dir, parallel)?;
            for g in &summary.scatter.groups {
                println!(
                    "amplitude {:>9.4} (index {}): mean sum {:>10.3} pe, \
                     V = {:.4} ± {:.4} over {} shot(s)",
                    g.amplitude,
                    g.amp_index,
                    g.mean_sum,
                    g.mean_normalized_variance,
                    g.std_normalized_variance,
                    g.shots
                );
            }
            println!(
                "wrote {} artifact(s) to {}",
                summary.files.len(),
                summary.out_dir.display()
            );
        }
        Command::Calibrate { seed, means, width, height, out } => {
            let rows = calibrate(seed, &means, width, height)?;
            let out_dir = resolve_out(out);
            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating output directory {}", out_dir.display()))?;
            let path = out_dir.join("calibration.csv");
            write_calibration_csv(&path, &rows)?;
            for r in &rows {
                println!(
                    "mean {:>9.2} pe: mean sum {:>10.3}, V = {:.4}{}",
                    r.mean_pe,
                    r.mean_sum,
                    r.normalized_variance,
                    if r.degenerate { " (degenerate)" } else { "" }
                );
            }
            println!("wrote {}", path.display());
        }
        Command::Report { out, eta } => {
            let run_dir = resolve_out(out);
            let path = render_report(&run_dir, &ReportOptions { efficiency: eta })?;
            println!("wrote {}", path.display());
        }
        Command::Oracle { gain, efficiency } => {
            anyhow::ensure!(gain >= 0.0, "gain exponent {gain} must be nonnegative");
            anyhow::ensure!(
                (0.0..=1.0).contains(&efficiency),
                "efficiency {efficiency} outside [0, 1]"
            );
            let solution = two_mode_gain(gain);
            println!("gain exponent g            = {gain}");
            println!("intensity gain cosh²g      = {}", solution.intensity_gain);
            println!("mean photons/mode sinh²g   = {}", solution.mean_photons);
            println!(
                "variance floor 1−η (η={efficiency}) = {}",
                ideal_normalized_variance(gain, efficiency)
            );
        }
    }
    Ok(())
}
