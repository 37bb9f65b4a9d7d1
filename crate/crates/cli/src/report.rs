//! Self-contained SVG report from a completed run directory.
//!
//! The report plots exactly what the CSV artifacts contain — no statistics
//! are recomputed here. Panel one is the noise scatter: per-shot normalized
//! variance against the mean detected sum (log axis), per-amplitude means
//! with error bars, the shot-noise limit V = 1, and optionally the loss
//! floor 1 − η. Panel two (present when binning tables exist) shows the
//! normalized variance against super-pixel size per amplitude group.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};

/// Rendering options.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReportOptions {
    /// Detection efficiency; when given, the 1 − η floor is drawn.
    pub efficiency: Option<f64>,
}

struct GroupRow {
    amplitude: f64,
    mean_sum: f64,
    mean_v: f64,
    std_v: f64,
}

struct BinningCurve {
    label: String,
    /// (factor, normalized variance)
    points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 8] = [
    "#4878cf", "#d1495b", "#3a9d6e", "#8c5cb4", "#c77b30", "#3b8ea5", "#a34f7c", "#6b6b6b",
];

fn read_columns(path: &Path, wanted: &[&str]) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let positions: Vec<usize> = wanted
        .iter()
        .map(|w| {
            headers
                .iter()
                .position(|h| h == *w)
                .ok_or_else(|| anyhow!("{} lacks a {w:?} column", path.display()))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut columns = vec![Vec::new(); wanted.len()];
    for record in reader.records() {
        let record = record?;
        for (c, &i) in positions.iter().enumerate() {
            let token = record
                .get(i)
                .ok_or_else(|| anyhow!("{}: short row", path.display()))?;
            columns[c].push(token.parse::<f64>().with_context(|| {
                format!("{}: {:?} is not a number", path.display(), token)
            })?);
        }
    }
    Ok(columns)
}

/// Render `report.svg` into the run directory and return its path.
pub fn render_report(run_dir: &Path, options: &ReportOptions) -> anyhow::Result<PathBuf> {
    if let Some(eta) = options.efficiency {
        if !(0.0..=1.0).contains(&eta) {
            bail!("efficiency {eta} outside [0, 1]");
        }
    }

    let shots = read_columns(
        &run_dir.join("shots.csv"),
        &["mean_sum", "normalized_variance"],
    )?;
    let (shot_sums, shot_vs) = (&shots[0], &shots[1]);
    if shot_sums.is_empty() {
        bail!("shots.csv in {} has no data rows", run_dir.display());
    }

    let groups_cols = read_columns(
        &run_dir.join("groups.csv"),
        &["amplitude", "mean_sum", "mean_normalized_variance", "std_normalized_variance"],
    )?;
    let groups: Vec<GroupRow> = (0..groups_cols[0].len())
        .map(|i| GroupRow {
            amplitude: groups_cols[0][i],
            mean_sum: groups_cols[1][i],
            mean_v: groups_cols[2][i],
            std_v: groups_cols[3][i],
        })
        .collect();

    let mut curves = Vec::new();
    for (k, group) in groups.iter().enumerate() {
        let path = run_dir.join(format!("binning_a{k}.csv"));
        if !path.exists() {
            continue;
        }
        let cols = read_columns(&path, &["N", "normalized_variance"])?;
        curves.push(BinningCurve {
            label: format!("a = {}", group.amplitude),
            points: cols[0].iter().copied().zip(cols[1].iter().copied()).collect(),
        });
    }

    let svg = render_svg(shot_sums, shot_vs, &groups, &curves, options);
    let out = run_dir.join("report.svg");
    std::fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
    Ok(out)
}

fn nice_step(range: f64, target_ticks: usize) -> f64 {
    let raw = range / target_ticks as f64;
    let mag = 10f64.powf(raw.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= raw {
            return m * mag;
        }
    }
    10.0 * mag
}

struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

impl Panel {
    fn clip(&self, v: f64, lo: f64, hi: f64) -> f64 {
        v.clamp(lo, hi)
    }
}

fn render_svg(
    shot_sums: &[f64],
    shot_vs: &[f64],
    groups: &[GroupRow],
    curves: &[BinningCurve],
    options: &ReportOptions,
) -> String {
    let width = 960.0;
    let scatter = Panel { x0: 80.0, y0: 55.0, w: 840.0, h: 400.0 };
    let has_binning = !curves.is_empty();
    let binning = Panel { x0: 80.0, y0: 560.0, w: 840.0, h: 300.0 };
    let height = if has_binning { binning.y0 + binning.h + 60.0 } else { scatter.y0 + scatter.h + 60.0 };

    // --- scatter scales -----------------------------------------------------
    let positive_sums: Vec<f64> = shot_sums
        .iter()
        .chain(groups.iter().map(|g| &g.mean_sum))
        .copied()
        .filter(|v| *v > 0.0)
        .collect();
    let (lx0, lx1) = if positive_sums.is_empty() {
        (0.0, 2.0)
    } else {
        let lo = positive_sums.iter().cloned().fold(f64::INFINITY, f64::min).log10() - 0.15;
        let hi = positive_sums.iter().cloned().fold(f64::NEG_INFINITY, f64::max).log10() + 0.15;
        (lo, hi.max(lo + 0.5))
    };
    let mut v_all: Vec<f64> = shot_vs.to_vec();
    for g in groups {
        v_all.push(g.mean_v + g.std_v);
        v_all.push(g.mean_v - g.std_v);
    }
    v_all.push(1.0);
    if let Some(eta) = options.efficiency {
        v_all.push(1.0 - eta);
    }
    let v_max = v_all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let v_min = v_all.iter().cloned().fold(f64::INFINITY, f64::min);
    let pad = 0.08 * (v_max - v_min).max(0.5);
    let (vy0, vy1) = ((v_min - pad).min(0.0), v_max + pad);

    let sx = |v: f64| scatter.x0 + (v.log10() - lx0) / (lx1 - lx0) * scatter.w;
    let sy = |v: f64| scatter.y0 + scatter.h - (v - vy0) / (vy1 - vy0) * scatter.h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"30\" font-size=\"17\" font-weight=\"bold\">\
         Twin-beam difference noise vs detected signal</text>",
        scatter.x0
    );

    // Frame and gridlines.
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>",
        scatter.x0, scatter.y0, scatter.w, scatter.h
    );
    let d0 = lx0.ceil() as i64;
    let d1 = lx1.floor() as i64;
    for d in d0..=d1 {
        let x = scatter.x0 + (d as f64 - lx0) / (lx1 - lx0) * scatter.w;
        let _ = write!(
            svg,
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#ddd\"/>\n\
             <text x=\"{x}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            scatter.y0,
            scatter.y0 + scatter.h,
            scatter.y0 + scatter.h + 18.0,
            10f64.powi(d as i32)
        );
    }
    let step = nice_step(vy1 - vy0, 6);
    let mut tick = (vy0 / step).ceil() * step;
    while tick <= vy1 {
        let y = sy(tick);
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{:.2}</text>\n",
            scatter.x0,
            scatter.x0 + scatter.w,
            scatter.x0 - 8.0,
            y + 4.0,
            tick
        );
        tick += step;
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">\
         mean detected sum per pixel pair [pe]</text>",
        scatter.x0 + scatter.w / 2.0,
        scatter.y0 + scatter.h + 42.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"22\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 22 {})\">normalized variance V</text>",
        scatter.y0 + scatter.h / 2.0,
        scatter.y0 + scatter.h / 2.0
    );

    // Reference levels.
    let snl_y = sy(1.0);
    let _ = write!(
        svg,
        "<line x1=\"{}\" y1=\"{snl_y}\" x2=\"{}\" y2=\"{snl_y}\" stroke=\"#555\" \
         stroke-dasharray=\"7 4\"/>\n\
         <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#555\">shot-noise limit</text>\n",
        scatter.x0,
        scatter.x0 + scatter.w,
        scatter.x0 + 10.0,
        snl_y - 6.0
    );
    if let Some(eta) = options.efficiency {
        let floor_y = sy(1.0 - eta);
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{floor_y}\" x2=\"{}\" y2=\"{floor_y}\" stroke=\"#3a9d6e\" \
             stroke-dasharray=\"2 4\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#3a9d6e\">loss floor 1−η = {:.2}</text>\n",
            scatter.x0,
            scatter.x0 + scatter.w,
            scatter.x0 + 10.0,
            floor_y - 6.0,
            1.0 - eta
        );
    }

    // Per-shot points.
    for (&sum, &v) in shot_sums.iter().zip(shot_vs) {
        if sum <= 0.0 {
            continue;
        }
        let x = scatter.clip(sx(sum), scatter.x0, scatter.x0 + scatter.w);
        let y = scatter.clip(sy(v), scatter.y0, scatter.y0 + scatter.h);
        let _ = writeln!(
            svg,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#4878cf\" fill-opacity=\"0.45\"/>"
        );
    }

    // Group means with error bars.
    for g in groups {
        if g.mean_sum <= 0.0 {
            continue;
        }
        let x = sx(g.mean_sum);
        let y = sy(g.mean_v);
        let y_lo = scatter.clip(sy(g.mean_v - g.std_v), scatter.y0, scatter.y0 + scatter.h);
        let y_hi = scatter.clip(sy(g.mean_v + g.std_v), scatter.y0, scatter.y0 + scatter.h);
        let _ = write!(
            svg,
            "<line x1=\"{x:.2}\" y1=\"{y_hi:.2}\" x2=\"{x:.2}\" y2=\"{y_lo:.2}\" \
             stroke=\"#d1495b\" stroke-width=\"1.5\"/>\n\
             <rect x=\"{:.2}\" y=\"{:.2}\" width=\"9\" height=\"9\" fill=\"#d1495b\"/>\n",
            x - 4.5,
            y - 4.5
        );
    }

    // --- binning panel ------------------------------------------------------
    if has_binning {
        let factors: Vec<f64> = curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.0))
            .collect();
        let f_max = factors.iter().cloned().fold(1.0, f64::max);
        let mut bv: Vec<f64> = curves
            .iter()
            .flat_map(|c| c.points.iter().map(|p| p.1))
            .collect();
        bv.push(1.0);
        let b_max = bv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let b_min = bv.iter().cloned().fold(f64::INFINITY, f64::min);
        let bpad = 0.1 * (b_max - b_min).max(0.4);
        let (by0, by1) = ((b_min - bpad).min(0.0), b_max + bpad);
        let bx = |n: f64| binning.x0 + (n - 0.5) / (f_max + 0.5 - 0.5) * binning.w;
        let by = |v: f64| binning.y0 + binning.h - (v - by0) / (by1 - by0) * binning.h;

        let _ = write!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"16\" font-weight=\"bold\">\
             Noise vs super-pixel size</text>\n\
             <rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n",
            binning.x0,
            binning.y0 - 18.0,
            binning.x0,
            binning.y0,
            binning.w,
            binning.h
        );
        let mut seen = std::collections::BTreeSet::new();
        for &f in &factors {
            let key = f as i64;
            if !seen.insert(key) {
                continue;
            }
            let x = bx(f);
            let _ = write!(
                svg,
                "<line x1=\"{x:.2}\" y1=\"{}\" x2=\"{x:.2}\" y2=\"{}\" stroke=\"#eee\"/>\n\
                 <text x=\"{x:.2}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{key}</text>\n",
                binning.y0,
                binning.y0 + binning.h,
                binning.y0 + binning.h + 18.0
            );
        }
        let bstep = nice_step(by1 - by0, 5);
        let mut tick = (by0 / bstep).ceil() * bstep;
        while tick <= by1 {
            let y = by(tick);
            let _ = write!(
                svg,
                "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"#eee\"/>\n\
                 <text x=\"{}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"end\">{tick:.2}</text>\n",
                binning.x0,
                binning.x0 + binning.w,
                binning.x0 - 8.0,
                y + 4.0
            );
            tick += bstep;
        }
        let snl = by(1.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{snl:.2}\" x2=\"{}\" y2=\"{snl:.2}\" stroke=\"#555\" \
             stroke-dasharray=\"7 4\"/>",
            binning.x0,
            binning.x0 + binning.w
        );
        for (i, curve) in curves.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let path: Vec<String> = curve
                .points
                .iter()
                .map(|&(n, v)| format!("{:.2},{:.2}", bx(n), by(v)))
                .collect();
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>",
                path.join(" ")
            );
            for &(n, v) in &curve.points {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.2\" fill=\"{color}\"/>",
                    bx(n),
                    by(v)
                );
            }
            // Legend entry.
            let lx = binning.x0 + binning.w - 150.0;
            let ly = binning.y0 + 16.0 + 18.0 * i as f64;
            let _ = write!(
                svg,
                "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
                 stroke-width=\"2\"/>\n\
                 <text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
                lx + 24.0,
                lx + 30.0,
                ly + 4.0,
                curve.label
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">\
             super-pixel side N [native pixels]</text>",
            binning.x0 + binning.w / 2.0,
            binning.y0 + binning.h + 42.0
        );
    }

    svg.push_str("</svg>\n");
    svg
}
