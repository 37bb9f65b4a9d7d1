//! Computational lattice: transverse coordinates (x, y) and comoving time (t).
//!
//! Coordinates are centred, `x_i = (i − n/2)·dx`, so the beam axis sits on a
//! grid sample and the discrete Fourier transform pairs mode `i` with mode
//! `n − i` under point reflection. `nt = 1` collapses the temporal dimension
//! and turns the model into its CW limit.

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    /// Transverse sample spacing [m].
    pub dx: f64,
    pub dy: f64,
    /// Temporal sample spacing [s]; unused when `nt == 1`.
    pub dt: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, nt: usize, dx: f64, dy: f64, dt: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny), ("nt", nt)] {
            if n == 0 || !n.is_power_of_two() {
                return Err(SimError::Config(format!(
                    "{name} = {n} must be a nonzero power of two"
                )));
            }
        }
        for (name, d) in [("dx", dx), ("dy", dy), ("dt", dt)] {
            if !(d > 0.0) || !d.is_finite() {
                return Err(SimError::Config(format!("{name} = {d} must be positive")));
            }
        }
        Ok(Grid { nx, ny, nt, dx, dy, dt })
    }

    /// Total number of lattice modes.
    pub fn mode_count(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.nx / 2) as f64) * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.ny / 2) as f64) * self.dy
    }

    pub fn t(&self, k: usize) -> f64 {
        (k as f64 - (self.nt / 2) as f64) * self.dt
    }

    /// Angular spatial frequencies along x in natural FFT order [rad/m].
    pub fn qx(&self) -> Vec<f64> {
        fft_angular_freq(self.nx, self.dx)
    }

    pub fn qy(&self) -> Vec<f64> {
        fft_angular_freq(self.ny, self.dy)
    }

    /// Angular temporal frequencies in natural FFT order [rad/s].
    pub fn omega(&self) -> Vec<f64> {
        fft_angular_freq(self.nt, self.dt)
    }

    /// Physical extent along x, `nx·dx` [m].
    pub fn width_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    pub fn width_y(&self) -> f64 {
        self.ny as f64 * self.dy
    }
}

/// `2π·k/(n·d)` with `k` the signed FFT bin index.
fn fft_angular_freq(n: usize, d: f64) -> Vec<f64> {
    let step = 2.0 * std::f64::consts::PI / (n as f64 * d);
    (0..n)
        .map(|i| {
            let k = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
            k * step
        })
        .collect()
}
