//! Thin FFT layer over rustfft for the (x, y, t) lattice.
//!
//! Transforms are unnormalized (rustfft convention); callers apply the 1/n or
//! 1/√n factors their use case needs. Plans are cached per engine, so one
//! engine should live for the duration of a propagation or detection pass.

use ndarray::{Array3, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::Arc;

pub struct FftEngine {
    planner: FftPlanner<f64>,
    plans: HashMap<(usize, bool), Arc<dyn Fft<f64>>>,
    scratch: Vec<Complex64>,
}

impl FftEngine {
    pub fn new() -> Self {
        FftEngine { planner: FftPlanner::new(), plans: HashMap::new(), scratch: Vec::new() }
    }

    fn plan(&mut self, len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        self.plans
            .entry((len, inverse))
            .or_insert_with(|| {
                if inverse {
                    self.planner.plan_fft_inverse(len)
                } else {
                    self.planner.plan_fft_forward(len)
                }
            })
            .clone()
    }

    /// Unnormalized FFT along one axis of a 3-D array, lane by lane.
    pub fn transform_axis(&mut self, data: &mut Array3<Complex64>, axis: usize, inverse: bool) {
        let len = data.len_of(Axis(axis));
        if len == 1 {
            return;
        }
        let plan = self.plan(len, inverse);
        let mut lane_buf = vec![Complex64::ZERO; len];
        self.scratch.resize(plan.get_inplace_scratch_len(), Complex64::ZERO);
        for mut lane in data.lanes_mut(Axis(axis)) {
            for (b, v) in lane_buf.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            plan.process_with_scratch(&mut lane_buf, &mut self.scratch);
            for (v, b) in lane.iter_mut().zip(lane_buf.iter()) {
                *v = *b;
            }
        }
    }

    /// Unitary transform over the two transverse axes of every time slice
    /// (scaled by 1/√(nx·ny) in either direction).
    pub fn unitary_fft2(&mut self, data: &mut Array3<Complex64>, inverse: bool) {
        let (nx, ny, _) = data.dim();
        self.transform_axis(data, 0, inverse);
        self.transform_axis(data, 1, inverse);
        let scale = 1.0 / ((nx * ny) as f64).sqrt();
        data.mapv_inplace(|v| v * scale);
    }

    /// Unnormalized transform over all three axes (the t axis is skipped
    /// automatically when nt == 1).
    pub fn transform_all(&mut self, data: &mut Array3<Complex64>, inverse: bool) {
        self.transform_axis(data, 0, inverse);
        self.transform_axis(data, 1, inverse);
        self.transform_axis(data, 2, inverse);
    }
}

impl Default for FftEngine {
    fn default() -> Self {
        Self::new()
    }
}

/// Circularly roll the two transverse axes by half their length, moving the
/// zero-frequency bin to the grid centre (and back — the shift is an
/// involution on power-of-two grids).
pub fn fftshift2(data: &Array3<Complex64>) -> Array3<Complex64> {
    let (nx, ny, nt) = data.dim();
    Array3::from_shape_fn((nx, ny, nt), |(i, j, k)| {
        data[[(i + nx / 2) % nx, (j + ny / 2) % ny, k]]
    })
}
