//! Batched row FFTs and a cache-blocked transpose.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

/// Forward/inverse plans for one transform length plus their scratch space.
pub(crate) struct RowFft<T: Real> {
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> RowFft<T> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            forward,
            inverse,
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
        }
    }

    /// Unnormalized forward transform of every consecutive row of `data`.
    pub fn forward(&mut self, data: &mut [Complex<T>]) {
        debug_assert_eq!(data.len() % self.forward.len(), 0);
        self.forward.process_with_scratch(data, &mut self.scratch);
    }

    /// Unnormalized inverse transform of every consecutive row of `data`.
    pub fn inverse(&mut self, data: &mut [Complex<T>]) {
        debug_assert_eq!(data.len() % self.forward.len(), 0);
        self.inverse.process_with_scratch(data, &mut self.scratch);
    }
}

const BLOCK: usize = 32;

/// Writes the transpose of the `rows x cols` row-major `src` into `dst`
/// (`cols x rows`, row-major).
pub(crate) fn transpose<T: Copy>(src: &[T], dst: &mut [T], rows: usize, cols: usize) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    for r0 in (0..rows).step_by(BLOCK) {
        let r1 = (r0 + BLOCK).min(rows);
        for c0 in (0..cols).step_by(BLOCK) {
            let c1 = (c0 + BLOCK).min(cols);
            for r in r0..r1 {
                let row = &src[r * cols..(r + 1) * cols];
                for c in c0..c1 {
                    dst[c * rows + r] = row[c];
                }
            }
        }
    }
}
