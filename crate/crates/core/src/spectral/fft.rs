//! Multi-dimensional complex FFT on cubic row-major grids, built on `rustfft`.
//!
//! Forward transforms are unnormalized; inverse transforms divide by the
//! number of points, so `inverse(forward(x)) == x`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct GridFft {
    dim: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
}

impl GridFft {
    pub fn new(dim: usize, n: usize) -> Self {
        assert!(dim == 2 || dim == 3, "only 2D and 3D grids are supported");
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            dim,
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            lines: vec![Complex64::default(); n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        let fft = self.forward.clone();
        self.transform(data, fft.as_ref());
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let fft = self.inverse.clone();
        self.transform(data, fft.as_ref());
        let scale = 1.0 / data.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&mut self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        assert_eq!(data.len(), self.len());
        let n = self.n;
        // contiguous last axis: one batched call
        fft.process_with_scratch(data, &mut self.scratch);
        match self.dim {
            2 => self.strided_axis(data, fft, n, 1, n),
            3 => {
                let plane = n * n;
                for i0 in 0..n {
                    let slab = &mut data[i0 * plane..(i0 + 1) * plane];
                    self.strided_axis(slab, fft, n, 1, n);
                }
                for i1 in 0..n {
                    self.strided_axis(&mut data[i1 * n..], fft, plane, 1, n);
                }
            }
            _ => unreachable!(),
        }
    }

    /// Transforms `count` interleaved lines: line `c` has elements at
    /// `c * line_step + k * stride`, `k < n`.
    fn strided_axis(
        &mut self,
        data: &mut [Complex64],
        fft: &dyn Fft<f64>,
        stride: usize,
        line_step: usize,
        count: usize,
    ) {
        let n = self.n;
        for c in 0..count {
            for k in 0..n {
                self.lines[c * n + k] = data[c * line_step + k * stride];
            }
        }
        fft.process_with_scratch(&mut self.lines[..count * n], &mut self.scratch);
        for c in 0..count {
            for k in 0..n {
                data[c * line_step + k * stride] = self.lines[c * n + k];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(dim: usize, n: usize, data: &[Complex64]) -> Vec<Complex64> {
        let len = n.pow(dim as u32);
        let idx = |i: usize| -> Vec<usize> {
            let mut out = vec![0; dim];
            let mut r = i;
            for a in (0..dim).rev() {
                out[a] = r % n;
                r /= n;
            }
            out
        };
        (0..len)
            .map(|k| {
                let kk = idx(k);
                let mut acc = Complex64::default();
                for (x, v) in data.iter().enumerate() {
                    let xx = idx(x);
                    let phase: f64 = kk.iter().zip(&xx).map(|(a, b)| (a * b) as f64).sum();
                    acc += v * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase / n as f64);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for dim in [2, 3] {
            let n: usize = 6;
            let len = n.pow(dim as u32);
            let data: Vec<Complex64> = (0..len)
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
                .collect();
            let expected = naive_dft(dim, n, &data);
            let mut fft = GridFft::new(dim, n);
            let mut got = data.clone();
            fft.forward(&mut got);
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).norm() < 1e-10);
            }
            fft.inverse(&mut got);
            for (a, b) in got.iter().zip(&data) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
