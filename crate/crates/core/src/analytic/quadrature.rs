use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let step = pn / dp;
            z -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Product rule on the unit sphere: Gauss-Legendre in the polar cosine
/// times the uniform rule in azimuth (the uniform rule alone on the circle).
#[derive(Debug, Clone)]
pub struct SphereQuadrature {
    pub dim: usize,
    pub normals: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    /// `level` polar nodes and `2 * level` azimuthal nodes.
    pub fn new(dim: usize, level: usize) -> Self {
        let mut normals = Vec::new();
        let mut weights = Vec::new();
        let az = 2 * level;
        let dphi = 2.0 * PI / az as f64;
        if dim == 2 {
            for k in 0..az {
                let t = (k as f64 + 0.5) * dphi;
                normals.push([t.cos(), t.sin(), 0.0]);
                weights.push(dphi);
            }
        } else {
            let (x, w) = gauss_legendre(level);
            for (z, wz) in x.iter().zip(&w) {
                let rho = (1.0 - z * z).sqrt();
                for k in 0..az {
                    let t = (k as f64 + 0.5) * dphi;
                    normals.push([rho * t.cos(), rho * t.sin(), *z]);
                    weights.push(wz * dphi);
                }
            }
        }
        Self { dim, normals, weights }
    }

    pub fn integrate<F: FnMut(&[f64; 3]) -> f64>(&self, mut f: F) -> f64 {
        let mut s = crate::stats::CompensatedSum::new();
        for (nu, w) in self.normals.iter().zip(&self.weights) {
            s.add(w * f(nu));
        }
        s.value()
    }

    /// Doubles the node count from `start` until successive values agree to
    /// `rel_tol` (relative, with absolute floor `abs_tol`); returns the value
    /// and the final level.
    pub fn converged<F: FnMut(&[f64; 3]) -> f64>(dim: usize, start: usize, rel_tol: f64, abs_tol: f64, mut f: F) -> Result<(f64, usize)> {
        let mut level = start.max(2);
        let mut prev = Self::new(dim, level).integrate(&mut f);
        while level <= 1024 {
            level *= 2;
            let next = Self::new(dim, level).integrate(&mut f);
            if (next - prev).abs() <= rel_tol * next.abs() + abs_tol {
                return Ok((next, level));
            }
            prev = next;
        }
        Err(Error::NonConvergence {
            iterations: level,
            residual: f64::NAN,
        })
    }
}
