use std::fmt::Write as _;

use super::quadrature::SphereQuadrature;
use super::{dot, mat_vec, single_sphere_solution, RadialAnsatz};
use crate::error::{validation, Result};
use crate::spectral::Mat3;

/// Relative tolerance of the node-doubling check.
const KERNEL_TOL: f64 = 1e-10;
const START_LEVEL: usize = 8;

/// `int_{dB} sigma nu` for the full flow of `sol` on the unit sphere.
pub fn surface_force(sol: &RadialAnsatz, level: usize) -> [f64; 3] {
    let q = SphereQuadrature::new(sol.dim, level);
    let mut f = [0.0; 3];
    for (a, fa) in f.iter_mut().enumerate().take(sol.dim) {
        *fa = q.integrate(|nu| mat_vec(sol.dim, &sol.total_stress(nu), nu)[a]);
    }
    f
}

/// Far pairing `K(y) = int_{dB} psi^{y} . sigma^{0} nu` between the
/// disturbance of a ball at `y` and the stress of a ball at the origin.
#[derive(Debug, Clone)]
pub struct FarKernel {
    single: RadialAnsatz,
}

impl FarKernel {
    pub fn new(dim: usize, e: &Mat3) -> Result<Self> {
        Ok(Self {
            single: single_sphere_solution(dim, e)?,
        })
    }

    pub fn solution(&self) -> &RadialAnsatz {
        &self.single
    }

    pub fn eval(&self, y: &[f64; 3]) -> Result<f64> {
        let dim = self.single.dim;
        let r = dot(dim, y, y).sqrt();
        if !(r > 2.0) {
            return validation(format!("offset |y| = {r} must exceed 2"));
        }
        if (dim..3).any(|a| y[a] != 0.0) {
            return validation("offset has components outside the active dimensions");
        }
        let s = &self.single;
        let scale = r.powi(-(dim as i32)) * 1e-14;
        let (v, _) = SphereQuadrature::converged(dim, START_LEVEL, KERNEL_TOL, scale, |nu| {
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = nu[a] - y[a];
            }
            let w = s.velocity(&x);
            let t = mat_vec(dim, &s.total_stress(nu), nu);
            dot(dim, &w, &t)
        })?;
        Ok(v)
    }
}

pub fn bg_far_kernel(dim: usize, y: &[f64; 3], e: &Mat3) -> Result<f64> {
    FarKernel::new(dim, e)?.eval(y)
}

/// `(|y|, K(y))` along the unit direction `dir`.
pub fn kernel_table(dim: usize, e: &Mat3, dir: &[f64; 3], radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let k = FarKernel::new(dim, e)?;
    let n = dot(dim, dir, dir).sqrt();
    if !(n > 0.0) {
        return validation("direction must be nonzero");
    }
    radii
        .iter()
        .map(|&r| {
            let mut y = [0.0; 3];
            for a in 0..dim {
                y[a] = r * dir[a] / n;
            }
            Ok((r, k.eval(&y)?))
        })
        .collect()
}

/// CSV with header `r,K`.
pub fn kernel_csv(rows: &[(f64, f64)]) -> String {
    let mut s = String::from("r,K\n");
    for (r, k) in rows {
        let _ = writeln!(s, "{r},{k:e}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Rotation3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn strain3() -> Mat3 {
        [[0.4, 0.2, -0.1], [0.2, -0.7, 0.3], [-0.1, 0.3, 0.3]]
    }

    #[test]
    fn single_ball_is_force_free() {
        for dim in [2, 3] {
            let e = if dim == 2 { [[0.5, 0.2, 0.0], [0.2, -0.5, 0.0], [0.0; 3]] } else { strain3() };
            let s = single_sphere_solution(dim, &e).unwrap();
            let f = surface_force(&s, 16);
            assert!(f.iter().all(|v| v.abs() < 1e-12), "{f:?}");
        }
    }

    #[test]
    fn kernel_is_even() {
        let k = FarKernel::new(3, &strain3()).unwrap();
        let y = [2.7, -1.3, 3.1];
        let a = k.eval(&y).unwrap();
        let b = k.eval(&[-y[0], -y[1], -y[2]]).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs(), "{a} {b}");
    }

    #[test]
    fn kernel_is_rotation_equivariant() {
        let e = strain3();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let axis = Vector3::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            let q = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.random_range(0.0..6.0));
            let m = Matrix3::from_fn(|i, j| e[i][j]);
            let rm = q.matrix() * m * q.matrix().transpose();
            let re: Mat3 = std::array::from_fn(|i| std::array::from_fn(|j| rm[(i, j)]));
            let y = Vector3::new(3.0, 1.0, -2.0);
            let ry = q * y;
            let a = bg_far_kernel(3, &[y[0], y[1], y[2]], &e).unwrap();
            let b = bg_far_kernel(3, &[ry[0], ry[1], ry[2]], &re).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12), "{a} {b}");
        }
    }

    #[test]
    fn kernel_decays_like_r_to_minus_d() {
        for dim in [2, 3] {
            let e = if dim == 2 { [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]] } else { strain3() };
            let dir = [0.6, 0.8, 0.0];
            let rows = kernel_table(dim, &e, &dir, &[8.0, 16.0, 32.0, 64.0]).unwrap();
            let pts: Vec<(f64, f64)> = rows.iter().map(|(r, k)| (r.ln(), k.abs().ln())).collect();
            let (slope, _) = crate::stats::linear_fit_slope(&pts);
            assert!((slope + dim as f64).abs() < 0.3, "d={dim}: {slope}");
            assert!(kernel_csv(&rows).starts_with("r,K\n"));
        }
    }

    #[test]
    fn close_offsets_are_rejected() {
        assert!(bg_far_kernel(3, &[1.0, 1.0, 0.0], &strain3()).is_err());
    }
}
