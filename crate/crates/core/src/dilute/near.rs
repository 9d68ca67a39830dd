use serde::{Deserialize, Serialize};

use crate::analytic::{single_sphere_solution, RadialAnsatz, SphereQuadrature};
use crate::ensembles::{norm, ParticleConfig};
use crate::error::{validation, Result};
use crate::spectral::{strain_dim_check, trace, CorrectorSolver, Mat3, SolverConfig, StressField};

const QUAD_START: usize = 8;
const QUAD_TOL: f64 = 1e-9;

/// Resolution and size limits of the numerical near kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NearKernelOptions {
    pub dim: usize,
    /// Minimum surface gap; offsets need `|y| > 2 + gap`.
    pub gap: f64,
    /// Grid points per particle diameter.
    pub voxels_per_diameter: f64,
    /// Largest local box solved numerically; beyond it only the reflection
    /// value is returned.
    pub max_side: f64,
}

impl NearKernelOptions {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            dim,
            gap: 0.0,
            voxels_per_diameter: 12.0,
            max_side: if dim == 2 { 64.0 } else { 16.0 },
        }
    }
}

/// Near pairing `int_{dB} psi^{y} . (sigma^{0,y} - sigma^{0}) nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearKernel {
    pub y: [f64; 3],
    /// Spectral two-body minus one-body value, absent when the local box
    /// would exceed `max_side`.
    pub numeric: Option<f64>,
    /// Truncated method-of-reflections value.
    pub reflection: f64,
    pub box_side: f64,
    pub n: usize,
    pub reflection_only: bool,
}

impl NearKernel {
    /// The numerical value when available, else the reflection value.
    pub fn value(&self) -> f64 {
        self.numeric.unwrap_or(self.reflection)
    }
}

fn trace_free(dim: usize, m: &Mat3) -> Mat3 {
    let t = trace(dim, m) / dim as f64;
    let mut out = *m;
    for (i, row) in out.iter_mut().enumerate().take(dim) {
        row[i] -= t;
    }
    out
}

fn shift(dim: usize, x: &[f64; 3], y: &[f64; 3]) -> [f64; 3] {
    let mut z = [0.0; 3];
    for a in 0..dim {
        z[a] = x[a] - y[a];
    }
    z
}

fn traction_pair(dim: usize, w: &[f64; 3], sig: &Mat3, nu: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += w[i] * sig[i][j] * nu[j];
        }
    }
    s
}

fn check_offset(dim: usize, y: &[f64; 3], gap: f64) -> Result<f64> {
    if (dim..3).any(|a| y[a] != 0.0) {
        return validation("offset has components outside the active dimensions");
    }
    let r = norm(y);
    if !(r > 2.0 + gap) {
        return validation(format!("offset |y| = {r} must exceed 2 + gap = {}", 2.0 + gap));
    }
    Ok(r)
}

/// Two-reflection approximation of the near pairing built from whole-space
/// single-sphere solutions.
///
/// Near the ball at the origin the two-body disturbance is approximated by
/// `psi^{y}` plus the response `psi^0_{E1}` of the origin ball to the strain
/// `E1 = D(psi^y)(0)`, plus the response at `y` to `E2 = D(psi^0_{E1})(y)`.
pub fn near_kernel_reflection(dim: usize, y: &[f64; 3], e: &Mat3) -> Result<f64> {
    strain_dim_check(dim, e)?;
    check_offset(dim, y, 0.0)?;
    near_reflection_with(&single_sphere_solution(dim, e)?, y)
}

pub(crate) fn near_reflection_with(base: &RadialAnsatz, y: &[f64; 3]) -> Result<f64> {
    let dim = base.dim;
    let neg_y = shift(dim, &[0.0; 3], y);
    let e1 = trace_free(dim, &base.strain_rate(&neg_y));
    let first = single_sphere_solution(dim, &e1)?;
    let e2 = trace_free(dim, &first.strain_rate(y));
    let second = single_sphere_solution(dim, &e2)?;
    let r = norm(y);
    let floor = 1e-14 * r.powi(-2 * dim as i32);
    let (v, _) = SphereQuadrature::converged(dim, QUAD_START, QUAD_TOL, floor, |nu| {
        let z = shift(dim, nu, y);
        let w = base.velocity(&z);
        let a = base.stress(&z);
        let b = first.stress(nu);
        let c = second.stress(&z);
        let mut sig = [[0.0; 3]; 3];
        for i in 0..dim {
            for j in 0..dim {
                sig[i][j] = a[i][j] + b[i][j] + c[i][j];
            }
        }
        traction_pair(dim, &w, &sig, nu)
    })?;
    Ok(v)
}

/// Smooth cutoff: one below `a`, zero above `b`.
fn cutoff(r: f64, a: f64, b: f64) -> f64 {
    if r <= a {
        1.0
    } else if r >= b {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * (r - a) / (b - a)).cos())
    }
}

/// Near pairing at offset `y` for strain `e`.
///
/// The two-particle and one-particle problems are solved on a periodic box
/// of side `max(8, 4|y|)` with the contrast, tolerance and scheme of `sc`
/// and `opts.voxels_per_diameter` points per diameter. The analytic
/// `psi^{y}`, cut off smoothly between the two balls, is paired with both
/// stresses through the discrete weak form restricted to the fluid.
pub fn bg_near_kernel(y: &[f64; 3], e: &Mat3, sc: &SolverConfig, opts: &NearKernelOptions) -> Result<NearKernel> {
    let dim = opts.dim;
    if dim != 2 && dim != 3 {
        return validation(format!("dimension {dim} not supported"));
    }
    strain_dim_check(dim, e)?;
    let r = check_offset(dim, y, opts.gap)?;
    if !(opts.voxels_per_diameter >= 4.0) {
        return validation("at least 4 voxels per diameter are required");
    }
    let base = single_sphere_solution(dim, e)?;
    let reflection = near_reflection_with(&base, y)?;
    let side = (4.0 * r).max(8.0);
    let n = ((side * opts.voxels_per_diameter / 2.0).ceil() as usize).next_multiple_of(2);
    if side > opts.max_side {
        log::warn!("offset |y| = {r:.2} needs a box of side {side:.1} > {}; reflection value only", opts.max_side);
        return Ok(NearKernel {
            y: *y,
            numeric: None,
            reflection,
            box_side: side,
            n,
            reflection_only: true,
        });
    }
    let mut sc = sc.clone();
    sc.n = n;
    sc.validate()?;

    let mid = 0.5 * side;
    let mut c0 = [0.0; 3];
    let mut c1 = [0.0; 3];
    for a in 0..dim {
        c0[a] = mid - 0.5 * y[a];
        c1[a] = mid + 0.5 * y[a];
    }
    let one = ParticleConfig::new(dim, side, opts.gap, 0, vec![c0]);
    let two = ParticleConfig::new(dim, side, opts.gap, 0, vec![c0, c1]);
    let f1 = CorrectorSolver::new(&one, &sc)?.solve(e)?;
    let f2 = CorrectorSolver::new(&two, &sc)?.solve(e)?;

    let grid = f1.grid;
    let h = grid.spacing();
    let inner = 1.0 + 2.0 * h;
    let outer = (r - 1.0 - 2.0 * h).max(inner + h);
    let mut w = vec![vec![0.0; grid.len()]; dim];
    for k in 0..grid.len() {
        let rel = one.displacement(&c0, &grid.node_position(k));
        let phi = cutoff(norm(&rel), inner, outer);
        if phi > 0.0 {
            let v = base.velocity(&shift(dim, &rel, y));
            for a in 0..dim {
                w[a][k] = phi * v[a];
            }
        }
    }
    let p2 = StressField::new(&f2).pair(&w, true);
    let p1 = StressField::new(&f1).pair(&w, true);
    Ok(NearKernel {
        y: *y,
        numeric: Some(p2 - p1),
        reflection,
        box_side: side,
        n,
        reflection_only: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::log_log_slope;

    fn shear() -> Mat3 {
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]]
    }

    fn offset(r: f64) -> [f64; 3] {
        [r * 0.3f64.cos(), r * 0.3f64.sin(), 0.0]
    }

    #[test]
    fn numeric_kernel_decays_like_the_square_of_the_disturbance() {
        let sc = SolverConfig::new(32, 1e4).with_tol(1e-10);
        let opts = NearKernelOptions::for_dim(2);
        let radii = [3.0, 4.0, 5.0, 6.0, 8.0];
        let mut vals = Vec::new();
        for &r in &radii {
            let k = bg_near_kernel(&offset(r), &shear(), &sc, &opts).unwrap();
            let num = k.numeric.unwrap();
            if r == 6.0 {
                let rel = (num - k.reflection).abs() / num.abs();
                assert!(rel < 0.2, "reflection {} vs numeric {num}", k.reflection);
            }
            vals.push(num);
        }
        let p = -log_log_slope(&radii, &vals);
        assert!((p - 4.0).abs() < 0.6, "exponent {p}");
    }

    #[test]
    fn reflection_envelope_decreases() {
        let mut prev = f64::INFINITY;
        for r in [4.0, 6.0, 9.0, 13.0, 20.0, 30.0, 45.0] {
            let v = near_kernel_reflection(2, &offset(r), &shear()).unwrap().abs();
            assert!(v < prev, "r={r}: {v} >= {prev}");
            prev = v;
        }
        let e3 = [[0.0, 0.0, 1.0], [0.0; 3], [1.0, 0.0, 0.0]];
        let a = near_kernel_reflection(3, &[0.0, 4.0, 3.0], &e3).unwrap().abs();
        let b = near_kernel_reflection(3, &[0.0, 8.0, 6.0], &e3).unwrap().abs();
        let p = (a / b).ln() / 2f64.ln();
        assert!((p - 6.0).abs() < 0.6, "3d exponent {p}");
    }

    #[test]
    fn far_offsets_fall_back_to_reflection() {
        let sc = SolverConfig::new(32, 1e4);
        let mut opts = NearKernelOptions::for_dim(2);
        opts.max_side = 16.0;
        let k = bg_near_kernel(&offset(6.0), &shear(), &sc, &opts).unwrap();
        assert!(k.reflection_only && k.numeric.is_none());
        assert_eq!(k.value(), k.reflection);
    }

    #[test]
    fn touching_offsets_are_rejected() {
        let sc = SolverConfig::new(32, 1e4);
        let mut opts = NearKernelOptions::for_dim(2);
        opts.gap = 0.5;
        assert!(bg_near_kernel(&offset(2.4), &shear(), &sc, &opts).is_err());
        assert!(near_kernel_reflection(2, &offset(1.9), &shear()).is_err());
        assert!(near_kernel_reflection(2, &[3.0, 0.0, 1.0], &shear()).is_err());
    }
}
