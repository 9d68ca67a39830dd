//! Stokes flow around a single rigid ball in a straining flow.
//!
//! Disturbances are sought in the form `u = p(r) Ex + q(r) (x.Ex) x` with
//! pressure `P = c(r) x.Ex`, each radial factor a finite sum of powers. The
//! admissible powers come in four families: two decaying (a point stresslet
//! and its potential-flow companion) and two growing (the linear flow itself
//! and a quadratic interior solution).

mod kernel;
mod quadrature;

pub use kernel::{bg_far_kernel, kernel_csv, kernel_table, surface_force, FarKernel};
pub use quadrature::{gauss_legendre, SphereQuadrature};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::unit_ball_volume;
use crate::error::{validation, Error, Result};
use crate::spectral::{frobenius, strain_dim_check, Mat3};

/// Number of random points at which the Stokes residual is recorded.
pub const RESIDUAL_SAMPLES: usize = 100;

/// Condition number above which a cell system is reported as ill-posed.
const CONDITION_WARN: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    WholeSpace,
    /// Disturbance vanishes on the outer sphere: the total velocity equals
    /// the imposed linear flow there.
    Clamped,
    /// Disturbance traction vanishes on the outer sphere.
    TractionFree,
}

/// `coef * r^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub exponent: i32,
    pub coef: f64,
}

fn radial(terms: &[PowerTerm], r: f64) -> (f64, f64) {
    let mut v = 0.0;
    let mut dv = 0.0;
    for t in terms {
        v += t.coef * r.powi(t.exponent);
        dv += t.coef * t.exponent as f64 * r.powi(t.exponent - 1);
    }
    (v, dv)
}

/// Velocity building-block coefficients `(A, B, C)` of the family with
/// leading power `a`: `u = A r^a Ex + B r^(a-2) (x.Ex) x`,
/// `P = C r^(a-2) x.Ex`.
fn family(dim: usize, a: i32) -> (f64, f64, f64) {
    let d = dim as i32;
    let df = dim as f64;
    if a == -(d + 2) {
        (-2.0 / (df + 2.0), 1.0, 0.0)
    } else if a == -d {
        (0.0, 1.0, 2.0)
    } else if a == 0 {
        (1.0, 0.0, 0.0)
    } else if a == 2 {
        let den = df * (df + 4.0);
        ((df + 2.0) / den, -2.0 / den, 1.0)
    } else {
        unreachable!("no Stokes family with power {a}")
    }
}

fn mat_vec(dim: usize, m: &Mat3, x: &[f64; 3]) -> [f64; 3] {
    let mut y = [0.0; 3];
    for i in 0..dim {
        for j in 0..dim {
            y[i] += m[i][j] * x[j];
        }
    }
    y
}

fn dot(dim: usize, a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..dim).map(|i| a[i] * b[i]).sum()
}

/// A radial power-law Stokes solution outside the unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialAnsatz {
    pub dim: usize,
    pub strain: Mat3,
    pub kind: BoundaryKind,
    /// Outer radius, infinite for the whole-space problem.
    pub radius: f64,
    /// Radial factor of `Ex`.
    pub p: Vec<PowerTerm>,
    /// Radial factor of `(x.Ex) x`.
    pub q: Vec<PowerTerm>,
    /// Radial factor of the pressure `x.Ex`.
    pub pressure: Vec<PowerTerm>,
    /// Relative Stokes residuals (momentum and divergence, larger of the
    /// two) at random sample points.
    pub residuals: Vec<f64>,
    /// Condition number of the boundary system after equilibration.
    pub condition: f64,
}

impl RadialAnsatz {
    fn from_families(dim: usize, e: &Mat3, kind: BoundaryKind, radius: f64, coefs: &[(i32, f64)], condition: f64) -> Self {
        let mut s = Self {
            dim,
            strain: *e,
            kind,
            radius,
            p: Vec::new(),
            q: Vec::new(),
            pressure: Vec::new(),
            residuals: Vec::new(),
            condition,
        };
        for &(a, c) in coefs {
            let (fa, fb, fc) = family(dim, a);
            if fa != 0.0 {
                s.p.push(PowerTerm { exponent: a, coef: c * fa });
            }
            if fb != 0.0 {
                s.q.push(PowerTerm { exponent: a - 2, coef: c * fb });
            }
            if fc != 0.0 {
                s.pressure.push(PowerTerm { exponent: a - 2, coef: c * fc });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let outer = if radius.is_finite() { radius } else { 64.0 };
        s.residuals = (0..RESIDUAL_SAMPLES)
            .map(|_| {
                let r = rng.random_range(1.0..=outer);
                let mut x = [0.0; 3];
                for v in x.iter_mut().take(dim) {
                    *v = rng.random_range(-1.0..1.0);
                }
                let n = dot(dim, &x, &x).sqrt().max(1e-3);
                for v in x.iter_mut().take(dim) {
                    *v *= r / n;
                }
                s.stokes_residual(&x)
            })
            .collect();
        s
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// Disturbance velocity at `x`, `|x| >= 1`.
    pub fn velocity(&self, x: &[f64; 3]) -> [f64; 3] {
        let d = self.dim;
        let r = dot(d, x, x).sqrt();
        let ex = mat_vec(d, &self.strain, x);
        let s = dot(d, x, &ex);
        let (p, _) = radial(&self.p, r);
        let (q, _) = radial(&self.q, r);
        let mut u = [0.0; 3];
        for i in 0..d {
            u[i] = p * ex[i] + q * s * x[i];
        }
        u
    }

    /// Velocity gradient `[i][j] = d u_i / d x_j`.
    pub fn gradient(&self, x: &[f64; 3]) -> Mat3 {
        let d = self.dim;
        let r = dot(d, x, x).sqrt();
        let ex = mat_vec(d, &self.strain, x);
        let s = dot(d, x, &ex);
        let (p, dp) = radial(&self.p, r);
        let (q, dq) = radial(&self.q, r);
        let mut g = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                let delta = if i == j { 1.0 } else { 0.0 };
                g[i][j] = dp * x[j] / r * ex[i]
                    + p * self.strain[i][j]
                    + dq * x[j] / r * s * x[i]
                    + q * (2.0 * ex[j] * x[i] + s * delta);
            }
        }
        g
    }

    /// Symmetric gradient of the disturbance.
    pub fn strain_rate(&self, x: &[f64; 3]) -> Mat3 {
        let g = self.gradient(x);
        let mut e = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                e[i][j] = 0.5 * (g[i][j] + g[j][i]);
            }
        }
        e
    }

    pub fn pressure_at(&self, x: &[f64; 3]) -> f64 {
        let d = self.dim;
        let r = dot(d, x, x).sqrt();
        let s = dot(d, x, &mat_vec(d, &self.strain, x));
        radial(&self.pressure, r).0 * s
    }

    /// Disturbance stress `2 D(u) - P Id`.
    pub fn stress(&self, x: &[f64; 3]) -> Mat3 {
        let mut sig = self.strain_rate(x);
        let p = self.pressure_at(x);
        for i in 0..self.dim {
            for j in 0..self.dim {
                sig[i][j] *= 2.0;
            }
            sig[i][i] -= p;
        }
        sig
    }

    /// Stress of the full flow `Ex + u`: `2 (D(u) + E) - P Id`.
    pub fn total_stress(&self, x: &[f64; 3]) -> Mat3 {
        let mut sig = self.stress(x);
        for i in 0..self.dim {
            for j in 0..self.dim {
                sig[i][j] += 2.0 * self.strain[i][j];
            }
        }
        sig
    }

    /// Relative residual of `Lap u - grad P = 0` and `div u = 0` at `x`,
    /// from closed-form derivatives of each power term.
    pub fn stokes_residual(&self, x: &[f64; 3]) -> f64 {
        let d = self.dim as f64;
        let dim = self.dim;
        let r = dot(dim, x, x).sqrt();
        let ex = mat_vec(dim, &self.strain, x);
        let s = dot(dim, x, &ex);
        let (mut m_ex, mut m_sx, mut div) = (0.0, 0.0, 0.0);
        let (mut a_ex, mut a_sx, mut a_div) = (0.0, 0.0, 0.0);
        for t in &self.p {
            let a = t.exponent as f64;
            let v = t.coef * a * (a + d) * r.powi(t.exponent - 2);
            m_ex += v;
            a_ex += v.abs();
            let w = t.coef * a * r.powi(t.exponent - 2);
            div += w;
            a_div += w.abs();
        }
        for t in &self.q {
            let b = t.exponent as f64;
            let v = t.coef * b * (b + d + 4.0) * r.powi(t.exponent - 2);
            m_sx += v;
            a_sx += v.abs();
            let w = 4.0 * t.coef * r.powi(t.exponent);
            m_ex += w;
            a_ex += w.abs();
            let z = t.coef * (b + d + 2.0) * r.powi(t.exponent);
            div += z;
            a_div += z.abs();
        }
        for t in &self.pressure {
            let b = t.exponent as f64;
            let v = t.coef * b * r.powi(t.exponent - 2);
            m_sx -= v;
            a_sx += v.abs();
            let w = 2.0 * t.coef * r.powi(t.exponent);
            m_ex -= w;
            a_ex += w.abs();
        }
        let exn = dot(dim, &ex, &ex).sqrt();
        let sxn = s.abs() * r;
        let mom = {
            let mut v = [0.0; 3];
            for i in 0..dim {
                v[i] = m_ex * ex[i] + m_sx * s * x[i];
            }
            dot(dim, &v, &v).sqrt()
        };
        let mom_scale = a_ex * exn + a_sx * sxn;
        let rel = |v: f64, scale: f64| if scale > 0.0 { v / scale } else { v };
        rel(mom, mom_scale).max(rel((div * s).abs(), a_div * s.abs()))
    }

    /// `int_{|x|=r} u . sigma(u) nu` from the radial factors.
    fn flux(&self, r: f64) -> f64 {
        let d = self.dim as f64;
        let (p, dp) = radial(&self.p, r);
        let (q, dq) = radial(&self.q, r);
        let (c, _) = radial(&self.pressure, r);
        // sigma nu = alpha E nu + beta (nu.E nu) nu
        let alpha = dp * r + 2.0 * p + 2.0 * q * r * r;
        let beta = r * r * (2.0 * dq * r + 4.0 * q + dp / r - c);
        let e2 = frobenius(self.dim, &self.strain, &self.strain);
        let m2 = e2 / d;
        let m4 = 2.0 * e2 / (d * (d + 2.0));
        let area = d * unit_ball_volume(self.dim) * r.powi(self.dim as i32 - 1);
        area * (p * r * alpha * m2 + (p * r * beta + q * r.powi(3) * (alpha + beta)) * m4)
    }

    /// `int |D(u)|^2` over the ball of the outer radius (whole space for
    /// the whole-space kind), with `D(u) = -E` inside the unit ball.
    pub fn energy(&self) -> f64 {
        let e2 = frobenius(self.dim, &self.strain, &self.strain);
        let inner = unit_ball_volume(self.dim) * e2;
        let outer = match self.kind {
            BoundaryKind::WholeSpace => 0.0,
            _ => self.flux(self.radius),
        };
        inner + 0.5 * (outer - self.flux(1.0))
    }
}

fn solve_system(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let n = m.nrows();
    // row equilibration
    let mut m = m;
    let mut rhs = rhs;
    for i in 0..n {
        let s = m.row(i).amax();
        if s == 0.0 {
            return Err(Error::Internal("boundary system has a zero row".into()));
        }
        for j in 0..n {
            m[(i, j)] /= s;
        }
        rhs[i] /= s;
    }
    let sv = m.clone().singular_values();
    let cond = sv.max() / sv.min();
    let x = m
        .full_piv_lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Internal("singular boundary system".into()))?;
    Ok((x, cond))
}

/// Rows `[p, p', q, q', c]` of each family at radius `r`, coefficient one.
fn family_values(dim: usize, a: i32, r: f64) -> [f64; 5] {
    let (fa, fb, fc) = family(dim, a);
    let b = a - 2;
    [
        fa * r.powi(a),
        fa * a as f64 * r.powi(a - 1),
        fb * r.powi(b),
        fb * b as f64 * r.powi(b - 1),
        fc * r.powi(b),
    ]
}

/// Whole-space disturbance of a rigid unit ball at the origin held fixed in
/// the linear flow `Ex`.
pub fn single_sphere_solution(dim: usize, e: &Mat3) -> Result<RadialAnsatz> {
    if dim != 2 && dim != 3 {
        return validation(format!("dimension {dim} not supported"));
    }
    strain_dim_check(dim, e)?;
    let d = dim as i32;
    let powers = [-(d + 2), -d];
    let mut m = DMatrix::zeros(2, 2);
    for (k, &a) in powers.iter().enumerate() {
        let v = family_values(dim, a, 1.0);
        m[(0, k)] = v[0];
        m[(1, k)] = v[2];
    }
    let rhs = DVector::from_vec(vec![-1.0, 0.0]);
    let (c, cond) = solve_system(m, rhs)?;
    let coefs: Vec<(i32, f64)> = powers.iter().zip(c.iter()).map(|(&a, &c)| (a, c)).collect();
    Ok(RadialAnsatz::from_families(dim, e, BoundaryKind::WholeSpace, f64::INFINITY, &coefs, cond))
}

/// Concentric-sphere cell: rigid unit ball inside a sphere of radius `R`
/// carrying a clamped or traction-free condition. Three dimensions only.
pub fn cell_model(dim: usize, radius: f64, kind: BoundaryKind, e: &Mat3) -> Result<RadialAnsatz> {
    if dim != 3 {
        return validation("cell model is implemented in three dimensions only");
    }
    if !(radius > 1.0) || !radius.is_finite() {
        return validation(format!("cell radius {radius} must exceed 1"));
    }
    if kind == BoundaryKind::WholeSpace {
        return single_sphere_solution(dim, e);
    }
    strain_dim_check(dim, e)?;
    let powers = [-5, -3, 0, 2];
    // unknowns scaled so growing families are O(1) at the outer radius
    let scale: Vec<f64> = powers.iter().map(|&a| if a > 0 { radius.powi(-a) } else { 1.0 }).collect();
    let mut m = DMatrix::zeros(4, 4);
    for (k, &a) in powers.iter().enumerate() {
        let inner = family_values(dim, a, 1.0);
        let outer = family_values(dim, a, radius);
        let [p, dp, q, dq, c] = outer;
        m[(0, k)] = inner[0] * scale[k];
        m[(1, k)] = inner[2] * scale[k];
        match kind {
            BoundaryKind::Clamped => {
                m[(2, k)] = p * scale[k];
                m[(3, k)] = q * scale[k];
            }
            _ => {
                let r = radius;
                m[(2, k)] = (dp * r + 2.0 * p + 2.0 * q * r * r) * scale[k];
                m[(3, k)] = (2.0 * dq * r + 4.0 * q + dp / r - c) * scale[k];
            }
        }
    }
    let rhs = DVector::from_vec(vec![-1.0, 0.0, 0.0, 0.0]);
    let (z, cond) = solve_system(m, rhs)?;
    if cond > CONDITION_WARN {
        log::warn!("cell system at R = {radius} is ill-conditioned (condition {cond:.2e})");
    }
    let coefs: Vec<(i32, f64)> = powers.iter().enumerate().map(|(k, &a)| (a, z[k] * scale[k])).collect();
    Ok(RadialAnsatz::from_families(dim, e, kind, radius, &coefs, cond))
}
