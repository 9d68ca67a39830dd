use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::effective::{TensorMeta, ViscosityTensor};
use crate::error::{validation, Error, Result};

/// Two-sided 95% normal quantile used for the reported intervals.
const Z95: f64 = 1.959_963_984_540_054;

/// Significance, in standard errors, of the curvature flag and of the
/// intercept check.
pub const SIGNIFICANCE: f64 = 3.0;

/// Weighted polynomial least squares.
#[derive(Debug, Clone)]
struct PolyFit {
    coef: Vec<f64>,
    stderr: Vec<f64>,
    residuals: Vec<f64>,
    leverage: Vec<f64>,
}

/// Fits `y = sum_k c_k x^k`, `k <= degree`. With every `se > 0` the weights
/// are `1/se^2` and the covariance is inflated by the reduced chi-square when
/// it exceeds one; otherwise the fit is unweighted and the covariance comes
/// from the residual scatter.
fn poly_fit(xs: &[f64], ys: &[f64], ses: &[f64], degree: usize) -> Result<PolyFit> {
    let n = xs.len();
    let p = degree + 1;
    let weighted = ses.iter().all(|&s| s > 0.0 && s.is_finite());
    let w: Vec<f64> = if weighted { ses.iter().map(|s| 1.0 / (s * s)).collect() } else { vec![1.0; n] };
    let x = DMatrix::from_fn(n, p, |i, k| xs[i].powi(k as i32));
    let mut xtwx = DMatrix::zeros(p, p);
    let mut xtwy = DVector::zeros(p);
    for i in 0..n {
        for a in 0..p {
            xtwy[a] += w[i] * x[(i, a)] * ys[i];
            for b in 0..p {
                xtwx[(a, b)] += w[i] * x[(i, a)] * x[(i, b)];
            }
        }
    }
    let inv: DMatrix<f64> = xtwx
        .try_inverse()
        .ok_or_else(|| Error::Validation("fit design is singular; are the abscissae distinct?".into()))?;
    let coef: DVector<f64> = &inv * xtwy;
    let fitted: DVector<f64> = &x * &coef;
    let residuals: Vec<f64> = (0..n).map(|i| ys[i] - fitted[i]).collect();
    let dof = n.saturating_sub(p);
    let chi2: f64 = (0..n).map(|i| w[i] * residuals[i].powi(2)).sum();
    let scale = if weighted {
        if dof > 0 {
            (chi2 / dof as f64).max(1.0)
        } else {
            1.0
        }
    } else if dof > 0 {
        chi2 / dof as f64
    } else {
        0.0
    };
    let stderr = (0..p).map(|a| (inv[(a, a)] * scale).sqrt()).collect();
    let leverage = (0..n)
        .map(|i| {
            let row = x.row(i);
            w[i] * (row * &inv * row.transpose())[(0, 0)]
        })
        .collect();
    Ok(PolyFit {
        coef: coef.iter().copied().collect(),
        stderr,
        residuals,
        leverage,
    })
}

/// One abscissa of a dilute fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    /// Realized volume fraction used as abscissa.
    pub phi: f64,
    pub phi_nominal: f64,
    /// `tr(B)/m` and its standard error.
    pub isotropic: f64,
    pub isotropic_stderr: f64,
    /// Residual of the isotropic affine fit and its leverage.
    pub residual: f64,
    pub leverage: f64,
}

/// Affine fit `B(phi) = B0 + phi B1` of a sweep of viscosity tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiluteFit {
    pub meta: TensorMeta,
    pub points: Vec<FitPoint>,
    pub slope: Vec<Vec<f64>>,
    pub slope_stderr: Vec<Vec<f64>>,
    /// 95% intervals `[lo, hi]` per entry.
    pub slope_ci95: Vec<Vec<[f64; 2]>>,
    pub intercept: Vec<Vec<f64>>,
    pub intercept_stderr: Vec<Vec<f64>>,
    /// Slope of `tr(B)/m`.
    pub isotropic_slope: f64,
    pub isotropic_slope_stderr: f64,
    pub isotropic_slope_ci95: [f64; 2],
    pub isotropic_intercept: f64,
    pub isotropic_intercept_stderr: f64,
    /// Quadratic coefficient of the isotropic part.
    pub curvature: f64,
    pub curvature_stderr: f64,
    pub curvature_significant: bool,
    /// Whether every intercept entry lies within three standard errors of
    /// the identity.
    pub intercept_consistent: bool,
}

impl DiluteFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn same_campaign(a: &TensorMeta, b: &TensorMeta) -> bool {
    a.dim == b.dim && a.side == b.side && a.n == b.n && a.theta == b.theta && a.process == b.process
}

fn abscissa(t: &ViscosityTensor) -> f64 {
    if t.phi_realized.is_finite() {
        t.phi_realized
    } else {
        t.meta.phi
    }
}

fn within(value: f64, target: f64, se: f64) -> bool {
    let tol = (SIGNIFICANCE * se).max(1e-9 * (1.0 + target.abs()));
    (value - target).abs() <= tol
}

/// Weighted least-squares affine fit of every tensor entry against the
/// realized volume fraction.
pub fn einstein_fit(points: &[ViscosityTensor]) -> Result<DiluteFit> {
    if points.len() < 3 {
        return validation(format!("Einstein fit needs at least 3 tensors, got {}", points.len()));
    }
    let first = &points[0];
    if points.iter().any(|t| !same_campaign(&t.meta, &first.meta) || t.basis != first.basis) {
        return validation("tensors must share dimension, box side, resolution, contrast, process and basis");
    }
    let xs: Vec<f64> = points.iter().map(abscissa).collect();
    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
    if sorted.len() < 3 {
        return validation("Einstein fit needs at least 3 distinct volume fractions");
    }

    let m = first.dim();
    let mut slope = vec![vec![0.0; m]; m];
    let mut slope_stderr = vec![vec![0.0; m]; m];
    let mut intercept = vec![vec![0.0; m]; m];
    let mut intercept_stderr = vec![vec![0.0; m]; m];
    let mut intercept_consistent = true;
    for i in 0..m {
        for j in 0..m {
            let ys: Vec<f64> = points.iter().map(|t| t.b[i][j]).collect();
            let ses: Vec<f64> = points.iter().map(|t| t.stderr[i][j]).collect();
            let f = poly_fit(&xs, &ys, &ses, 1)?;
            intercept[i][j] = f.coef[0];
            intercept_stderr[i][j] = f.stderr[0];
            slope[i][j] = f.coef[1];
            slope_stderr[i][j] = f.stderr[1];
            let id = if i == j { 1.0 } else { 0.0 };
            intercept_consistent &= within(f.coef[0], id, f.stderr[0]);
        }
    }
    let slope_ci95 = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| [slope[i][j] - Z95 * slope_stderr[i][j], slope[i][j] + Z95 * slope_stderr[i][j]])
                .collect()
        })
        .collect();

    let iso: Vec<(f64, f64)> = points.iter().map(|t| t.isotropic_part()).collect();
    let ys: Vec<f64> = iso.iter().map(|p| p.0).collect();
    let ses: Vec<f64> = iso.iter().map(|p| p.1).collect();
    let lin = poly_fit(&xs, &ys, &ses, 1)?;
    let quad = poly_fit(&xs, &ys, &ses, 2)?;
    let curvature = quad.coef[2];
    let curvature_stderr = quad.stderr[2];
    let curvature_significant = !within(curvature, 0.0, curvature_stderr);

    let pts = points
        .iter()
        .enumerate()
        .map(|(k, t)| FitPoint {
            phi: xs[k],
            phi_nominal: t.meta.phi,
            isotropic: ys[k],
            isotropic_stderr: ses[k],
            residual: lin.residuals[k],
            leverage: lin.leverage[k],
        })
        .collect();
    Ok(DiluteFit {
        meta: first.meta.clone(),
        points: pts,
        slope,
        slope_stderr,
        slope_ci95,
        intercept,
        intercept_stderr,
        isotropic_slope: lin.coef[1],
        isotropic_slope_stderr: lin.stderr[1],
        isotropic_slope_ci95: [lin.coef[1] - Z95 * lin.stderr[1], lin.coef[1] + Z95 * lin.stderr[1]],
        isotropic_intercept: lin.coef[0],
        isotropic_intercept_stderr: lin.stderr[0],
        curvature,
        curvature_stderr,
        curvature_significant,
        intercept_consistent,
    })
}
