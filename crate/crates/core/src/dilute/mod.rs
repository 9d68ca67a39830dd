//! Dilute expansion: Einstein slope fits, the renormalized first-order
//! term, finite cluster differences, the second-order pair integral and
//! finite-volume convergence.

mod cluster;
mod convergence;
mod fit;
mod near;
mod second_order;

pub use cluster::{cluster_terms, ClusterReport, SubsetEntry, MAX_CLUSTER_SIZE};
pub use convergence::{finite_volume_convergence, ConvergenceLevel, ConvergenceTable, LevelDifference};
pub use fit::{einstein_fit, DiluteFit, FitPoint, SIGNIFICANCE};
pub use near::{bg_near_kernel, near_kernel_reflection, NearKernel, NearKernelOptions};
pub use second_order::{
    second_order_tensor, second_order_term, QuadratureRow, SecondOrderOptions, SecondOrderTensor, SecondOrderTerm,
};

use crate::analytic::single_sphere_solution;
use crate::effective::{config_tensor, polarized_entry, StrainBasis};
use crate::ensembles::ParticleConfig;
use crate::error::{validation, Result};
use crate::spectral::{Mat3, SolverConfig};

fn combine(a: &Mat3, b: &Mat3, s: f64) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = a[i][j] + s * b[i][j];
        }
    }
    c
}

/// Symmetric tensor over `basis` from a quadratic form, by polarization.
pub(crate) fn polarize<F>(basis: &StrainBasis, mut form: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&Mat3) -> Result<f64>,
{
    let m = basis.len();
    let mut t = vec![vec![0.0; m]; m];
    for i in 0..m {
        let ei = &basis.elements[i];
        t[i][i] = form(ei)?;
        for j in 0..i {
            let ej = &basis.elements[j];
            let v = polarized_entry(form(&combine(ei, ej, 1.0))?, form(&combine(ei, ej, -1.0))?);
            t[i][j] = v;
            t[j][i] = v;
        }
    }
    Ok(t)
}

/// First-order term `lambda E_i : T E_j`, `T` the whole-space single-sphere
/// excess energy, over the canonical basis of dimension `dim`.
pub fn renormalized_b1(lambda: f64, dim: usize) -> Result<Vec<Vec<f64>>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return validation(format!("intensity must be non-negative, got {lambda}"));
    }
    let basis = StrainBasis::canonical(dim)?;
    polarize(&basis, |e| Ok(lambda * single_sphere_solution(dim, e)?.energy()))
}

/// Spectral counterpart of [`renormalized_b1`]: one particle in a periodic
/// box of side `side`, its excess dissipation scaled by `lambda L^d`.
pub fn renormalized_b1_numeric(lambda: f64, dim: usize, side: f64, sc: &SolverConfig) -> Result<Vec<Vec<f64>>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return validation(format!("intensity must be non-negative, got {lambda}"));
    }
    let basis = StrainBasis::canonical(dim)?;
    let c = 0.5 * side;
    let config = ParticleConfig::new(dim, side, 0.0, 0, vec![[c, c, if dim == 3 { c } else { 0.0 }]]);
    config.validate()?;
    let (b, _) = config_tensor(&config, sc, &basis)?;
    let vol = side.powi(dim as i32);
    let m = basis.len();
    Ok((0..m)
        .map(|i| (0..m).map(|j| lambda * vol * (b[i][j] - if i == j { 1.0 } else { 0.0 })).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::unit_ball_volume;

    #[test]
    fn zero_intensity_gives_zero() {
        for d in [2, 3] {
            let t = renormalized_b1(0.0, d).unwrap();
            assert!(t.iter().flatten().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn first_order_term_is_einstein() {
        for (d, phi) in [(3, 0.01), (2, 0.03)] {
            let lambda = phi / unit_ball_volume(d);
            let t = renormalized_b1(lambda, d).unwrap();
            let want = phi * (d as f64 + 2.0) / 2.0;
            for (i, row) in t.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    let w = if i == j { want } else { 0.0 };
                    assert!((v - w).abs() < 1e-10 * want, "d={d} {i}{j}: {v} vs {w}");
                }
            }
        }
        assert!(renormalized_b1(-1.0, 3).is_err());
    }

    #[test]
    fn numeric_first_order_term_tracks_the_analytic_one() {
        let lambda = 0.01;
        let sc = SolverConfig::new(64, 1e4).with_tol(1e-8);
        let num = renormalized_b1_numeric(lambda, 2, 16.0, &sc).unwrap();
        let ana = renormalized_b1(lambda, 2).unwrap();
        for i in 0..2 {
            let rel = (num[i][i] - ana[i][i]).abs() / ana[i][i];
            assert!(rel < 0.1, "{i}: {} vs {}", num[i][i], ana[i][i]);
        }
    }
}
