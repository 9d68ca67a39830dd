use rustfft::num_complex::Complex64 as C;

use super::discretization::Discretization;
use super::grid::{sym_components, Grid};
use super::strain::SymField;
use crate::error::{validation, Result};

/// Constant-viscosity Stokes Green operator applied to a polarization field.
///
/// Returns `-D(u)` for the mean-zero periodic `u` with `div u = 0` and
/// `div(2 mu0 D(u) + tau) = grad p`. Mode by mode this is the real
/// symmetric multiplier `sym(s (x) P tau s) / (mu0 |s|^2)` of the discrete
/// gradient symbol `s`, so `G(2 mu0 G(tau)) = G(tau)`.
pub fn green_apply(grid: &Grid, tau: &SymField, mu0: f64) -> Result<SymField> {
    if tau.dim != grid.dim || tau.n != grid.n || tau.len() != grid.len() {
        return validation("polarization field does not match the grid");
    }
    if !(mu0 > 0.0) || !mu0.is_finite() {
        return validation(format!("reference viscosity must be positive, got {mu0}"));
    }
    if tau.comps.iter().flatten().any(|v| !v.is_finite()) {
        return validation("polarization field has non-finite values");
    }
    let dim = grid.dim;
    let comps = sym_components(dim);
    let len = grid.len();
    let mut disc = Discretization::new(*grid);
    let refs: Vec<&[f64]> = tau.comps.iter().map(|v| v.as_slice()).collect();
    let hat = disc.to_spectral(&refs);
    let mut out = vec![C::default(); comps.len() * len];
    for k in 0..len {
        let s2 = disc.s2(k);
        if s2 == 0.0 {
            continue;
        }
        let s = disc.s(k);
        let mut t = [[C::default(); 3]; 3];
        for (c, &(i, j, _)) in comps.iter().enumerate() {
            t[i][j] = hat[c * len + k];
            t[j][i] = hat[c * len + k];
        }
        let mut v = [C::default(); 3];
        for i in 0..dim {
            for j in 0..dim {
                v[i] += t[i][j] * s[j];
            }
        }
        let sv: C = (0..dim).map(|i| s[i] * v[i]).sum();
        for i in 0..dim {
            v[i] -= s[i] * sv / s2;
        }
        for (c, &(i, j, _)) in comps.iter().enumerate() {
            out[c * len + k] = 0.5 * (s[j] * v[i] + s[i] * v[j]) / (mu0 * s2);
        }
    }
    let real = disc.to_real(&out, comps.len());
    Ok(SymField {
        dim,
        n: grid.n,
        comps: real,
    })
}
