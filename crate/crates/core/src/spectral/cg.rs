use rustfft::num_complex::Complex64 as C;

use super::discretization::dot;
use crate::error::{Error, Result};

pub struct CgOutcome {
    pub iterations: usize,
    /// Final relative residual in the preconditioner norm.
    pub residual: f64,
    /// Relative residual after every iteration.
    pub history: Vec<f64>,
}

/// Preconditioned conjugate gradients on spectral vectors with the real
/// inner product. `x` holds the initial guess and receives the solution.
///
/// Stops when `sqrt(<r, M r> / <b, M b>) <= tol`.
pub fn pcg<A, M>(mut apply: A, precond: M, b: &[C], x: &mut [C], tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    A: FnMut(&[C], &mut [C]),
    M: Fn(&[C], &mut [C]),
{
    let n = b.len();
    let mut z = vec![C::default(); n];
    precond(b, &mut z);
    let bnorm = dot(b, &z).max(0.0).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = C::default());
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
            history: Vec::new(),
        });
    }
    let mut r = vec![C::default(); n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    precond(&r, &mut z);
    let mut rz = dot(&r, &z);
    let mut p = z.clone();
    let mut ap = vec![C::default(); n];
    let mut history = Vec::new();
    let mut residual = rz.max(0.0).sqrt() / bnorm;
    if residual <= tol {
        return Ok(CgOutcome {
            iterations: 0,
            residual,
            history,
        });
    }
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NonConvergence {
                iterations: it,
                residual,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        residual = rz_new.max(0.0).sqrt() / bnorm;
        history.push(residual);
        if residual <= tol {
            return Ok(CgOutcome {
                iterations: it,
                residual,
                history,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual,
    })
}
