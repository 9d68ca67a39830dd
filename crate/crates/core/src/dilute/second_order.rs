use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::near::near_reflection_with;
use crate::analytic::{single_sphere_solution, FarKernel, RadialAnsatz, SphereQuadrature};
use crate::effective::StrainBasis;
use crate::ensembles::{DecayFit, PairCorrelation};
use crate::error::{validation, Error, Result};
use crate::spectral::{strain_dim_check, Mat3};

/// Bins at the end of the radial range used for tail extrapolation.
const TAIL_BINS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderOptions {
    /// Midpoint sub-intervals per correlation bin.
    pub radial_substeps: usize,
    /// Level of the direction quadrature used for angular averages.
    pub angular_level: usize,
    /// Largest accepted ratio of the extrapolated tail to the total.
    pub tail_limit: f64,
}

impl Default for SecondOrderOptions {
    fn default() -> Self {
        Self {
            radial_substeps: 4,
            angular_level: 6,
            tail_limit: 0.05,
        }
    }
}

/// One radial sample of the quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRow {
    pub r: f64,
    /// Angular integrals `int_{|y| = r} near(y) dS` and `int K(y) dS`.
    pub near_shell: f64,
    pub far_shell: f64,
    pub f2: f64,
    pub h2: f64,
    pub near_cumulative: f64,
    pub far_cumulative: f64,
}

/// `E : B2 E` split into the near (`f2`) and far (`h2`) integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderTerm {
    pub dim: usize,
    pub strain: Mat3,
    pub near_term: f64,
    pub near_stderr: f64,
    pub far_term: f64,
    pub far_stderr: f64,
    pub total: f64,
    pub stderr: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Extrapolated contributions beyond `r_max`, not included in the terms.
    pub near_tail: f64,
    pub far_tail: f64,
    /// Fitted decay exponents of the shell integrals at the end of the range.
    pub near_shell_decay: f64,
    pub far_shell_decay: f64,
    pub correlation_decay: Option<DecayFit>,
    pub trace: Vec<QuadratureRow>,
}

impl SecondOrderTerm {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Quadrature trace with header `r,near_shell,far_shell,f2,h2,near_cum,far_cum`.
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("r,near_shell,far_shell,f2,h2,near_cum,far_cum\n");
        for t in &self.trace {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                t.r, t.near_shell, t.far_shell, t.f2, t.h2, t.near_cumulative, t.far_cumulative
            );
        }
        s
    }
}

/// Second-order tensor over the canonical basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderTensor {
    pub basis: StrainBasis,
    #[serde(rename = "B2")]
    pub b: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl SecondOrderTensor {
    /// `tr(B2)/m` and its standard error.
    pub fn isotropic_part(&self) -> (f64, f64) {
        let m = self.basis.len() as f64;
        let mean = (0..self.basis.len()).map(|i| self.b[i][i]).sum::<f64>() / m;
        let se = (0..self.basis.len()).map(|i| self.stderr[i][i].powi(2)).sum::<f64>().sqrt() / m;
        (mean, se)
    }
}

/// Per-bin radial integrals of the shell kernels for one strain.
struct BinIntegrals {
    near: Vec<f64>,
    far: Vec<f64>,
    /// `(bin, r, shell integral)` at every sub-interval midpoint.
    near_samples: Vec<(usize, f64, f64)>,
    far_samples: Vec<(usize, f64, f64)>,
}

fn check_correlation(pc: &PairCorrelation) -> Result<()> {
    if pc.empty {
        return validation("pair correlation was estimated from empty configurations");
    }
    if pc.dim != 2 && pc.dim != 3 {
        return validation(format!("dimension {} not supported", pc.dim));
    }
    if let Some(fit) = pc.decay {
        if !(fit.exponent - 2.0 * fit.stderr > 0.0) {
            return Err(Error::Renormalization(format!(
                "h2 does not decay: fitted exponent {:.3} +- {:.3}",
                fit.exponent, fit.stderr
            )));
        }
    }
    Ok(())
}

/// Level of the fixed direction quadrature for overlapping offsets, where the
/// extended integrand has a kink along `|x - y| = 1`.
const OVERLAP_LEVEL: usize = 48;

/// Far pairing at `|y| <= 2`, with `psi^{y}` continued inside its own ball
/// by the rigid field `-E (x - y)`.
fn far_overlapping(base: &RadialAnsatz, quad: &SphereQuadrature, y: &[f64; 3]) -> f64 {
    let dim = base.dim;
    quad.integrate(|nu| {
        let mut z = [0.0; 3];
        for a in 0..dim {
            z[a] = nu[a] - y[a];
        }
        let r2: f64 = z[..dim].iter().map(|v| v * v).sum();
        let w = if r2 >= 1.0 {
            base.velocity(&z)
        } else {
            let mut v = [0.0; 3];
            for i in 0..dim {
                v[i] = -(0..dim).map(|j| base.strain[i][j] * z[j]).sum::<f64>();
            }
            v
        };
        let sig = base.total_stress(nu);
        let mut s = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                s += w[i] * sig[i][j] * nu[j];
            }
        }
        s
    })
}

/// Midpoint sub-intervals `(bin, r, width)` covering `[max(r_lo, from), r_hi]`.
fn radial_nodes(pc: &PairCorrelation, from: f64, substeps: usize) -> Vec<(usize, f64, f64)> {
    let mut nodes = Vec::new();
    for k in 0..pc.r_lo.len() {
        let lo = pc.r_lo[k].max(from);
        let hi = pc.r_hi[k];
        if hi <= lo {
            continue;
        }
        let step = (hi - lo) / substeps as f64;
        for j in 0..substeps {
            nodes.push((k, lo + (j as f64 + 0.5) * step, step));
        }
    }
    nodes
}

fn bin_integrals(pc: &PairCorrelation, e: &Mat3, opts: &SecondOrderOptions) -> Result<BinIntegrals> {
    let dim = pc.dim;
    let base = single_sphere_solution(dim, e)?;
    let far = FarKernel::new(dim, e)?;
    let dirs = SphereQuadrature::new(dim, opts.angular_level);
    let fine = SphereQuadrature::new(dim, OVERLAP_LEVEL);
    let r_min = 2.0 + pc.gap.max(0.0);
    let bins = pc.r_lo.len();

    // shell integral over directions at radius r
    let shell = |r: f64, near: bool| -> Result<f64> {
        let mut acc = 0.0;
        for (nu, w) in dirs.normals.iter().zip(&dirs.weights) {
            let mut y = [0.0; 3];
            for a in 0..dim {
                y[a] = r * nu[a];
            }
            acc += w * if near {
                near_reflection_with(&base, &y)?
            } else if r > 2.0 {
                far.eval(&y)?
            } else {
                far_overlapping(&base, &fine, &y)
            };
        }
        Ok(acc * r.powi(dim as i32 - 1))
    };

    let near_nodes = radial_nodes(pc, r_min, opts.radial_substeps);
    let far_nodes = radial_nodes(pc, 0.0, opts.radial_substeps);
    let near_vals: Vec<Result<f64>> = near_nodes.par_iter().map(|&(_, r, _)| shell(r, true)).collect();
    let far_vals: Vec<Result<f64>> = far_nodes.par_iter().map(|&(_, r, _)| shell(r, false)).collect();

    let mut near = vec![0.0; bins];
    let mut far_int = vec![0.0; bins];
    let mut near_samples = Vec::with_capacity(near_nodes.len());
    for (&(k, r, step), v) in near_nodes.iter().zip(near_vals) {
        let v = v?;
        near[k] += v * step;
        near_samples.push((k, r, v));
    }
    let mut far_samples = Vec::with_capacity(far_nodes.len());
    for (&(k, r, step), v) in far_nodes.iter().zip(far_vals) {
        let v = v?;
        far_int[k] += v * step;
        far_samples.push((k, r, v));
    }
    Ok(BinIntegrals {
        near,
        far: far_int,
        near_samples,
        far_samples,
    })
}

/// Shell integrals below this fraction of the largest one count as zero.
const ROUNDOFF: f64 = 1e-10;

/// Local power-law exponent of `|g|` over the last few samples; infinite
/// when the end of the range is at roundoff level.
fn end_decay(samples: &[(usize, f64, f64)]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return f64::NAN;
    }
    let peak = samples.iter().map(|s| s.2.abs()).fold(0.0, f64::max);
    if samples[n - 1].2.abs() <= ROUNDOFF * peak {
        return f64::INFINITY;
    }
    let a = &samples[n - 1 - (n - 1).min(4)];
    let b = &samples[n - 1];
    let (ga, gb) = (a.2.abs(), b.2.abs());
    if ga == 0.0 || gb == 0.0 {
        return f64::INFINITY;
    }
    -(gb / ga).ln() / (b.1 / a.1).ln()
}

/// `int_{r_max}^inf A (r/r_max)^{-p} dr` for a shell integral of size `A` at `r_max`.
fn power_tail(amplitude: f64, r_max: f64, p: f64) -> f64 {
    if amplitude == 0.0 || p == f64::INFINITY {
        0.0
    } else if p > 1.0 {
        amplitude.abs() * r_max / (p - 1.0)
    } else {
        f64::INFINITY
    }
}

fn evaluate(pc: &PairCorrelation, e: &Mat3, opts: &SecondOrderOptions) -> Result<SecondOrderTerm> {
    let bi = bin_integrals(pc, e, opts)?;
    let bins = pc.r_lo.len();
    let mut near_term = 0.0;
    let mut far_term = 0.0;
    let (mut near_var, mut far_var, mut var) = (0.0, 0.0, 0.0);
    for k in 0..bins {
        near_term += bi.near[k] * pc.f2[k];
        far_term += bi.far[k] * pc.h2[k];
        let se = pc.stderr[k];
        near_var += (bi.near[k] * se).powi(2);
        far_var += (bi.far[k] * se).powi(2);
        var += ((bi.near[k] + bi.far[k]) * se).powi(2);
    }

    let r_max = *pc.r_hi.last().unwrap_or(&0.0);
    let tail_from = bins.saturating_sub(TAIL_BINS);
    let f2_end = pc.f2[tail_from..].iter().sum::<f64>() / (bins - tail_from).max(1) as f64;
    let h2_end = pc.h2[tail_from..].iter().map(|v| v.abs()).sum::<f64>() / (bins - tail_from).max(1) as f64;
    let near_p = end_decay(&bi.near_samples);
    let far_p = end_decay(&bi.far_samples);
    let gamma = pc.decay.map(|d| d.exponent).unwrap_or(0.0);
    let near_last = bi.near_samples.last().map_or(0.0, |s| s.2);
    let far_last = bi.far_samples.last().map_or(0.0, |s| s.2);
    let near_tail = power_tail(near_last * f2_end, r_max, near_p);
    let far_tail = power_tail(far_last * h2_end, r_max, far_p + gamma);

    let mut trace = Vec::with_capacity(bi.far_samples.len());
    let (mut nc, mut fc) = (0.0, 0.0);
    let mut last_bin = usize::MAX;
    let mut near_iter = bi.near_samples.iter().peekable();
    for &(k, r, fs) in &bi.far_samples {
        if k != last_bin {
            last_bin = k;
            nc += bi.near[k] * pc.f2[k];
            fc += bi.far[k] * pc.h2[k];
        }
        let ns = match near_iter.peek() {
            Some(&&(_, rn, v)) if (rn - r).abs() < 1e-12 => {
                near_iter.next();
                v
            }
            _ => 0.0,
        };
        trace.push(QuadratureRow {
            r,
            near_shell: ns,
            far_shell: fs,
            f2: pc.f2[k],
            h2: pc.h2[k],
            near_cumulative: nc,
            far_cumulative: fc,
        });
    }

    let total = near_term + far_term;
    let tail = near_tail + far_tail;
    if !(tail <= opts.tail_limit * total.abs()) {
        return Err(Error::Renormalization(format!(
            "pair integrals not converged by r_max = {r_max}: extrapolated tail {tail:.3e} vs total {total:.3e}"
        )));
    }
    Ok(SecondOrderTerm {
        dim: pc.dim,
        strain: *e,
        near_term,
        near_stderr: near_var.sqrt(),
        far_term,
        far_stderr: far_var.sqrt(),
        total,
        stderr: var.sqrt(),
        r_min: 2.0 + pc.gap.max(0.0),
        r_max,
        near_tail,
        far_tail,
        near_shell_decay: near_p,
        far_shell_decay: far_p,
        correlation_decay: pc.decay,
        trace,
    })
}

/// Second-order pair term for strain `e`: the near pairing against `f2`
/// plus the far pairing against `h2`, by radial quadrature over the bins of
/// `pc` with angular averages of both kernels.
///
/// The near pairing uses the two-reflection approximation and covers
/// `|y| > 2 + gap`; the far pairing covers all offsets, continuing `psi^{y}`
/// rigidly inside its ball where the two balls overlap. Tails beyond the
/// last bin are extrapolated from the end-of-range decay and reported, not
/// added; a tail above `opts.tail_limit` of the total is an error. A fitted
/// `h2` decay exponent that is not positive beyond two standard errors is
/// refused.
pub fn second_order_term(pc: &PairCorrelation, e: &Mat3, opts: &SecondOrderOptions) -> Result<SecondOrderTerm> {
    check_correlation(pc)?;
    strain_dim_check(pc.dim, e)?;
    if opts.radial_substeps == 0 || opts.angular_level < 2 {
        return validation("quadrature needs at least one radial substep and angular level 2");
    }
    evaluate(pc, e, opts)
}

/// [`second_order_term`] over the canonical basis, by polarization.
pub fn second_order_tensor(pc: &PairCorrelation, opts: &SecondOrderOptions) -> Result<SecondOrderTensor> {
    check_correlation(pc)?;
    let basis = StrainBasis::canonical(pc.dim)?;
    let m = basis.len();
    let bins = pc.r_lo.len();
    // per-bin weights (near + far) of each quadratic form
    let form = |e: &Mat3| -> Result<(Vec<f64>, Vec<f64>)> {
        let bi = bin_integrals(pc, e, opts)?;
        Ok((bi.near, bi.far))
    };
    let combine = |a: &Mat3, b: &Mat3, s: f64| {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = a[i][j] + s * b[i][j];
            }
        }
        c
    };
    let mut b = vec![vec![0.0; m]; m];
    let mut stderr = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..=i {
            let (near, far) = if i == j {
                form(&basis.elements[i])?
            } else {
                let (np, fp) = form(&combine(&basis.elements[i], &basis.elements[j], 1.0))?;
                let (nm, fm) = form(&combine(&basis.elements[i], &basis.elements[j], -1.0))?;
                (
                    np.iter().zip(&nm).map(|(p, q)| 0.25 * (p - q)).collect(),
                    fp.iter().zip(&fm).map(|(p, q)| 0.25 * (p - q)).collect(),
                )
            };
            let mut v = 0.0;
            let mut var = 0.0;
            for k in 0..bins {
                v += near[k] * pc.f2[k] + far[k] * pc.h2[k];
                var += ((near[k] + far[k]) * pc.stderr[k]).powi(2);
            }
            b[i][j] = v;
            b[j][i] = v;
            stderr[i][j] = var.sqrt();
            stderr[j][i] = var.sqrt();
        }
    }
    Ok(SecondOrderTensor { basis, b, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{generate, pair_correlation, EnsembleSpec, ParticleConfig, ProcessKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shear() -> Mat3 {
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]]
    }

    /// Radial correlation table with `f2 = lambda^2 (1 + g(r))` outside contact.
    fn synthetic(side: f64, lambda: f64, se: f64, g: impl Fn(f64) -> f64) -> PairCorrelation {
        let bw = 0.1;
        let bins = (0.5 * side / bw) as usize;
        let r_lo: Vec<f64> = (0..bins).map(|k| k as f64 * bw).collect();
        let r_hi: Vec<f64> = r_lo.iter().map(|r| r + bw).collect();
        let l2 = lambda * lambda;
        let f2: Vec<f64> = r_lo.iter().map(|&r| if r >= 2.0 { l2 * (1.0 + g(r + 0.5 * bw)) } else { 0.0 }).collect();
        let mut pc = PairCorrelation {
            dim: 2,
            side,
            gap: 0.0,
            n_configs: 1,
            bin_width: bw,
            h2: f2.iter().map(|f| f - l2).collect(),
            f2,
            r_lo,
            r_hi,
            stderr: vec![se * l2; bins],
            intensity: lambda,
            pair_baseline: l2,
            lambda2: l2,
            fit_range: (4.0, 0.5 * side),
            decay: None,
            empty: false,
        };
        pc.lambda2 = pc.f2.iter().copied().fold(0.0, f64::max);
        pc.refit();
        pc
    }

    #[test]
    fn absent_correlation_leaves_only_the_contact_far_term() {
        let pc = synthetic(32.0, 0.01, 1e-3, |_| 0.0);
        let t = second_order_term(&pc, &shear(), &SecondOrderOptions::default()).unwrap();
        assert!(pc.decay.is_none());
        assert!(t.near_term > 0.0);
        // the angular average of the far kernel vanishes off contact
        for row in t.trace.iter().filter(|r| r.r > 2.0) {
            assert!(row.far_shell.abs() < 1e-10, "r={}: {}", row.r, row.far_shell);
        }
        assert!(t.near_tail < 0.05 * t.total.abs());
        assert!(t.trace_csv().starts_with("r,near_shell"));
    }

    #[test]
    fn sampled_poisson_far_term_is_statistically_zero() {
        let (side, lambda) = (32.0, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let configs: Vec<ParticleConfig> = (0..400)
            .map(|_| {
                let n = rand_distr::Distribution::sample(&rand_distr::Poisson::new(lambda * side * side).unwrap(), &mut rng) as usize;
                let centers = (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side, 0.0]).collect();
                ParticleConfig::new(2, side, 0.0, 0, centers)
            })
            .collect();
        let pc = pair_correlation(&configs, 0.1, None).unwrap();
        let t = second_order_term(&pc, &shear(), &SecondOrderOptions::default()).unwrap();
        assert!(t.far_term.abs() <= 3.0 * t.far_stderr, "{} +- {}", t.far_term, t.far_stderr);
        assert!(t.near_term > 3.0 * t.near_stderr);
    }

    #[test]
    fn non_decaying_correlation_is_refused() {
        let pc = synthetic(32.0, 0.01, 1e-3, |_| 0.3);
        let fit = pc.decay.expect("a constant excess is significant");
        assert!(fit.exponent.abs() < 0.1);
        let err = second_order_term(&pc, &shear(), &SecondOrderOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Renormalization(_)));
        assert!(err.to_string().contains("renormalization hypothesis violated"));
        assert!(second_order_tensor(&pc, &SecondOrderOptions::default()).is_err());
    }

    #[test]
    fn halving_the_radial_step_changes_little() {
        let pc = synthetic(32.0, 0.01, 1e-3, |r| 0.5 * (-(r - 2.0)).exp());
        let coarse = SecondOrderOptions {
            radial_substeps: 2,
            ..Default::default()
        };
        let fine = SecondOrderOptions {
            radial_substeps: 4,
            ..Default::default()
        };
        let a = second_order_term(&pc, &shear(), &coarse).unwrap().total;
        let b = second_order_term(&pc, &shear(), &fine).unwrap().total;
        assert!((a - b).abs() < 0.01 * b.abs(), "{a} vs {b}");
    }

    #[test]
    fn isotropic_input_gives_an_isotropic_tensor() {
        let pc = synthetic(32.0, 0.01, 1e-2, |r| 0.5 * (-(r - 2.0)).exp());
        let t = second_order_tensor(&pc, &SecondOrderOptions::default()).unwrap();
        let (d0, d1) = (t.b[0][0], t.b[1][1]);
        let se = (t.stderr[0][0].powi(2) + t.stderr[1][1].powi(2)).sqrt();
        assert!((d0 - d1).abs() <= 3.0 * se);
        assert!((d0 - d1).abs() < 1e-3 * d0.abs(), "{d0} vs {d1}");
        assert!(t.b[0][1].abs() < 1e-3 * d0.abs());
        // the diagonal matches the scalar form of a unit basis strain
        let s = second_order_term(&pc, &t.basis.elements[1], &SecondOrderOptions::default()).unwrap();
        assert!((s.total - d1).abs() < 1e-12 * d1.abs());
    }

    #[test]
    fn hardcore_ensemble_gives_a_finite_term_below_the_log_ceiling() {
        let spec = EnsembleSpec::new(2, 32.0, ProcessKind::RandomSequentialAddition, 0.02, 0.5, 5);
        let configs: Vec<_> = (0..200)
            .map(|k| {
                let mut s = spec.clone();
                s.seed = spec.config_seed(k);
                generate(&s).unwrap()
            })
            .collect();
        let pc = pair_correlation(&configs, 0.1, None).unwrap();
        let e = StrainBasis::canonical(2).unwrap().elements[1];
        let t = second_order_term(&pc, &e, &SecondOrderOptions::default()).unwrap();
        assert!(t.total.is_finite() && t.total > 0.0);
        assert!(t.near_tail + t.far_tail < 0.05 * t.total.abs());
        let ceiling = pc.lambda2 * pc.intensity.ln().abs();
        assert!(t.total.abs() < 100.0 * ceiling, "{} vs {ceiling}", t.total);
    }
}
