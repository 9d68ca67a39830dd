//! Effective viscosity tensors from corrector campaigns, and cell-model
//! bounds.

mod sandwich;

pub use sandwich::{sandwich_bounds, SandwichBounds};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::ensembles::{generate, EnsembleSpec, ParticleConfig, ProcessKind};
use crate::error::{validation, Error, Result};
use crate::spectral::{cross_dissipation, frobenius, trace, CorrectorSolver, Mat3, SolverConfig};
use crate::stats::mean_stderr;

/// Largest fraction of configurations a campaign may lose to solver failures.
pub const MAX_SKIPPED_FRACTION: f64 = 0.2;

/// Frobenius-orthonormal basis of the trace-free symmetric matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrainBasis {
    pub dim: usize,
    pub elements: Vec<Mat3>,
}

impl StrainBasis {
    /// Two normal-stress elements first (one in 2D), then the shears.
    pub fn canonical(dim: usize) -> Result<Self> {
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut elements = Vec::new();
        let mut e = [[0.0; 3]; 3];
        e[0][0] = r2;
        e[1][1] = -r2;
        elements.push(e);
        match dim {
            2 => {}
            3 => {
                let r6 = 1.0 / 6f64.sqrt();
                let mut e = [[0.0; 3]; 3];
                e[0][0] = r6;
                e[1][1] = r6;
                e[2][2] = -2.0 * r6;
                elements.push(e);
            }
            _ => return validation(format!("dimension {dim} not supported")),
        }
        for i in 0..dim {
            for j in i + 1..dim {
                let mut e = [[0.0; 3]; 3];
                e[i][j] = r2;
                e[j][i] = r2;
                elements.push(e);
            }
        }
        Ok(Self { dim, elements })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Number of normal-stress elements; the rest are shears.
    pub fn normal_count(&self) -> usize {
        self.dim - 1
    }

    pub fn gram(&self) -> Vec<Vec<f64>> {
        self.elements
            .iter()
            .map(|a| self.elements.iter().map(|b| frobenius(self.dim, a, b)).collect())
            .collect()
    }

    pub fn max_trace(&self) -> f64 {
        self.elements.iter().map(|e| trace(self.dim, e).abs()).fold(0.0, f64::max)
    }
}

/// Campaign description carried with every tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub dim: usize,
    #[serde(rename = "L")]
    pub side: f64,
    pub n: usize,
    pub theta: f64,
    pub phi: f64,
    pub process: ProcessKind,
    pub gap: f64,
    pub seed: u64,
    pub n_configs: usize,
}

/// `B` in a strain basis: `E_i : B E_j`, averaged over configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViscosityTensor {
    pub basis: StrainBasis,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Configurations that entered the average.
    pub samples: usize,
    pub skipped: usize,
    /// Mean realized volume fraction and its standard error.
    pub phi_realized: f64,
    pub phi_stderr: f64,
    pub meta: TensorMeta,
}

impl ViscosityTensor {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// `tr(B) / m` and its standard error.
    pub fn isotropic_part(&self) -> (f64, f64) {
        let m = self.dim() as f64;
        let mean = (0..self.dim()).map(|i| self.b[i][i]).sum::<f64>() / m;
        let se = (0..self.dim()).map(|i| self.stderr[i][i].powi(2)).sum::<f64>().sqrt() / m;
        (mean, se)
    }

    pub fn max_asymmetry(&self) -> f64 {
        let m = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..i {
                worst = worst.max((self.b[i][j] - self.b[j][i]).abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.dim();
        let mat = nalgebra::DMatrix::from_fn(m, m, |i, j| 0.5 * (self.b[i][j] + self.b[j][i]));
        mat.symmetric_eigenvalues().min()
    }

    /// Mean diagonal over the normal-stress and over the shear elements,
    /// each with a standard error. In 2D both groups have one member.
    pub fn group_invariants(&self) -> [(f64, f64); 2] {
        let k = self.basis.normal_count();
        let group = |r: std::ops::Range<usize>| {
            let c = r.len() as f64;
            let mean = r.clone().map(|i| self.b[i][i]).sum::<f64>() / c;
            let se = r.map(|i| self.stderr[i][i].powi(2)).sum::<f64>().sqrt() / c;
            (mean, se)
        };
        [group(0..k), group(k..self.dim())]
    }

    /// `E : B E` for a trace-free symmetric `E`.
    pub fn quadratic_form(&self, e: &Mat3) -> f64 {
        let c: Vec<f64> = self.basis.elements.iter().map(|b| frobenius(self.basis.dim, b, e)).collect();
        let mut s = 0.0;
        for i in 0..c.len() {
            for j in 0..c.len() {
                s += c[i] * self.b[i][j] * c[j];
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Long-format rows `phi,L,i,j,Bij,stderr` (no header).
    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:.12e},{:.6e}",
                    self.phi_realized, self.meta.side, i, j, self.b[i][j], self.stderr[i][j]
                );
            }
        }
        s
    }
}

pub const CSV_HEADER: &str = "phi,L,i,j,Bij,stderr\n";

/// Dissipation matrix `B_ij` of one configuration and the total number of
/// solver iterations spent.
pub fn config_tensor(config: &ParticleConfig, sc: &SolverConfig, basis: &StrainBasis) -> Result<(Vec<Vec<f64>>, usize)> {
    if config.dim != basis.dim {
        return validation("basis and configuration dimensions differ");
    }
    let m = basis.len();
    if config.is_empty() {
        // zero corrector: B is the Gram matrix of an orthonormal basis
        let b = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        return Ok((b, 0));
    }
    let mut solver = CorrectorSolver::new(config, sc)?;
    let mut fields = Vec::with_capacity(basis.len());
    let mut iterations = 0;
    for e in &basis.elements {
        let f = solver.solve(e)?;
        iterations += f.iterations;
        fields.push(f);
    }
    let mut b = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let v = cross_dissipation(&fields[i], &fields[j], config, sc.theta)?;
            b[i][j] = v;
            b[j][i] = v;
        }
    }
    Ok((b, iterations))
}

/// Per-configuration outcome of a campaign.
#[derive(Debug, Clone)]
pub struct ConfigSample {
    pub index: u64,
    pub phi: f64,
    pub b: Vec<Vec<f64>>,
    pub iterations: usize,
}

fn campaign_samples(spec: &EnsembleSpec, sc: &SolverConfig, basis: &StrainBasis, n_configs: usize) -> Result<Vec<ConfigSample>> {
    let results: Vec<Result<ConfigSample>> = (0..n_configs as u64)
        .into_par_iter()
        .map(|k| {
            let mut s = spec.clone();
            s.seed = spec.config_seed(k);
            let config = generate(&s)?;
            let (b, iterations) = config_tensor(&config, sc, basis)?;
            Ok(ConfigSample {
                index: k,
                phi: config.volume_fraction(),
                b,
                iterations,
            })
        })
        .collect();
    let total = results.len();
    let mut samples = Vec::with_capacity(total);
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => samples.push(s),
            Err(e @ Error::Validation(_)) => return Err(e),
            Err(e) => log::warn!("configuration {k} skipped: {e}"),
        }
    }
    let skipped = total - samples.len();
    if skipped as f64 > MAX_SKIPPED_FRACTION * total as f64 {
        return Err(Error::Campaign { skipped, total });
    }
    Ok(samples)
}

/// Averages `B` over `n_configs` configurations drawn from `spec`.
///
/// Configuration `k` uses seed `spec.config_seed(k)`; configurations are
/// solved in parallel and reduced in index order, so the result does not
/// depend on the thread count.
pub fn assemble_tensor(spec: &EnsembleSpec, sc: &SolverConfig, n_configs: usize) -> Result<ViscosityTensor> {
    if n_configs == 0 {
        return validation("at least one configuration is required");
    }
    spec.validate()?;
    sc.validate()?;
    let basis = StrainBasis::canonical(spec.dim)?;
    let samples = campaign_samples(spec, sc, &basis, n_configs)?;
    let meta = TensorMeta {
        dim: spec.dim,
        side: spec.side,
        n: sc.n,
        theta: sc.theta,
        phi: spec.phi,
        process: spec.process,
        gap: spec.gap,
        seed: spec.seed,
        n_configs,
    };
    Ok(reduce(basis, &samples, n_configs - samples.len(), meta))
}

fn reduce(basis: StrainBasis, samples: &[ConfigSample], skipped: usize, meta: TensorMeta) -> ViscosityTensor {
    let m = basis.len();
    let mut b = vec![vec![0.0; m]; m];
    let mut stderr = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let xs: Vec<f64> = samples.iter().map(|s| s.b[i][j]).collect();
            let (mean, se) = mean_stderr(&xs);
            b[i][j] = mean;
            stderr[i][j] = se;
        }
    }
    let phis: Vec<f64> = samples.iter().map(|s| s.phi).collect();
    let (phi_realized, phi_stderr) = mean_stderr(&phis);
    ViscosityTensor {
        basis,
        b,
        stderr,
        samples: samples.len(),
        skipped,
        phi_realized,
        phi_stderr,
        meta,
    }
}

/// [`assemble_tensor`] extrapolated in `1/theta`: each configuration is
/// solved at `theta` and `2 theta` and contributes `2 B(2 theta) - B(theta)`,
/// which cancels the leading penalization bias. `meta.theta` records the
/// lower contrast.
pub fn assemble_tensor_richardson(spec: &EnsembleSpec, sc: &SolverConfig, n_configs: usize) -> Result<ViscosityTensor> {
    if n_configs == 0 {
        return validation("at least one configuration is required");
    }
    spec.validate()?;
    sc.validate()?;
    let mut stiff = sc.clone();
    stiff.theta = 2.0 * sc.theta;
    stiff.validate()?;
    let basis = StrainBasis::canonical(spec.dim)?;
    let soft = campaign_samples(spec, sc, &basis, n_configs)?;
    let hard = campaign_samples(spec, &stiff, &basis, n_configs)?;
    let samples: Vec<ConfigSample> = soft
        .iter()
        .filter_map(|a| {
            let b = hard.iter().find(|h| h.index == a.index)?;
            let m = a.b.len();
            Some(ConfigSample {
                index: a.index,
                phi: a.phi,
                b: (0..m).map(|i| (0..m).map(|j| 2.0 * b.b[i][j] - a.b[i][j]).collect()).collect(),
                iterations: a.iterations + b.iterations,
            })
        })
        .collect();
    let skipped = n_configs - samples.len();
    if skipped as f64 > MAX_SKIPPED_FRACTION * n_configs as f64 {
        return Err(Error::Campaign {
            skipped,
            total: n_configs,
        });
    }
    let meta = TensorMeta {
        dim: spec.dim,
        side: spec.side,
        n: sc.n,
        theta: sc.theta,
        phi: spec.phi,
        process: spec.process,
        gap: spec.gap,
        seed: spec.seed,
        n_configs,
    };
    Ok(reduce(basis, &samples, skipped, meta))
}

/// Entry `B_ij` from the dissipations of `E_i + E_j` and `E_i - E_j`.
pub fn polarized_entry(form_plus: f64, form_minus: f64) -> f64 {
    0.25 * (form_plus - form_minus)
}
