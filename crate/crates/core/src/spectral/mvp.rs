use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::corrector::{ClampSpec, CorrectorSolver};
use super::indicator::overlap_fraction;
use super::SolverConfig;
use crate::ensembles::ParticleConfig;
use crate::error::{validation, Result};
use crate::stats::CompensatedSum;

/// Outer energy, relative to `|u|^2 / R^2` of the data, below which the flow
/// counts as a rigid motion and the ratio is not reported.
const DEGENERATE_ENERGY: f64 = 1e-8;

/// One low-frequency Fourier term of a periodic divergence-free field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryMode {
    pub wave: [i64; 3],
    /// Coefficient of `cos(2 pi wave . x / L)`, orthogonal to `wave`.
    pub cos: [f64; 3],
    /// Coefficient of `sin(2 pi wave . x / L)`, orthogonal to `wave`.
    pub sin: [f64; 3],
}

/// Periodic divergence-free velocity data: a constant plus low modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    pub translation: [f64; 3],
    pub modes: Vec<BoundaryMode>,
}

impl BoundaryData {
    pub fn eval(&self, dim: usize, side: f64, x: &[f64; 3]) -> [f64; 3] {
        let mut u = self.translation;
        for m in &self.modes {
            let arg: f64 = (0..dim).map(|a| m.wave[a] as f64 * x[a]).sum::<f64>() * 2.0 * PI / side;
            let (s, c) = arg.sin_cos();
            for a in 0..dim {
                u[a] += m.cos[a] * c + m.sin[a] * s;
            }
        }
        u
    }
}

fn orthogonal(dim: usize, wave: &[i64; 3], v: [f64; 3]) -> [f64; 3] {
    let k2: f64 = (0..dim).map(|a| (wave[a] * wave[a]) as f64).sum();
    let kv: f64 = (0..dim).map(|a| wave[a] as f64 * v[a]).sum();
    let mut out = v;
    for a in 0..dim {
        out[a] -= wave[a] as f64 * kv / k2;
    }
    out
}

/// `count` random samples with all wave vectors of max-norm at most
/// `max_mode`, coefficients uniform in `[-1, 1]` projected to be solenoidal.
/// The constant part is zero.
pub fn random_boundary_data(dim: usize, count: usize, max_mode: i64, seed: u64) -> Vec<BoundaryData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut waves = Vec::new();
    let z = if dim == 3 { max_mode } else { 0 };
    for a in -max_mode..=max_mode {
        for b in -max_mode..=max_mode {
            for c in -z..=z {
                let w = [a, b, c];
                // one representative of each +-k pair
                if w > [0, 0, 0] {
                    waves.push(w);
                }
            }
        }
    }
    (0..count)
        .map(|_| {
            let modes = waves
                .iter()
                .map(|w| {
                    let mut draw = || {
                        let mut v = [0.0; 3];
                        for x in v.iter_mut().take(dim) {
                            *x = rng.random_range(-1.0..1.0);
                        }
                        orthogonal(dim, w, v)
                    };
                    BoundaryMode {
                        wave: *w,
                        cos: draw(),
                        sin: draw(),
                    }
                })
                .collect();
            BoundaryData {
                translation: [0.0; 3],
                modes,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MvpReport {
    pub radius: f64,
    /// `avg_{B_1} |grad u|^2 / avg_{B_R} |grad u|^2`, `None` when degenerate.
    pub ratios: Vec<Option<f64>>,
    pub degenerate: Vec<bool>,
    pub max_ratio: Option<f64>,
    pub iterations: Vec<usize>,
}

/// Mean-value ratios for Stokes flow around the particles of `config`,
/// clamped to each boundary datum outside the ball of radius `radius` about
/// the box center.
pub fn mvp_ratio(config: &ParticleConfig, radius: f64, gap: f64, data: &[BoundaryData], sc: &SolverConfig) -> Result<MvpReport> {
    let dim = config.dim;
    let side = config.side;
    if !(radius > 1.0) || radius > 0.5 * side {
        return validation(format!("ball radius {radius} must lie in (1, L/2]"));
    }
    let center = [0.5 * side, 0.5 * side, if dim == 3 { 0.5 * side } else { 0.0 }];
    for c in &config.centers {
        let d = config.distance(&center, c);
        if d + 1.0 > radius - gap + 1e-12 {
            return validation(format!("particle at distance {d:.3} not inside B(R - rho)"));
        }
    }
    let mut solver = CorrectorSolver::new(config, sc)?;
    let grid = *solver.grid();
    let len = grid.len();
    let h = grid.spacing();
    let rel = |x: &[f64; 3]| config.displacement(&center, x);
    let mask: Vec<bool> = (0..len)
        .map(|k| {
            let r = rel(&grid.node_position(k));
            (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt() > radius
        })
        .collect();
    let ball_weights = |r: f64| -> Vec<f64> {
        (0..len)
            .map(|k| {
                let d = rel(&grid.strain_position(k));
                overlap_fraction(dim, [d[0] / r, d[1] / r, d[2] / r], 0.5 * h / r)
            })
            .collect()
    };
    let w_small = ball_weights(1.0);
    let w_large = ball_weights(radius);
    let zero = [[0.0; 3]; 3];

    let mut report = MvpReport {
        radius,
        ratios: Vec::with_capacity(data.len()),
        degenerate: Vec::with_capacity(data.len()),
        max_ratio: None,
        iterations: Vec::with_capacity(data.len()),
    };
    for datum in data {
        let mut target = vec![vec![0.0; len]; dim];
        for k in 0..len {
            let u = datum.eval(dim, side, &grid.node_position(k));
            for a in 0..dim {
                target[a][k] = u[a];
            }
        }
        let scale: f64 = target.iter().flatten().map(|v| v * v).sum::<f64>() / len as f64;
        let clamp = ClampSpec {
            mask: mask.clone(),
            target,
        };
        let field = solver.solve_clamped(&clamp, &zero)?;
        let grad = solver.discretization().gradient_field(&field.velocity_hat);
        let avg = |w: &[f64]| -> f64 {
            let mut num = CompensatedSum::new();
            let mut den = CompensatedSum::new();
            for k in 0..len {
                if w[k] > 0.0 {
                    num.add(w[k] * grad.iter().map(|g| g[k] * g[k]).sum::<f64>());
                    den.add(w[k]);
                }
            }
            num.value() / den.value()
        };
        let (inner, outer) = (avg(&w_small), avg(&w_large));
        report.iterations.push(field.iterations);
        if outer <= DEGENERATE_ENERGY * scale.max(f64::MIN_POSITIVE) / (radius * radius) {
            report.ratios.push(None);
            report.degenerate.push(true);
        } else {
            report.ratios.push(Some(inner / outer));
            report.degenerate.push(false);
        }
    }
    report.max_ratio = report.ratios.iter().flatten().copied().reduce(f64::max);
    Ok(report)
}
