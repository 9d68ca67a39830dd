use serde::{Deserialize, Serialize};

use super::cluster::cluster_terms;
use crate::effective::{assemble_tensor, config_tensor, StrainBasis, ViscosityTensor};
use crate::ensembles::{generate, unit_ball_volume, EnsembleSpec, ParticleConfig};
use crate::error::{validation, Result};
use crate::spectral::SolverConfig;

/// Relative tolerance on the voxel size across levels.
const SPACING_TOL: f64 = 1e-9;

/// Results at one box side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLevel {
    #[serde(rename = "L")]
    pub side: f64,
    pub n: usize,
    pub tensor: ViscosityTensor,
    /// Mean diagonal of `B_L - Id` for one particle in the box, times the
    /// mean particle count: the first-order cluster sum.
    pub first_order: f64,
    pub first_order_stderr: f64,
    /// `phi_realized (d + 2) / 2`.
    pub first_order_expected: f64,
    /// Pair difference `delta^{x, x'}` for the first particle of the first
    /// configuration and its nearest neighbour, under the first basis strain.
    pub pair_delta: Option<f64>,
}

/// Frobenius distance between the tensors at successive levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDifference {
    pub from_side: f64,
    pub to_side: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub spacing: f64,
    pub levels: Vec<ConvergenceLevel>,
    pub differences: Vec<LevelDifference>,
    /// Slope of `ln |B_{L'} - B_L|` against `ln L`, when at least two
    /// differences are positive.
    pub rate: Option<f64>,
}

impl ConvergenceTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Whether each difference is at most the previous one plus both error bars.
    pub fn decreasing_within_errors(&self) -> bool {
        self.differences
            .windows(2)
            .all(|w| w[1].value <= w[0].value + w[0].stderr + w[1].stderr)
    }
}

fn difference(a: &ViscosityTensor, b: &ViscosityTensor) -> (f64, f64) {
    let m = a.dim();
    let mut sq = 0.0;
    let mut var = 0.0;
    for i in 0..m {
        for j in 0..m {
            let d = b.b[i][j] - a.b[i][j];
            sq += d * d;
            var += d * d * (a.stderr[i][j].powi(2) + b.stderr[i][j].powi(2));
        }
    }
    let value = sq.sqrt();
    let stderr = if value > 0.0 {
        (var / sq).sqrt()
    } else {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += a.stderr[i][j].powi(2) + b.stderr[i][j].powi(2);
            }
        }
        s.sqrt()
    };
    (value, stderr)
}

fn nearest_pair(config: &ParticleConfig) -> Option<ParticleConfig> {
    if config.len() < 2 {
        return None;
    }
    let c0 = &config.centers[0];
    let (k, _) = config.centers[1..]
        .iter()
        .enumerate()
        .map(|(k, c)| (k + 1, config.distance(c0, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    Some(config.select(&[0, k]))
}

/// Assembles `B_L` at every `(L, n)` level with a fixed voxel size and
/// reports successive differences, first-order cluster sums and one pair
/// difference per level.
pub fn finite_volume_convergence(
    spec: &EnsembleSpec,
    levels: &[(f64, usize)],
    sc: &SolverConfig,
    n_configs: usize,
) -> Result<ConvergenceTable> {
    if levels.len() < 3 {
        return validation(format!("at least 3 box sides are required, got {}", levels.len()));
    }
    let spacing = levels[0].0 / levels[0].1 as f64;
    for &(side, n) in levels {
        let h = side / n as f64;
        if (h - spacing).abs() > SPACING_TOL * spacing {
            return validation(format!(
                "inconsistent voxel size: L = {side}, n = {n} gives {h}, expected {spacing}"
            ));
        }
    }
    let dim = spec.dim;
    let basis = StrainBasis::canonical(dim)?;
    let m = basis.len() as f64;
    let mut out = Vec::with_capacity(levels.len());
    for &(side, n) in levels {
        let mut s = spec.clone();
        s.side = side;
        let mut scl = sc.clone();
        scl.n = n;
        let tensor = assemble_tensor(&s, &scl, n_configs)?;

        let mid = 0.5 * side;
        let single = ParticleConfig::new(dim, side, 0.0, 0, vec![[mid, mid, if dim == 3 { mid } else { 0.0 }]]);
        let (b1, _) = config_tensor(&single, &scl, &basis)?;
        let excess = (0..basis.len()).map(|i| b1[i][i] - 1.0).sum::<f64>() / m;
        let per_count = side.powi(dim as i32) / unit_ball_volume(dim);
        let first_order = excess * tensor.phi_realized * per_count;
        let first_order_stderr = excess * tensor.phi_stderr * per_count;

        let mut first = s.clone();
        first.seed = s.config_seed(0);
        let config = generate(&first)?;
        let pair_delta = match nearest_pair(&config) {
            Some(pair) => {
                let rep = cluster_terms(&pair, &basis.elements[0], &scl, false)?;
                Some(rep.delta(3))
            }
            None => None,
        };
        out.push(ConvergenceLevel {
            side,
            n,
            first_order_expected: tensor.phi_realized * (dim as f64 + 2.0) / 2.0,
            tensor,
            first_order,
            first_order_stderr,
            pair_delta,
        });
    }
    let differences: Vec<LevelDifference> = out
        .windows(2)
        .map(|w| {
            let (value, stderr) = difference(&w[0].tensor, &w[1].tensor);
            LevelDifference {
                from_side: w[0].side,
                to_side: w[1].side,
                value,
                stderr,
            }
        })
        .collect();
    let pos: Vec<(f64, f64)> = differences
        .iter()
        .filter(|d| d.value > 0.0)
        .map(|d| (d.from_side.ln(), d.value.ln()))
        .collect();
    let rate = (pos.len() >= 2).then(|| crate::stats::linear_fit_slope(&pos).0);
    Ok(ConvergenceTable {
        spacing,
        levels: out,
        differences,
        rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::ProcessKind;

    #[test]
    fn empty_ensembles_converge_trivially() {
        let spec = EnsembleSpec::new(2, 8.0, ProcessKind::RandomSequentialAddition, 0.0, 0.5, 3);
        let sc = SolverConfig::new(16, 100.0);
        let t = finite_volume_convergence(&spec, &[(8.0, 16), (16.0, 32), (32.0, 64)], &sc, 2).unwrap();
        for l in &t.levels {
            for (i, row) in l.tensor.b.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    assert_eq!(v, if i == j { 1.0 } else { 0.0 });
                }
            }
            assert!(l.pair_delta.is_none());
        }
        assert!(t.differences.iter().all(|d| d.value == 0.0));
        assert!(t.rate.is_none());
        assert!(t.decreasing_within_errors());
    }

    #[test]
    fn voxel_size_must_be_fixed() {
        let spec = EnsembleSpec::new(2, 8.0, ProcessKind::RandomSequentialAddition, 0.02, 0.5, 3);
        let sc = SolverConfig::new(16, 100.0);
        let r = finite_volume_convergence(&spec, &[(8.0, 16), (16.0, 16), (32.0, 64)], &sc, 1);
        assert!(matches!(r, Err(crate::Error::Validation(_))));
        assert!(finite_volume_convergence(&spec, &[(8.0, 16), (16.0, 32)], &sc, 1).is_err());
    }

    #[test]
    fn first_order_sums_track_einstein() {
        let spec = EnsembleSpec::new(2, 12.0, ProcessKind::RandomSequentialAddition, 0.05, 0.5, 11);
        let sc = SolverConfig::new(32, 1e3).with_tol(1e-8);
        let t = finite_volume_convergence(&spec, &[(12.0, 48), (16.0, 64), (24.0, 96)], &sc, 2).unwrap();
        for l in &t.levels {
            let rel = (l.first_order - l.first_order_expected).abs() / l.first_order_expected;
            assert!(rel < 0.15, "L={}: {} vs {}", l.side, l.first_order, l.first_order_expected);
            assert!(l.pair_delta.is_some());
        }
        assert_eq!(t.differences.len(), 2);
    }
}
