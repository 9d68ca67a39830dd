use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::ParticleConfig;
use crate::error::{validation, Result};
use crate::spectral::{dissipation, frobenius, strain_dim_check, CorrectorSolver, Mat3, SolverConfig};
use crate::stats::CompensatedSum;

/// Largest cluster accepted without an explicit override.
pub const MAX_CLUSTER_SIZE: usize = 4;

/// Hard ceiling even with the override: `2^N` solves.
const HARD_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetEntry {
    /// Bit `k` set when particle `k` belongs to the subset.
    pub mask: u64,
    pub members: Vec<usize>,
    /// Dissipation `e(S)` of the corrector with only the particles of `S`.
    pub energy: f64,
    /// Finite difference `sum_{T in S} (-1)^{|S|-|T|} e(T)`.
    pub delta: f64,
    pub iterations: usize,
}

/// All subset energies and finite differences of a small configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub config: ParticleConfig,
    pub strain: Mat3,
    pub n: usize,
    pub theta: f64,
    /// Indexed by mask.
    pub subsets: Vec<SubsetEntry>,
    /// `sum_{|S| = k} delta^S` for `k = 0..=N`.
    pub order_sums: Vec<f64>,
    /// `|e(P) - sum_S delta^S| / |e(P)|`.
    pub telescoping_residual: f64,
}

impl ClusterReport {
    pub fn size(&self) -> usize {
        self.config.len()
    }

    pub fn delta(&self, mask: u64) -> f64 {
        self.subsets[mask as usize].delta
    }

    pub fn energy(&self, mask: u64) -> f64 {
        self.subsets[mask as usize].energy
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn subset_energy(config: &ParticleConfig, mask: u64, e: &Mat3, sc: &SolverConfig) -> Result<(f64, usize)> {
    let sub = config.subset(mask);
    if sub.is_empty() {
        return Ok((frobenius(config.dim, e, e), 0));
    }
    let field = CorrectorSolver::new(&sub, sc)?.solve(e)?;
    Ok((dissipation(&field, &sub, sc.theta)?, field.iterations))
}

/// Solves the corrector for every subset of `config` on one grid and forms
/// the inclusion-exclusion differences `delta^S`.
///
/// More than [`MAX_CLUSTER_SIZE`] particles are refused unless `allow_large`.
pub fn cluster_terms(config: &ParticleConfig, e: &Mat3, sc: &SolverConfig, allow_large: bool) -> Result<ClusterReport> {
    config.validate()?;
    sc.validate()?;
    strain_dim_check(config.dim, e)?;
    let n = config.len();
    if n > MAX_CLUSTER_SIZE && !allow_large {
        return validation(format!(
            "cluster of {n} particles needs {} solves; at most {MAX_CLUSTER_SIZE} without override",
            1u64 << n
        ));
    }
    if n > HARD_LIMIT {
        return validation(format!("cluster of {n} particles exceeds the limit of {HARD_LIMIT}"));
    }
    let count = 1u64 << n;
    let solved: Vec<Result<(f64, usize)>> = (0..count).into_par_iter().map(|mask| subset_energy(config, mask, e, sc)).collect();
    let mut energies = Vec::with_capacity(count as usize);
    let mut iterations = Vec::with_capacity(count as usize);
    for r in solved {
        let (en, it) = r?;
        energies.push(en);
        iterations.push(it);
    }

    let mut subsets = Vec::with_capacity(count as usize);
    let mut order_sums = vec![CompensatedSum::new(); n + 1];
    let mut total = CompensatedSum::new();
    for mask in 0..count {
        let size = mask.count_ones();
        let mut acc = CompensatedSum::new();
        // iterate over all submasks of `mask`
        let mut t = mask;
        loop {
            let sign = if (size - t.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
            acc.add(sign * energies[t as usize]);
            if t == 0 {
                break;
            }
            t = (t - 1) & mask;
        }
        let delta = acc.value();
        order_sums[size as usize].add(delta);
        total.add(delta);
        subsets.push(SubsetEntry {
            mask,
            members: (0..n).filter(|k| mask >> k & 1 == 1).collect(),
            energy: energies[mask as usize],
            delta,
            iterations: iterations[mask as usize],
        });
    }
    let full = energies[(count - 1) as usize];
    Ok(ClusterReport {
        config: config.clone(),
        strain: *e,
        n: sc.n,
        theta: sc.theta,
        subsets,
        order_sums: order_sums.iter().map(|s| s.value()).collect(),
        telescoping_residual: (full - total.value()).abs() / full.abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shear() -> Mat3 {
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]]
    }

    fn config(centers: Vec<[f64; 3]>) -> ParticleConfig {
        ParticleConfig::new(2, 10.0, 0.0, 0, centers)
    }

    fn sc() -> SolverConfig {
        SolverConfig::new(32, 100.0).with_tol(1e-9)
    }

    #[test]
    fn single_particle_difference_is_excess_energy() {
        let c = config(vec![[5.0, 5.0, 0.0]]);
        let r = cluster_terms(&c, &shear(), &sc(), false).unwrap();
        assert_eq!(r.delta(0), 2.0);
        assert_eq!(r.energy(0), 2.0);
        assert_eq!(r.delta(1), r.energy(1) - 2.0);
        assert!(r.delta(1) > 0.0);
    }

    #[test]
    fn pair_differences_telescope() {
        let c = config(vec![[3.0, 5.0, 0.0], [6.5, 5.5, 0.0]]);
        let r = cluster_terms(&c, &shear(), &sc(), false).unwrap();
        let sum = r.delta(1) + r.delta(2) + r.delta(3);
        assert!((sum - (r.energy(3) - 2.0)).abs() < 1e-13);
        assert!(r.telescoping_residual < 1e-14);
        assert_eq!(r.order_sums.len(), 3);
        assert!(r.to_json().unwrap().contains("\"mask\": 3"));
    }

    #[test]
    fn differences_ignore_particle_labels() {
        let centers = vec![[2.5, 2.5, 0.0], [6.0, 3.0, 0.0], [4.0, 7.0, 0.0]];
        let a = cluster_terms(&config(centers.clone()), &shear(), &sc(), false).unwrap();
        let perm = [2usize, 0, 1];
        let b = cluster_terms(&config(perm.iter().map(|&k| centers[k]).collect()), &shear(), &sc(), false).unwrap();
        for mask in 0..8u64 {
            // particle k of `b` is particle perm[k] of `a`
            let mut ma = 0u64;
            for (k, &p) in perm.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    ma |= 1 << p;
                }
            }
            let (da, db) = (a.delta(ma), b.delta(mask));
            assert!((da - db).abs() <= 1e-12 * (1.0 + da.abs()), "{mask}: {da} vs {db}");
        }
        assert!(a.telescoping_residual < 1e-12);
    }

    #[test]
    fn large_clusters_need_override() {
        let centers: Vec<[f64; 3]> = (0..5).map(|k| [1.5 + 2.2 * k as f64, 5.0, 0.0]).collect();
        let c = ParticleConfig::new(2, 12.0, 0.0, 0, centers);
        assert!(cluster_terms(&c, &shear(), &sc(), false).is_err());
    }
}
