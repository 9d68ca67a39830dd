use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use super::{ball_volume, ParticleConfig};
use crate::error::{validation, Result};

pub const DEFAULT_BIN_WIDTH: f64 = 0.1;
pub const DEFAULT_FIT_START: f64 = 4.0;

/// Power-law fit `|h2(r)| ~ C r^{-exponent}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    pub stderr: f64,
    pub bins_used: usize,
}

/// Binned radial two-point density `f2` and correlation `h2 = f2 - lambda^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub dim: usize,
    pub side: f64,
    pub gap: f64,
    pub n_configs: usize,
    pub bin_width: f64,
    pub r_lo: Vec<f64>,
    pub r_hi: Vec<f64>,
    pub f2: Vec<f64>,
    pub h2: Vec<f64>,
    /// Standard error of `f2` (and `h2`) per bin.
    pub stderr: Vec<f64>,
    pub intensity: f64,
    /// Large-separation limit `<N(N-1)>/L^{2d}` of the binned `f2`. Equals
    /// `lambda^2` for Poisson counts and falls below it by `O(lambda^2/N)`
    /// when every configuration has the same count.
    #[serde(default)]
    pub pair_baseline: f64,
    /// Largest binned `f2`.
    pub lambda2: f64,
    pub fit_range: (f64, f64),
    /// `None` when `f2 - pair_baseline` over the fit range is consistent
    /// with zero (correlation statistically absent) or when all configs are
    /// empty.
    pub decay: Option<DecayFit>,
    /// Set when every configuration was empty.
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntensityReport {
    pub lambda: f64,
    pub lambda2: f64,
    /// Whether `lambda^2 <= lambda2 <= lambda` holds for the estimates.
    pub ordering_holds: bool,
}

/// Estimates `f2`, `h2`, `lambda` and the tail exponent of `|h2|` from
/// periodic pair counts over a set of configurations sharing `(d, L, gap)`.
///
/// Bins of width `bin_width` cover `[0, L/2)`; the decay fit uses bins inside
/// `fit_range` (default `[4, L/2]`).
pub fn pair_correlation(
    configs: &[ParticleConfig],
    bin_width: f64,
    fit_range: Option<(f64, f64)>,
) -> Result<PairCorrelation> {
    let first = match configs.first() {
        Some(c) => c,
        None => return validation("pair correlation needs at least one configuration"),
    };
    if !(bin_width > 0.0) {
        return validation("bin width must be positive");
    }
    let (dim, side, gap) = (first.dim, first.side, first.gap);
    if configs.iter().any(|c| c.dim != dim || c.side != side || c.gap != gap) {
        return validation("configurations must share dimension, box side and gap");
    }
    let half = 0.5 * side;
    let bins = (half / bin_width).floor() as usize;
    if bins == 0 {
        return validation("bin width exceeds half the box side");
    }

    let counts: Vec<u64> = configs
        .par_iter()
        .map(|c| pair_counts(c, bin_width, bins))
        .reduce(|| vec![0u64; bins], |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
            a
        });

    let m = configs.len() as f64;
    let volume = side.powi(dim as i32);
    let total_particles: usize = configs.iter().map(|c| c.len()).sum();
    let intensity = total_particles as f64 / (m * volume);
    let lambda_sq = intensity * intensity;
    let pair_baseline = configs
        .iter()
        .map(|c| {
            let n = c.len() as f64;
            n * (n - 1.0).max(0.0)
        })
        .sum::<f64>()
        / (m * volume * volume);

    let mut pc = PairCorrelation {
        dim,
        side,
        gap,
        n_configs: configs.len(),
        bin_width,
        r_lo: Vec::with_capacity(bins),
        r_hi: Vec::with_capacity(bins),
        f2: Vec::with_capacity(bins),
        h2: Vec::with_capacity(bins),
        stderr: Vec::with_capacity(bins),
        intensity,
        pair_baseline,
        lambda2: 0.0,
        fit_range: fit_range.unwrap_or((DEFAULT_FIT_START, half)),
        decay: None,
        empty: total_particles == 0,
    };
    for (b, &count) in counts.iter().enumerate() {
        let lo = b as f64 * bin_width;
        let hi = lo + bin_width;
        let shell = ball_volume(dim, hi) - ball_volume(dim, lo);
        let norm = m * volume * shell;
        let f2 = count as f64 / norm;
        // ordered pairs come in twos: Var = 2 * count under Poisson counting
        let se = (2.0 * (count.max(1)) as f64).sqrt() / norm;
        pc.r_lo.push(lo);
        pc.r_hi.push(hi);
        pc.f2.push(f2);
        pc.h2.push(if pc.empty { 0.0 } else { f2 - lambda_sq });
        pc.stderr.push(se);
    }
    pc.lambda2 = pc.f2.iter().copied().fold(0.0, f64::max);
    pc.refit();
    Ok(pc)
}

fn pair_counts(c: &ParticleConfig, width: f64, bins: usize) -> Vec<u64> {
    let mut out = vec![0u64; bins];
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            let r = c.distance(&c.centers[i], &c.centers[j]);
            let b = (r / width).floor() as usize;
            if b < bins {
                out[b] += 2;
            }
        }
    }
    out
}

impl PairCorrelation {
    /// Recomputes `decay` over the bins inside `fit_range`.
    ///
    /// The excess `g = f2 - pair_baseline` is first tested against zero: if
    /// `sum (g/se)^2` stays below its mean plus three standard deviations for
    /// pure noise, the correlation counts as absent. Otherwise `ln|g|` is
    /// regressed on `ln r` over the bins where `|g|` exceeds two standard
    /// errors.
    pub fn refit(&mut self) {
        self.decay = None;
        if self.empty {
            return;
        }
        let baseline = if self.pair_baseline > 0.0 {
            self.pair_baseline
        } else {
            self.intensity * self.intensity
        };
        let (a, b) = self.fit_range;
        let in_range: Vec<usize> = (0..self.f2.len())
            .filter(|&k| self.r_lo[k] >= a && self.r_hi[k] <= b + 1e-12)
            .collect();
        let excess = |k: usize| self.f2[k] - baseline;
        let dof = in_range.len() as f64;
        let chi2: f64 = in_range.iter().map(|&k| (excess(k) / self.stderr[k]).powi(2)).sum();
        if !(chi2 > dof + 3.0 * (2.0 * dof).sqrt()) {
            return;
        }
        let pts: Vec<(f64, f64)> = in_range
            .iter()
            .filter(|&&k| excess(k).abs() > 2.0 * self.stderr[k])
            .map(|&k| ((0.5 * (self.r_lo[k] + self.r_hi[k])).ln(), excess(k).abs().ln()))
            .collect();
        if pts.len() < 3 {
            return;
        }
        let (slope, se) = crate::stats::linear_fit_slope(&pts);
        self.decay = Some(DecayFit {
            exponent: -slope,
            stderr: se,
            bins_used: pts.len(),
        });
    }

    /// Bin centers.
    pub fn radii(&self) -> Vec<f64> {
        self.r_lo.iter().zip(&self.r_hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// CSV with header `r_lo,r_hi,f2,h2,stderr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r_lo,r_hi,f2,h2,stderr\n");
        for k in 0..self.f2.len() {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e}",
                self.r_lo[k], self.r_hi[k], self.f2[k], self.h2[k], self.stderr[k]
            );
        }
        s
    }
}

pub fn intensity_estimates(pc: &PairCorrelation) -> IntensityReport {
    let (l, l2) = (pc.intensity, pc.lambda2);
    IntensityReport {
        lambda: l,
        lambda2: l2,
        ordering_holds: l * l <= l2 && l2 <= l,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{generate, EnsembleSpec, ProcessKind};

    fn campaign(process: ProcessKind, dim: usize, side: f64, phi: f64, gap: f64, count: u64) -> Vec<ParticleConfig> {
        let base = EnsembleSpec::new(dim, side, process, phi, gap, 11);
        (0..count)
            .map(|k| {
                let mut s = base.clone();
                s.seed = base.config_seed(k);
                generate(&s).unwrap()
            })
            .collect()
    }

    #[test]
    fn rsa_hardcore_exclusion_is_exact() {
        let cs = campaign(ProcessKind::RandomSequentialAddition, 2, 30.0, 0.15, 0.5, 20);
        let pc = pair_correlation(&cs, 0.1, None).unwrap();
        for k in 0..pc.f2.len() {
            assert!(pc.f2[k] >= 0.0);
            if pc.r_hi[k] <= 2.5 + 1e-12 {
                assert_eq!(pc.f2[k], 0.0, "bin {k}");
            }
        }
        assert!(intensity_estimates(&pc).ordering_holds);
    }

    #[test]
    fn lattice_intensity() {
        let cs = campaign(ProcessKind::CubicLattice, 3, 16.0, 0.00818, 0.0, 1);
        let pc = pair_correlation(&cs, 0.1, None).unwrap();
        assert!((pc.intensity - 8f64.powi(-3)).abs() < 1e-15);
    }

    #[test]
    fn empty_configs_are_flagged() {
        let cs = vec![ParticleConfig::empty(3, 10.0); 3];
        let pc = pair_correlation(&cs, 0.1, None).unwrap();
        assert!(pc.empty && pc.decay.is_none());
        assert!(pc.f2.iter().all(|&v| v == 0.0));
        let r = intensity_estimates(&pc);
        assert_eq!((r.lambda, r.lambda2), (0.0, 0.0));
    }

    #[test]
    fn thinned_poisson_factorizes_beyond_twice_exclusion() {
        let cs = campaign(ProcessKind::PoissonThinned, 2, 40.0, 0.04, 0.0, 200);
        let pc = pair_correlation(&cs, 0.5, None).unwrap();
        let tested: Vec<usize> = (0..pc.f2.len()).filter(|&k| pc.r_lo[k] >= 4.0).collect();
        let ok = tested.iter().filter(|&&k| pc.h2[k].abs() < 3.0 * pc.stderr[k]).count();
        assert!(ok as f64 >= 0.95 * tested.len() as f64, "{ok} of {}", tested.len());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let cs = campaign(ProcessKind::RandomSequentialAddition, 2, 16.0, 0.05, 0.0, 2);
        let pc = pair_correlation(&cs, 0.5, None).unwrap();
        let csv = pc.to_csv();
        assert!(csv.starts_with("r_lo,r_hi,f2,h2,stderr\n"));
        assert_eq!(csv.lines().count(), 1 + pc.f2.len());
    }

    #[test]
    fn mismatched_boxes_are_rejected() {
        let a = ParticleConfig::empty(3, 10.0);
        let b = ParticleConfig::empty(3, 12.0);
        assert!(pair_correlation(&[a, b], 0.1, None).is_err());
        assert!(pair_correlation(&[], 0.1, None).is_err());
    }
}
