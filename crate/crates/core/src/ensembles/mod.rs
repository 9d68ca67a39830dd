//! Random particle configurations in a periodic box.
//!
//! Particles are unit spheres (radius `a = 1`); all lengths are in units of
//! the particle radius.

mod correlation;
mod diagnostics;
mod process;

pub use correlation::{intensity_estimates, pair_correlation, DecayFit, IntensityReport, PairCorrelation, DEFAULT_BIN_WIDTH, DEFAULT_FIT_START};
pub use diagnostics::{geometry_diagnostics, Component, GeometryDiagnostics};
pub use process::generate;

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{validation, Result};

/// Volume of the unit ball in dimension `dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Volume of the ball of radius `r`.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    unit_ball_volume(dim) * r.powi(dim as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProcessKind {
    CubicLattice,
    RandomSequentialAddition,
    MaternII,
    PoissonThinned,
}

impl ProcessKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProcessKind::CubicLattice => "cubic-lattice",
            ProcessKind::RandomSequentialAddition => "random-sequential-addition",
            ProcessKind::MaternII => "matern-II",
            ProcessKind::PoissonThinned => "poisson-thinned",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cubic-lattice" | "lattice" => Ok(ProcessKind::CubicLattice),
            "random-sequential-addition" | "rsa" => Ok(ProcessKind::RandomSequentialAddition),
            "matern-ii" | "matern" => Ok(ProcessKind::MaternII),
            "poisson-thinned" | "poisson" => Ok(ProcessKind::PoissonThinned),
            other => validation(format!("unknown process kind '{other}'")),
        }
    }
}

/// Parameters of a random ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub dim: usize,
    /// Box side `L`.
    pub side: f64,
    pub process: ProcessKind,
    /// Target volume fraction `phi = lambda |B_1|`.
    pub phi: f64,
    /// Minimum surface gap `rho` between particles.
    pub gap: f64,
    pub seed: u64,
}

/// Largest volume fraction accepted by the generators.
pub const MAX_PHI: f64 = 0.2;

impl EnsembleSpec {
    pub fn new(dim: usize, side: f64, process: ProcessKind, phi: f64, gap: f64, seed: u64) -> Self {
        Self {
            dim,
            side,
            process,
            phi,
            gap,
            seed,
        }
    }

    /// Same ensemble, parameterized by number density instead of volume fraction.
    pub fn with_intensity(dim: usize, side: f64, process: ProcessKind, lambda: f64, gap: f64, seed: u64) -> Self {
        Self::new(dim, side, process, lambda * unit_ball_volume(dim), gap, seed)
    }

    pub fn intensity(&self) -> f64 {
        self.phi / unit_ball_volume(self.dim)
    }

    /// Expected number of particles in the box.
    pub fn target_count(&self) -> f64 {
        self.phi * self.side.powi(self.dim as i32) / unit_ball_volume(self.dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return validation(format!("dimension must be 2 or 3, got {}", self.dim));
        }
        if !(self.side >= 4.0) {
            return validation(format!("box side must be at least 4, got {}", self.side));
        }
        if !(0.0..=MAX_PHI).contains(&self.phi) {
            return validation(format!("phi out of range: {} not in [0, {MAX_PHI}]", self.phi));
        }
        if !(self.gap >= 0.0) || !self.gap.is_finite() {
            return validation(format!("gap must be non-negative, got {}", self.gap));
        }
        Ok(())
    }

    /// Seed of the `index`-th configuration of a campaign drawn from this spec.
    pub fn config_seed(&self, index: u64) -> u64 {
        split_seed(self.seed, index)
    }
}

/// Derives a child seed with the splitmix64 finalizer.
pub fn split_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Non-overlapping unit spheres in the periodic box `[0, side)^dim`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ParticleConfig {
    pub dim: usize,
    #[serde(rename = "box")]
    pub side: f64,
    pub gap: f64,
    pub seed: u64,
    #[serde(deserialize_with = "centers_serde::deserialize")]
    pub centers: Vec<[f64; 3]>,
}

mod centers_serde {
    use serde::{Deserialize, Deserializer};

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[f64; 3]>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        rows.into_iter()
            .map(|r| match r.len() {
                2 => Ok([r[0], r[1], 0.0]),
                3 => Ok([r[0], r[1], r[2]]),
                n => Err(serde::de::Error::custom(format!("center with {n} coordinates"))),
            })
            .collect()
    }
}

impl Serialize for ParticleConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        JsonConfig::from(self).serialize(s)
    }
}

impl ParticleConfig {
    pub fn new(dim: usize, side: f64, gap: f64, seed: u64, centers: Vec<[f64; 3]>) -> Self {
        let mut c = Self {
            dim,
            side,
            gap,
            seed,
            centers,
        };
        c.wrap();
        c
    }

    pub fn empty(dim: usize, side: f64) -> Self {
        Self::new(dim, side, 0.0, 0, Vec::new())
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    pub fn volume_fraction(&self) -> f64 {
        self.len() as f64 * unit_ball_volume(self.dim) / self.volume()
    }

    pub fn intensity(&self) -> f64 {
        self.len() as f64 / self.volume()
    }

    /// Maps all centers back into `[0, side)`.
    pub fn wrap(&mut self) {
        let (dim, side) = (self.dim, self.side);
        for c in self.centers.iter_mut() {
            for v in c.iter_mut().take(dim) {
                *v = v.rem_euclid(side);
                if *v >= side {
                    *v = 0.0;
                }
            }
            if dim == 2 {
                c[2] = 0.0;
            }
        }
    }

    /// Minimum-image displacement `b - a`.
    pub fn displacement(&self, a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        periodic_displacement(self.dim, self.side, a, b)
    }

    pub fn distance(&self, a: &[f64; 3], b: &[f64; 3]) -> f64 {
        norm(&self.displacement(a, b))
    }

    /// Configuration restricted to the particles in `subset` (bitmask over
    /// the first 64 indices).
    pub fn subset(&self, mask: u64) -> ParticleConfig {
        let centers = self
            .centers
            .iter()
            .enumerate()
            .take(64)
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, c)| *c)
            .collect();
        ParticleConfig {
            centers,
            ..self.clone()
        }
    }

    /// Configuration made of the listed particles, in the listed order.
    pub fn select(&self, indices: &[usize]) -> ParticleConfig {
        ParticleConfig {
            centers: indices.iter().map(|&i| self.centers[i]).collect(),
            ..self.clone()
        }
    }

    /// Translates every center by `shift` (mod the box).
    pub fn translated(&self, shift: [f64; 3]) -> ParticleConfig {
        let mut out = self.clone();
        for c in out.centers.iter_mut() {
            for a in 0..self.dim {
                c[a] += shift[a];
            }
        }
        out.wrap();
        out
    }

    /// Smallest pairwise periodic center distance, `None` with fewer than two particles.
    pub fn min_center_distance(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                let d = self.distance(&self.centers[i], &self.centers[j]);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }

    /// Checks that particles are disjoint with the recorded gap.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return validation(format!("dimension must be 2 or 3, got {}", self.dim));
        }
        if !(self.side > 2.0) {
            return validation(format!("box side too small: {}", self.side));
        }
        if let Some(d) = self.min_center_distance() {
            if d < 2.0 + self.gap - 1e-9 {
                return Err(crate::Error::Overlap(format!(
                    "center distance {d:.6} below 2 + gap = {}",
                    2.0 + self.gap
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: ParticleConfig = serde_json::from_str(s)?;
        Ok(ParticleConfig::new(c.dim, c.side, c.gap, c.seed, c.centers))
    }
}

/// Serialization view that writes only `dim` coordinates per center.
#[derive(Serialize)]
struct JsonConfig {
    dim: usize,
    #[serde(rename = "box")]
    side: f64,
    gap: f64,
    seed: u64,
    centers: Vec<Vec<f64>>,
}

impl From<&ParticleConfig> for JsonConfig {
    fn from(c: &ParticleConfig) -> Self {
        JsonConfig {
            dim: c.dim,
            side: c.side,
            gap: c.gap,
            seed: c.seed,
            centers: c.centers.iter().map(|p| p[..c.dim].to_vec()).collect(),
        }
    }
}

pub fn periodic_displacement(dim: usize, side: f64, a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    let mut d = [0.0; 3];
    for k in 0..dim {
        let mut v = b[k] - a[k];
        v -= side * (v / side).round();
        d[k] = v;
    }
    d
}

pub fn norm(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_configurations_can_be_restricted() {
        let centers: Vec<[f64; 3]> = (0..100).map(|i| [3.0 * (i % 10) as f64, 3.0 * (i / 10) as f64, 0.0]).collect();
        let c = ParticleConfig::new(2, 30.0, 0.0, 0, centers);
        assert_eq!(c.subset(u64::MAX).len(), 64);
        let pair = c.select(&[0, 99]);
        assert_eq!(pair.centers, vec![c.centers[0], c.centers[99]]);
        assert_eq!(pair.side, c.side);
    }

    #[test]
    fn json_round_trip_keeps_dimension() {
        let c = ParticleConfig::new(2, 10.0, 0.5, 7, vec![[1.0, 2.0, 0.0], [6.0, 7.5, 0.0]]);
        let s = c.to_json().unwrap();
        assert!(s.contains("\"box\""));
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["centers"][0].as_array().unwrap().len(), 2);
        assert_eq!(ParticleConfig::from_json(&s).unwrap(), c);
    }

    #[test]
    fn minimum_image_wraps() {
        let c = ParticleConfig::new(3, 10.0, 0.0, 0, vec![[0.5, 0.0, 0.0], [9.5, 0.0, 0.0]]);
        assert!((c.distance(&c.centers[0], &c.centers[1]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn phi_equals_lambda_times_ball_volume() {
        let s = EnsembleSpec::with_intensity(3, 16.0, ProcessKind::RandomSequentialAddition, 0.002, 0.0, 1);
        assert!((s.phi - 0.002 * 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((s.intensity() - 0.002).abs() < 1e-15);
    }
}
