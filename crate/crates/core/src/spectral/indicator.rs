use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::ensembles::ParticleConfig;

/// Subdivision depth of the overlap-fraction recursion.
const OVERLAP_DEPTH: u32 = 5;

/// How the particle indicator is sampled on strain points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorMode {
    /// One if the sample point lies inside a particle.
    Binary,
    /// Volume fraction of the voxel covered by particles.
    Fraction,
}

/// Rule turning a voxel's particle fraction `f` into a viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ViscosityBlend {
    /// Series average `1 / ((1 - f) + f / (1 + theta))`: a cut voxel stays
    /// soft unless it is almost entirely covered.
    #[default]
    Harmonic,
    /// Parallel average `1 + theta f`.
    Linear,
}

/// Viscosity `mu(chi)` on the strain points.
pub fn blended_viscosity(chi: &[f64], theta: f64, blend: ViscosityBlend) -> Vec<f64> {
    chi.iter()
        .map(|&f| match blend {
            ViscosityBlend::Harmonic => 1.0 / ((1.0 - f) + f / (1.0 + theta)),
            ViscosityBlend::Linear => 1.0 + theta * f,
        })
        .collect()
}

/// Volume fraction of the axis-aligned cube with center `c` (relative to a
/// unit ball at the origin) and half-width `w` that lies inside the ball.
///
/// Cubes entirely inside or outside are resolved exactly; cut cubes are
/// bisected recursively and classified by their centers at the last level.
pub fn overlap_fraction(dim: usize, c: [f64; 3], w: f64) -> f64 {
    overlap_rec(dim, c, w, OVERLAP_DEPTH)
}

fn overlap_rec(dim: usize, c: [f64; 3], w: f64, depth: u32) -> f64 {
    let mut near = 0.0;
    let mut far = 0.0;
    for a in 0..dim {
        let x = c[a].abs();
        near += (x - w).max(0.0).powi(2);
        far += (x + w).powi(2);
    }
    if far <= 1.0 {
        return 1.0;
    }
    if near >= 1.0 {
        return 0.0;
    }
    if depth == 0 {
        let r2: f64 = c[..dim].iter().map(|v| v * v).sum();
        return if r2 < 1.0 { 1.0 } else { 0.0 };
    }
    let h = 0.5 * w;
    let children = 1usize << dim;
    let mut sum = 0.0;
    for q in 0..children {
        let mut cc = c;
        for (a, v) in cc.iter_mut().enumerate().take(dim) {
            *v += if q >> a & 1 == 1 { h } else { -h };
        }
        sum += overlap_rec(dim, cc, h, depth - 1);
    }
    sum / children as f64
}

/// Particle indicator on the strain sample points of `grid`.
pub fn particle_indicator(config: &ParticleConfig, grid: &Grid, mode: IndicatorMode) -> Vec<f64> {
    let mut chi = vec![0.0; grid.len()];
    let h = grid.spacing();
    let off = grid.strain_offset();
    let reach = (1.0 / h).ceil() as i64 + 1;
    let n = grid.n as i64;
    let dim = grid.dim;
    for center in &config.centers {
        let mut base = [0i64; 3];
        for a in 0..dim {
            base[a] = ((center[a] - off) / h).round() as i64;
        }
        let span = |a: usize| if a < dim { -reach..=reach } else { 0..=0 };
        for i in span(0) {
            for j in span(1) {
                for k in span(2) {
                    let m = [base[0] + i, base[1] + j, base[2] + k];
                    let mut rel = [0.0; 3];
                    let mut idx = [0usize; 3];
                    for a in 0..dim {
                        rel[a] = (m[a] as f64) * h + off - center[a];
                        idx[a] = m[a].rem_euclid(n) as usize;
                    }
                    let v = match mode {
                        IndicatorMode::Binary => {
                            let r2: f64 = rel[..dim].iter().map(|v| v * v).sum();
                            if r2 < 1.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        IndicatorMode::Fraction => overlap_fraction(dim, rel, 0.5 * h),
                    };
                    if v > 0.0 {
                        let flat = grid.ravel(idx);
                        chi[flat] = (chi[flat] + v).min(1.0);
                    }
                }
            }
        }
    }
    chi
}

/// Index of the particle containing each velocity node, if any.
pub fn node_owner(config: &ParticleConfig, grid: &Grid) -> Vec<Option<usize>> {
    let mut owner = vec![None; grid.len()];
    let h = grid.spacing();
    let reach = (1.0 / h).ceil() as i64 + 1;
    let n = grid.n as i64;
    let dim = grid.dim;
    for (p, center) in config.centers.iter().enumerate() {
        let mut base = [0i64; 3];
        for a in 0..dim {
            base[a] = (center[a] / h).round() as i64;
        }
        let span = |a: usize| if a < dim { -reach..=reach } else { 0..=0 };
        for i in span(0) {
            for j in span(1) {
                for k in span(2) {
                    let m = [base[0] + i, base[1] + j, base[2] + k];
                    let mut r2 = 0.0;
                    let mut idx = [0usize; 3];
                    for a in 0..dim {
                        r2 += ((m[a] as f64) * h - center[a]).powi(2);
                        idx[a] = m[a].rem_euclid(n) as usize;
                    }
                    if r2 < 1.0 {
                        owner[grid.ravel(idx)] = Some(p);
                    }
                }
            }
        }
    }
    owner
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::grid::GradientScheme;

    #[test]
    fn fraction_sums_to_ball_volume() {
        for (dim, vol) in [(2, std::f64::consts::PI), (3, 4.0 * std::f64::consts::PI / 3.0)] {
            let g = Grid::new(dim, 32, 4.0, GradientScheme::Rotated);
            let c = ParticleConfig::new(dim, 4.0, 0.0, 0, vec![[1.93, 2.11, 2.02]]);
            let chi = particle_indicator(&c, &g, IndicatorMode::Fraction);
            let total: f64 = chi.iter().sum::<f64>() * g.voxel_volume();
            assert!((total - vol).abs() < 2e-3 * vol, "d={dim}: {total} vs {vol}");
            assert!(chi.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn indicator_wraps_across_the_boundary() {
        let g = Grid::new(2, 16, 4.0, GradientScheme::Rotated);
        let c = ParticleConfig::new(2, 4.0, 0.0, 0, vec![[0.1, 3.9, 0.0]]);
        let chi = particle_indicator(&c, &g, IndicatorMode::Fraction);
        let total: f64 = chi.iter().sum::<f64>() * g.voxel_volume();
        assert!((total - std::f64::consts::PI).abs() < 1e-2);
    }

    #[test]
    fn blends_agree_on_pure_phases() {
        for b in [ViscosityBlend::Harmonic, ViscosityBlend::Linear] {
            let mu = blended_viscosity(&[0.0, 1.0], 1e3, b);
            assert_eq!(mu[0], 1.0);
            assert!((mu[1] - 1001.0).abs() < 1e-9);
        }
        let h = blended_viscosity(&[0.5], 1e3, ViscosityBlend::Harmonic)[0];
        let l = blended_viscosity(&[0.5], 1e3, ViscosityBlend::Linear)[0];
        assert!(h < 2.0 && l > 500.0);
    }

    #[test]
    fn exact_cases() {
        assert_eq!(overlap_fraction(3, [0.0; 3], 0.1), 1.0);
        assert_eq!(overlap_fraction(3, [3.0, 0.0, 0.0], 0.1), 0.0);
        // half-space cut through the middle of a tiny cube on the sphere
        let f = overlap_fraction(3, [1.0, 0.0, 0.0], 1e-3);
        assert!((f - 0.5).abs() < 0.05);
    }
}
