use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{ball_volume, unit_ball_volume, EnsembleSpec, ParticleConfig, ProcessKind};
use crate::error::{validation, Error, Result};

/// Failed darts allowed per requested particle before RSA gives up.
pub const RSA_RETRY_FACTOR: usize = 200;

/// Draws one configuration from `spec`. Deterministic given the seed.
pub fn generate(spec: &EnsembleSpec) -> Result<ParticleConfig> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = if spec.phi == 0.0 {
        Vec::new()
    } else {
        match spec.process {
            ProcessKind::CubicLattice => cubic_lattice(spec)?,
            ProcessKind::RandomSequentialAddition => rsa(spec, &mut rng)?,
            ProcessKind::MaternII => matern_ii(spec, &mut rng)?,
            ProcessKind::PoissonThinned => poisson_thinned(spec, &mut rng)?,
        }
    };
    let config = ParticleConfig::new(spec.dim, spec.side, spec.gap, spec.seed, centers);
    config.validate()?;
    Ok(config)
}

fn exclusion(spec: &EnsembleSpec) -> f64 {
    2.0 + spec.gap
}

fn uniform_point<R: Rng>(rng: &mut R, dim: usize, side: f64) -> [f64; 3] {
    let mut p = [0.0; 3];
    for v in p.iter_mut().take(dim) {
        *v = rng.random_range(0.0..side);
    }
    p
}

/// `k^dim` centers at spacing `side / k`, with `k` the per-axis count closest
/// to the requested density.
fn cubic_lattice(spec: &EnsembleSpec) -> Result<Vec<[f64; 3]>> {
    let per_axis = spec.target_count().powf(1.0 / spec.dim as f64).round().max(1.0) as usize;
    let spacing = spec.side / per_axis as f64;
    if spacing < exclusion(spec) {
        return validation(format!(
            "lattice spacing {spacing:.3} below the exclusion distance {}",
            exclusion(spec)
        ));
    }
    let offset = 0.5 * spacing;
    let mut centers = Vec::new();
    let z_count = if spec.dim == 3 { per_axis } else { 1 };
    for i in 0..per_axis {
        for j in 0..per_axis {
            for k in 0..z_count {
                let z = if spec.dim == 3 { offset + k as f64 * spacing } else { 0.0 };
                centers.push([offset + i as f64 * spacing, offset + j as f64 * spacing, z]);
            }
        }
    }
    Ok(centers)
}

fn rsa<R: Rng>(spec: &EnsembleSpec, rng: &mut R) -> Result<Vec<[f64; 3]>> {
    let target = spec.target_count().round() as usize;
    let budget = RSA_RETRY_FACTOR * target.max(1);
    let min_dist = exclusion(spec);
    let probe = ParticleConfig::empty(spec.dim, spec.side);
    let mut centers: Vec<[f64; 3]> = Vec::with_capacity(target);
    let mut failures = 0;
    while centers.len() < target {
        let p = uniform_point(rng, spec.dim, spec.side);
        if centers.iter().all(|c| probe.distance(c, &p) >= min_dist) {
            centers.push(p);
        } else {
            failures += 1;
            if failures >= budget {
                return Err(Error::Saturation {
                    placed: centers.len(),
                    target,
                    attempts: failures,
                });
            }
        }
    }
    Ok(centers)
}

/// Proposal points with uniform marks; used by both thinning rules.
fn poisson_proposals<R: Rng>(spec: &EnsembleSpec, rng: &mut R, intensity: f64) -> Result<Vec<[f64; 3]>> {
    let mean = intensity * spec.side.powi(spec.dim as i32);
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::Validation(format!("poisson mean {mean}: {e}")))?
            .sample(rng) as usize
    } else {
        0
    };
    Ok((0..count).map(|_| uniform_point(rng, spec.dim, spec.side)).collect())
}

/// Matérn type II: a proposal survives if no other proposal within the
/// exclusion distance carries a smaller mark.
///
/// The retained intensity is `(1 - exp(-lp V)) / V` with `V` the exclusion
/// ball volume; the proposal intensity `lp` is solved to hit the target.
fn matern_ii<R: Rng>(spec: &EnsembleSpec, rng: &mut R) -> Result<Vec<[f64; 3]>> {
    let v = ball_volume(spec.dim, exclusion(spec));
    let lambda = spec.phi / unit_ball_volume(spec.dim);
    if lambda * v >= 1.0 {
        return validation(format!(
            "phi {} exceeds the Matérn II saturation {:.4}",
            spec.phi,
            unit_ball_volume(spec.dim) / v
        ));
    }
    let proposal = -(1.0 - lambda * v).ln() / v;
    let points = poisson_proposals(spec, rng, proposal)?;
    let marks: Vec<f64> = points.iter().map(|_| rng.random::<f64>()).collect();
    let probe = ParticleConfig::empty(spec.dim, spec.side);
    let min_dist = exclusion(spec);
    Ok(points
        .iter()
        .enumerate()
        .filter(|&(i, p)| {
            !points
                .iter()
                .enumerate()
                .any(|(j, q)| j != i && marks[j] < marks[i] && probe.distance(p, q) < min_dist)
        })
        .map(|(_, p)| *p)
        .collect())
}

/// Poisson proposals with every point that has a neighbour within the
/// exclusion distance deleted (Matérn type I). Beyond twice the exclusion
/// distance the two-point density factorizes exactly.
fn poisson_thinned<R: Rng>(spec: &EnsembleSpec, rng: &mut R) -> Result<Vec<[f64; 3]>> {
    let v = ball_volume(spec.dim, exclusion(spec));
    let lambda = spec.phi / unit_ball_volume(spec.dim);
    // retained intensity lp exp(-lp V) peaks at lp = 1/V
    if lambda * v * std::f64::consts::E > 1.0 {
        return validation(format!("phi {} exceeds the thinned-Poisson saturation", spec.phi));
    }
    let proposal = solve_thinned_intensity(lambda, v);
    let points = poisson_proposals(spec, rng, proposal)?;
    let probe = ParticleConfig::empty(spec.dim, spec.side);
    let min_dist = exclusion(spec);
    Ok(points
        .iter()
        .enumerate()
        .filter(|&(i, p)| {
            !points
                .iter()
                .enumerate()
                .any(|(j, q)| j != i && probe.distance(p, q) < min_dist)
        })
        .map(|(_, p)| *p)
        .collect())
}

/// Smaller root of `lp exp(-lp v) = lambda`, by bisection on `[0, 1/v]`.
fn solve_thinned_intensity(lambda: f64, v: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0 / v);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * (-mid * v).exp() < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(dim: usize, side: f64, process: ProcessKind, phi: f64, gap: f64, seed: u64) -> EnsembleSpec {
        EnsembleSpec::new(dim, side, process, phi, gap, seed)
    }

    #[test]
    fn rsa_counts_follow_rounding() {
        let c = generate(&spec(3, 16.0, ProcessKind::RandomSequentialAddition, 0.01, 0.0, 1)).unwrap();
        assert_eq!(c.len(), 10);
        assert!((c.volume_fraction() - 0.01).abs() <= unit_ball_volume(3) / 4096.0);
        let c = generate(&spec(2, 32.0, ProcessKind::RandomSequentialAddition, 0.02, 0.0, 1)).unwrap();
        assert_eq!(c.len(), 7);
    }

    #[test]
    fn zero_phi_is_empty() {
        for p in [
            ProcessKind::CubicLattice,
            ProcessKind::RandomSequentialAddition,
            ProcessKind::MaternII,
            ProcessKind::PoissonThinned,
        ] {
            assert!(generate(&spec(3, 8.0, p, 0.0, 0.0, 3)).unwrap().is_empty());
        }
    }

    #[test]
    fn out_of_range_phi_is_rejected() {
        let err = generate(&spec(3, 8.0, ProcessKind::RandomSequentialAddition, 0.5, 0.0, 3)).unwrap_err();
        assert!(err.to_string().contains("phi out of range"));
        assert!(generate(&spec(3, 2.0, ProcessKind::RandomSequentialAddition, 0.01, 0.0, 3)).is_err());
    }

    #[test]
    fn rsa_saturates_with_explicit_error() {
        // huge gap makes the requested count impossible
        let err = generate(&spec(2, 10.0, ProcessKind::RandomSequentialAddition, 0.2, 4.0, 3)).unwrap_err();
        assert!(matches!(err, Error::Saturation { .. }), "{err}");
    }

    #[test]
    fn lattice_spacing_sets_intensity() {
        let c = generate(&spec(3, 16.0, ProcessKind::CubicLattice, 0.00818, 0.0, 0)).unwrap();
        // 8 per box -> spacing 8
        assert_eq!(c.len(), 8);
        assert!((c.intensity() - 8f64.powi(-3)).abs() < 1e-15);
    }

    #[test]
    fn thinned_intensity_root() {
        let v = 33.5;
        let lp = solve_thinned_intensity(0.002, v);
        assert!((lp * (-lp * v).exp() - 0.002).abs() < 1e-12);
        assert!(lp < 1.0 / v);
    }

    #[test]
    fn matern_mean_density() {
        let s = spec(2, 40.0, ProcessKind::MaternII, 0.05, 0.5, 0);
        let mut total = 0usize;
        let runs = 60;
        for k in 0..runs {
            let mut s2 = s.clone();
            s2.seed = s.config_seed(k);
            total += generate(&s2).unwrap().len();
        }
        let mean = total as f64 / runs as f64;
        let expect = s.target_count();
        // Poisson-like count fluctuations, sd ~ sqrt(expect / runs)
        assert!((mean - expect).abs() < 4.0 * (expect / runs as f64).sqrt(), "{mean} vs {expect}");
    }
}
