use std::hash::{Hash, Hasher};

use rustfft::num_complex::Complex64 as C;

use super::cg::pcg;
use super::discretization::Discretization;
use super::grid::Grid;
use super::indicator::{blended_viscosity, node_owner, particle_indicator, IndicatorMode};
use super::strain::{strain_dim_check, Mat3, SymField};
use super::SolverConfig;
use crate::ensembles::ParticleConfig;
use crate::error::{validation, Result};
use crate::stats::CompensatedSum;

/// Resolution below which a solve logs an under-resolution warning.
const MIN_VOXELS_PER_DIAMETER: f64 = 8.0;

/// Indicator value from which a voxel counts as fully inside a particle.
const FULL_VOXEL: f64 = 1.0 - 1e-12;

/// A solved penalized corrector problem.
#[derive(Debug, Clone)]
pub struct CorrectorField {
    pub grid: Grid,
    pub theta: f64,
    /// Fingerprint of the particle configuration the field was solved on.
    pub config_digest: u64,
    /// Imposed strain `E`.
    pub strain: Mat3,
    /// `D(psi)` on the strain points.
    pub strain_field: SymField,
    /// Fourier coefficients of the velocity, component-major.
    pub velocity_hat: Vec<C>,
    /// Particle indicator on the strain points.
    pub indicator: Vec<f64>,
    /// Viscosity used by the solve, on the strain points.
    pub mu: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    /// Average of `|D(psi) + E|^2` over voxels lying entirely inside particles.
    pub rigidity_residual: f64,
    /// Relative L2 norm of the discrete velocity divergence.
    pub divergence: f64,
    /// Node average of `mask |u - target|^2`, clamped solves only.
    pub clamp_mismatch: Option<f64>,
}

impl CorrectorField {
    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Viscosity on the strain points.
    pub fn viscosity(&self) -> Vec<f64> {
        self.mu.clone()
    }

    /// Real-space velocity on the velocity nodes.
    pub fn velocity(&self) -> Vec<Vec<f64>> {
        Discretization::new(self.grid).velocity_field(&self.velocity_hat)
    }
}

/// Stable fingerprint of a configuration's geometry.
pub fn config_digest(config: &ParticleConfig) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    config.dim.hash(&mut h);
    config.side.to_bits().hash(&mut h);
    for c in &config.centers {
        for v in c {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

/// Grid, indicator and viscosity of one configuration, reusable across
/// strains.
pub struct CorrectorSolver {
    disc: Discretization,
    chi: Vec<f64>,
    mu: Vec<f64>,
    sc: SolverConfig,
    digest: u64,
    particles: usize,
}

impl CorrectorSolver {
    pub fn new(config: &ParticleConfig, sc: &SolverConfig) -> Result<Self> {
        sc.validate()?;
        config.validate()?;
        let grid = sc.grid(config.dim, config.side);
        let per_diameter = 2.0 / grid.spacing();
        if per_diameter < MIN_VOXELS_PER_DIAMETER && !config.is_empty() {
            log::warn!("only {per_diameter:.1} voxels per particle diameter");
        }
        let mode = if sc.smoothing {
            IndicatorMode::Fraction
        } else {
            IndicatorMode::Binary
        };
        let chi = particle_indicator(config, &grid, mode);
        let mu = blended_viscosity(&chi, sc.theta, sc.blend);
        Ok(Self {
            disc: Discretization::new(grid),
            chi,
            mu,
            sc: *sc,
            digest: config_digest(config),
            particles: config.len(),
        })
    }

    pub fn grid(&self) -> &Grid {
        self.disc.grid()
    }

    pub fn discretization(&mut self) -> &mut Discretization {
        &mut self.disc
    }

    /// Minimizes the voxel average of `mu |D(psi) + E|^2`.
    pub fn solve(&mut self, e: &Mat3) -> Result<CorrectorField> {
        let dim = self.disc.grid().dim;
        strain_dim_check(dim, e)?;
        let len = self.disc.vector_len();
        let mut x = vec![C::default(); len];
        let (iterations, residual, history) = if self.particles == 0 {
            (0, 0.0, Vec::new())
        } else {
            let mut b = vec![C::default(); len];
            self.disc.viscous(&self.mu, None, Some(e), &mut b);
            b.iter_mut().for_each(|v| *v = -*v);
            self.disc.project(&mut b, false);
            let pinv = self.stokes_preconditioner(0.0);
            let disc = &mut self.disc;
            let mu = &self.mu;
            let out = pcg(
                |p, o| {
                    disc.viscous(mu, Some(p), None, o);
                    disc.project(o, false);
                },
                |r, z| apply_diag(&pinv, r, z),
                &b,
                &mut x,
                self.sc.tol,
                self.sc.max_iter,
            )?;
            (out.iterations, out.residual, out.history)
        };
        Ok(self.finish(e, x, iterations, residual, history, None))
    }

    /// As [`CorrectorSolver::solve`] with `kappa * mask |u - target|^2`
    /// added on the velocity nodes. Mean and null modes are unknowns too.
    pub fn solve_clamped(&mut self, clamp: &ClampSpec, e: &Mat3) -> Result<CorrectorField> {
        let dim = self.disc.grid().dim;
        strain_dim_check(dim, e)?;
        let glen = self.disc.len();
        clamp.validate(dim, glen)?;
        let kappa = self.sc.kappa;
        if !(kappa > 0.0) {
            return validation("clamped solve needs a positive clamp strength");
        }
        let m: Vec<f64> = clamp.mask.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let frac = m.iter().sum::<f64>() / glen as f64;
        let len = self.disc.vector_len();
        let mut b = vec![C::default(); len];
        self.disc.viscous(&self.mu, None, Some(e), &mut b);
        b.iter_mut().for_each(|v| *v = -*v);
        let weighted: Vec<Vec<f64>> = clamp
            .target
            .iter()
            .map(|t| t.iter().zip(&m).map(|(a, w)| kappa * a * w).collect())
            .collect();
        let refs: Vec<&[f64]> = weighted.iter().map(|v| v.as_slice()).collect();
        let tb = self.disc.to_spectral(&refs);
        for (bi, ti) in b.iter_mut().zip(&tb) {
            *bi += ti;
        }
        self.disc.project(&mut b, true);
        let pinv = self.stokes_preconditioner(kappa * frac);
        let mut x = vec![C::default(); len];
        let disc = &mut self.disc;
        let mu = &self.mu;
        let out = pcg(
            |p, o| {
                disc.viscous(mu, Some(p), None, o);
                let u = disc.to_real(p, dim);
                let masked: Vec<Vec<f64>> = u
                    .iter()
                    .map(|c| c.iter().zip(&m).map(|(a, w)| kappa * a * w).collect())
                    .collect();
                let refs: Vec<&[f64]> = masked.iter().map(|v| v.as_slice()).collect();
                let extra = disc.to_spectral(&refs);
                for (oi, ei) in o.iter_mut().zip(&extra) {
                    *oi += ei;
                }
                disc.project(o, true);
            },
            |r, z| apply_diag(&pinv, r, z),
            &b,
            &mut x,
            self.sc.tol,
            self.sc.max_iter,
        )?;
        let u = self.disc.to_real(&x, dim);
        let mut mismatch = CompensatedSum::new();
        for k in 0..glen {
            if clamp.mask[k] {
                for c in 0..dim {
                    mismatch.add((u[c][k] - clamp.target[c][k]).powi(2));
                }
            }
        }
        let mismatch = mismatch.value() / glen as f64;
        Ok(self.finish(e, x, out.iterations, out.residual, out.history, Some(mismatch)))
    }

    /// Velocity driven by the body force `force` (components on the velocity
    /// nodes); minimizes `avg mu |D u|^2 - avg f . u`.
    pub fn solve_forced(&mut self, force: &[Vec<f64>]) -> Result<VelocityField> {
        let dim = self.disc.grid().dim;
        let glen = self.disc.len();
        if force.len() != dim || force.iter().any(|f| f.len() != glen) {
            return validation("force field has the wrong shape");
        }
        let mut scale = 0.0f64;
        for f in force {
            if f.iter().any(|v| !v.is_finite()) {
                return validation("force field has non-finite values");
            }
            let mean = crate::stats::compensated_sum(f.iter().copied()) / glen as f64;
            let rms = (f.iter().map(|v| v * v).sum::<f64>() / glen as f64).sqrt();
            scale = scale.max(rms);
            if mean.abs() > 1e-10 * rms.max(f64::MIN_POSITIVE) {
                return validation(format!("body force has nonzero mean {mean:e}"));
            }
        }
        let len = self.disc.vector_len();
        let mut x = vec![C::default(); len];
        let (iterations, residual) = if scale == 0.0 {
            (0, 0.0)
        } else {
            let refs: Vec<&[f64]> = force.iter().map(|v| v.as_slice()).collect();
            let mut b = self.disc.to_spectral(&refs);
            b.iter_mut().for_each(|v| *v *= 0.5);
            self.disc.project(&mut b, false);
            let pinv = self.stokes_preconditioner(0.0);
            let disc = &mut self.disc;
            let mu = &self.mu;
            let out = pcg(
                |p, o| {
                    disc.viscous(mu, Some(p), None, o);
                    disc.project(o, false);
                },
                |r, z| apply_diag(&pinv, r, z),
                &b,
                &mut x,
                self.sc.tol,
                self.sc.max_iter,
            )?;
            (out.iterations, out.residual)
        };
        let velocity = self.disc.velocity_field(&x);
        let grid = *self.disc.grid();
        Ok(VelocityField {
            grid,
            velocity,
            iterations,
            residual,
        })
    }

    fn stokes_preconditioner(&self, mass: f64) -> Vec<f64> {
        (0..self.disc.len())
            .map(|k| {
                let a = 0.5 * self.disc.s2(k) + mass;
                if a > 0.0 {
                    1.0 / a
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn finish(
        &mut self,
        e: &Mat3,
        x: Vec<C>,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
        clamp_mismatch: Option<f64>,
    ) -> CorrectorField {
        let grid = *self.disc.grid();
        let strain_field = self.disc.strain_field(&x);
        let mut rig = CompensatedSum::new();
        let mut weight = CompensatedSum::new();
        for k in 0..grid.len() {
            if self.chi[k] >= FULL_VOXEL {
                rig.add(strain_field.shifted_product(e, &strain_field, e, k));
                weight.add(1.0);
            }
        }
        let rigidity_residual = if weight.value() > 0.0 {
            rig.value() / weight.value()
        } else {
            0.0
        };
        let div = self.disc.divergence_hat(&x);
        let div_norm: f64 = div.iter().map(|v| v.norm_sqr()).sum();
        let glen = grid.len();
        let mut grad_norm = 0.0;
        for k in 0..glen {
            for c in 0..grid.dim {
                grad_norm += self.disc.s2(k) * x[c * glen + k].norm_sqr();
            }
        }
        let divergence = if grad_norm > 0.0 { (div_norm / grad_norm).sqrt() } else { 0.0 };
        CorrectorField {
            grid,
            theta: self.sc.theta,
            config_digest: self.digest,
            strain: *e,
            strain_field,
            velocity_hat: x,
            indicator: self.chi.clone(),
            mu: self.mu.clone(),
            residual,
            iterations,
            history,
            rigidity_residual,
            divergence,
            clamp_mismatch,
        }
    }
}

fn apply_diag(pinv: &[f64], r: &[C], z: &mut [C]) {
    let len = pinv.len();
    for (zc, rc) in z.chunks_mut(len).zip(r.chunks(len)) {
        for ((zi, ri), p) in zc.iter_mut().zip(rc).zip(pinv) {
            *zi = ri * *p;
        }
    }
}

/// Clamp region and target velocity on the velocity nodes.
#[derive(Debug, Clone)]
pub struct ClampSpec {
    pub mask: Vec<bool>,
    /// `dim` components, each of grid length.
    pub target: Vec<Vec<f64>>,
}

impl ClampSpec {
    fn validate(&self, dim: usize, len: usize) -> Result<()> {
        if self.mask.len() != len || self.target.len() != dim || self.target.iter().any(|t| t.len() != len) {
            return validation("clamp mask or target has the wrong shape");
        }
        if self.target.iter().flatten().any(|v| !v.is_finite()) {
            return validation("clamp target has non-finite values");
        }
        Ok(())
    }
}

/// Output of [`solve_forced`].
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub grid: Grid,
    /// `dim` components on the velocity nodes.
    pub velocity: Vec<Vec<f64>>,
    pub iterations: usize,
    pub residual: f64,
}

impl VelocityField {
    /// Node average of the velocity.
    pub fn mean(&self) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (c, v) in self.velocity.iter().enumerate() {
            m[c] = crate::stats::compensated_sum(v.iter().copied()) / v.len() as f64;
        }
        m
    }

    /// Average velocity over the nodes inside each particle.
    pub fn particle_velocities(&self, config: &ParticleConfig) -> Vec<[f64; 3]> {
        let owner = node_owner(config, &self.grid);
        let mut sums = vec![[0.0; 3]; config.len()];
        let mut counts = vec![0usize; config.len()];
        for (k, o) in owner.iter().enumerate() {
            if let Some(p) = *o {
                counts[p] += 1;
                for c in 0..self.grid.dim {
                    sums[p][c] += self.velocity[c][k];
                }
            }
        }
        sums.iter()
            .zip(&counts)
            .map(|(s, &n)| {
                let n = n.max(1) as f64;
                [s[0] / n, s[1] / n, s[2] / n]
            })
            .collect()
    }
}

pub fn solve_corrector(config: &ParticleConfig, e: &Mat3, sc: &SolverConfig) -> Result<CorrectorField> {
    CorrectorSolver::new(config, sc)?.solve(e)
}

pub fn solve_clamped(config: &ParticleConfig, clamp: &ClampSpec, e: &Mat3, sc: &SolverConfig) -> Result<CorrectorField> {
    CorrectorSolver::new(config, sc)?.solve_clamped(clamp, e)
}

pub fn solve_forced(config: &ParticleConfig, force: &[Vec<f64>], sc: &SolverConfig) -> Result<VelocityField> {
    CorrectorSolver::new(config, sc)?.solve_forced(force)
}

fn check_field(field: &CorrectorField, config: &ParticleConfig, theta: f64) -> Result<()> {
    if field.config_digest != config_digest(config) {
        return validation("field was solved on a different configuration");
    }
    if field.theta != theta {
        return validation(format!("field solved at theta {} but evaluated at {theta}", field.theta));
    }
    Ok(())
}

/// Voxel average of `mu |D(psi) + E|^2`.
pub fn dissipation(field: &CorrectorField, config: &ParticleConfig, theta: f64) -> Result<f64> {
    check_field(field, config, theta)?;
    Ok(cross_unchecked(field, field))
}

/// Voxel average of `mu (D(psi_1) + E_1) : (D(psi_2) + E_2)`.
pub fn cross_dissipation(a: &CorrectorField, b: &CorrectorField, config: &ParticleConfig, theta: f64) -> Result<f64> {
    check_field(a, config, theta)?;
    check_field(b, config, theta)?;
    if a.grid != b.grid {
        return validation("fields live on different grids");
    }
    Ok(cross_unchecked(a, b))
}

fn cross_unchecked(a: &CorrectorField, b: &CorrectorField) -> f64 {
    let len = a.grid.len();
    let mut s = CompensatedSum::new();
    for k in 0..len {
        let mu = a.mu[k];
        s.add(mu * a.strain_field.shifted_product(&a.strain, &b.strain_field, &b.strain, k));
    }
    s.value() / len as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn shear2() -> Mat3 {
        [[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0; 3]]
    }

    fn disk() -> ParticleConfig {
        ParticleConfig::new(2, 8.0, 0.0, 0, vec![[3.9, 4.2, 0.0]])
    }

    #[test]
    fn empty_box_has_zero_corrector() {
        let c = ParticleConfig::empty(2, 8.0);
        let sc = SolverConfig::new(32, 100.0);
        let f = solve_corrector(&c, &shear2(), &sc).unwrap();
        assert_eq!(f.iterations, 0);
        assert!(f.velocity_hat.iter().all(|v| v.norm() == 0.0));
        assert!((dissipation(&f, &c, 100.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dissipation_grows_with_theta_and_stays_above_fluid_value() {
        let c = disk();
        let mut last = 2.0;
        let mut rig = Vec::new();
        for theta in [10.0, 100.0, 1000.0] {
            let sc = SolverConfig::new(32, theta).with_tol(1e-9);
            let f = solve_corrector(&c, &shear2(), &sc).unwrap();
            let d = dissipation(&f, &c, theta).unwrap();
            assert!(d >= last * (1.0 - 1e-9), "theta {theta}: {d} < {last}");
            assert!(f.divergence < 1e-10);
            let mean = f.strain_field.mean();
            assert!(mean.iter().flatten().all(|v| v.abs() < 1e-12));
            last = d;
            rig.push(f.rigidity_residual);
        }
        assert!(rig[1] * 5.0 <= rig[0] && rig[2] * 5.0 <= rig[1], "{rig:?}");
    }

    #[test]
    fn cross_dissipation_is_symmetric_and_checks_inputs() {
        let c = disk();
        let sc = SolverConfig::new(32, 100.0).with_tol(1e-9);
        let mut s = CorrectorSolver::new(&c, &sc).unwrap();
        let a = s.solve(&shear2()).unwrap();
        let b = s.solve(&[[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0; 3]]).unwrap();
        let ab = cross_dissipation(&a, &b, &c, 100.0).unwrap();
        let ba = cross_dissipation(&b, &a, &c, 100.0).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(dissipation(&a, &c, 10.0).is_err());
        let moved = c.translated([0.5, 0.0, 0.0]);
        assert!(dissipation(&a, &moved, 100.0).is_err());
    }

    #[test]
    fn non_trace_free_strain_is_rejected() {
        let sc = SolverConfig::new(32, 100.0);
        let e = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0; 3]];
        assert!(solve_corrector(&disk(), &e, &sc).is_err());
    }

    #[test]
    fn forced_single_mode_matches_closed_form() {
        let c = ParticleConfig::empty(2, 8.0);
        let sc = SolverConfig::new(32, 100.0).with_tol(1e-10);
        let g = sc.grid(2, 8.0);
        let q = 2.0 * PI / 8.0;
        let mut f = vec![vec![0.0; g.len()]; 2];
        for k in 0..g.len() {
            let x = g.node_position(k);
            f[0][k] = (q * x[1]).sin();
        }
        let v = solve_forced(&c, &f, &sc).unwrap();
        // -Laplace u = f with a second-order discrete symbol
        for k in 0..g.len() {
            let want = f[0][k] / (q * q);
            assert!((v.velocity[0][k] - want).abs() < 1e-2 * want.abs().max(1.0) / (q * q), "{k}");
            assert!(v.velocity[1][k].abs() < 1e-9);
        }
        assert!(v.mean()[0].abs() < 1e-12);
    }

    #[test]
    fn forced_with_nonzero_mean_is_rejected() {
        let c = ParticleConfig::empty(2, 8.0);
        let sc = SolverConfig::new(32, 100.0);
        let g = sc.grid(2, 8.0);
        let f = vec![vec![1.0; g.len()], vec![0.0; g.len()]];
        assert!(solve_forced(&c, &f, &sc).is_err());
    }

    #[test]
    fn clamp_mismatch_falls_with_strength() {
        let c = disk();
        let g = SolverConfig::new(32, 100.0).grid(2, 8.0);
        let mask: Vec<bool> = (0..g.len())
            .map(|k| {
                let x = g.node_position(k);
                let d = c.distance(&x, &[4.0, 4.0, 0.0]);
                d > 3.0
            })
            .collect();
        let target: Vec<Vec<f64>> = (0..2)
            .map(|a| {
                (0..g.len())
                    .map(|k| {
                        let x = g.node_position(k);
                        if a == 0 {
                            (2.0 * PI * x[1] / 8.0).cos()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let clamp = ClampSpec { mask, target };
        let mut last = f64::INFINITY;
        for kappa in [1.0, 10.0, 100.0] {
            let sc = SolverConfig::new(32, 100.0).with_kappa(kappa).with_tol(1e-8);
            let f = solve_clamped(&c, &clamp, &[[0.0; 3]; 3], &sc).unwrap();
            let m = f.clamp_mismatch.unwrap();
            assert!(m < last, "kappa {kappa}: {m} >= {last}");
            last = m;
        }
        let sc = SolverConfig::new(32, 100.0);
        assert!(solve_clamped(&c, &clamp, &[[0.0; 3]; 3], &sc).is_err());
    }
}
