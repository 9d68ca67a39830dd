//! Periodic variable-viscosity Stokes solver on a uniform grid.
//!
//! Rigid particles are represented as droplets of viscosity `1 + theta`.
//! Unknown velocities are kept in Fourier space and restricted to the
//! discretely divergence-free subspace; the penalized energy is minimized by
//! conjugate gradients preconditioned with the constant-viscosity Green
//! operator.

mod cg;
mod corrector;
mod discretization;
mod export;
pub mod fft;
mod forces;
mod green;
pub mod grid;
mod indicator;
mod mvp;
mod strain;

pub use corrector::{config_digest, CorrectorSolver, 
    cross_dissipation, dissipation, solve_clamped, solve_corrector, solve_forced, ClampSpec, CorrectorField,
    VelocityField,
};
pub use discretization::Discretization;
pub use export::{write_field, write_solver_log, FieldSidecar};
pub use forces::{force_torque, ParticleLoad, StressField};
pub use green::green_apply;
pub use grid::{sym_components, GradientScheme, Grid};
pub use indicator::{blended_viscosity, overlap_fraction, particle_indicator, IndicatorMode, ViscosityBlend};
pub use mvp::{mvp_ratio, random_boundary_data, BoundaryData, BoundaryMode, MvpReport};
pub use strain::{frobenius, strain_dim_check, trace, Mat3, SymField};

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

/// Smallest accepted grid resolution per axis.
pub const MIN_RESOLUTION: usize = 16;

/// Numerical parameters of a penalized solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Voxels per box side.
    pub n: usize,
    /// Viscosity contrast of the particle droplets.
    pub theta: f64,
    /// Clamp strength for [`solve_clamped`].
    pub kappa: f64,
    /// Relative residual at which conjugate gradients stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Use voxel overlap fractions instead of center sampling.
    pub smoothing: bool,
    /// How overlap fractions enter the viscosity when `smoothing` is on.
    #[serde(default)]
    pub blend: ViscosityBlend,
    pub scheme: GradientScheme,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n: 64,
            theta: 1e3,
            kappa: 0.0,
            tol: 1e-6,
            max_iter: 5000,
            smoothing: true,
            blend: ViscosityBlend::Harmonic,
            scheme: GradientScheme::Rotated,
        }
    }
}

impl SolverConfig {
    pub fn new(n: usize, theta: f64) -> Self {
        Self {
            n,
            theta,
            ..Self::default()
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_smoothing(mut self, on: bool) -> Self {
        self.smoothing = on;
        self
    }

    pub fn with_blend(mut self, blend: ViscosityBlend) -> Self {
        self.blend = blend;
        self
    }

    pub fn with_scheme(mut self, scheme: GradientScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_RESOLUTION {
            return validation(format!("grid resolution {} below minimum {MIN_RESOLUTION}", self.n));
        }
        if !(10.0..=1e6).contains(&self.theta) {
            return validation(format!("theta {} outside [10, 1e6]", self.theta));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-3) {
            return validation(format!("tolerance {} outside (0, 1e-3]", self.tol));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return validation(format!("clamp strength {} must be non-negative", self.kappa));
        }
        if self.max_iter == 0 {
            return validation("max_iter must be positive");
        }
        Ok(())
    }

    pub fn grid(&self, dim: usize, side: f64) -> Grid {
        Grid::new(dim, self.n, side, self.scheme)
    }
}
