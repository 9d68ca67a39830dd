//! Effective viscosity of rigid-particle Stokes suspensions: random
//! ensembles, a penalized spectral corrector solver, single-sphere analytic
//! solutions, tensor assembly and dilute-expansion checks.

pub mod analytic;
pub mod artifact;
pub mod dilute;
pub mod effective;
pub mod ensembles;
pub mod error;
pub mod spectral;
pub mod stats;

pub use analytic::{bg_far_kernel, cell_model, single_sphere_solution, BoundaryKind, FarKernel, RadialAnsatz};
pub use dilute::{
    bg_near_kernel, cluster_terms, einstein_fit, finite_volume_convergence, renormalized_b1, renormalized_b1_numeric,
    second_order_tensor, second_order_term, ClusterReport, ConvergenceTable, DiluteFit, NearKernel, NearKernelOptions,
    SecondOrderOptions, SecondOrderTerm,
};
pub use effective::{assemble_tensor, assemble_tensor_richardson, config_tensor, sandwich_bounds, SandwichBounds, StrainBasis, ViscosityTensor};
pub use ensembles::{
    generate, geometry_diagnostics, intensity_estimates, pair_correlation, EnsembleSpec, GeometryDiagnostics,
    IntensityReport, PairCorrelation, ParticleConfig, ProcessKind,
};
pub use error::{Error, Result};
pub use spectral::{
    dissipation, force_torque, mvp_ratio, solve_corrector, CorrectorField, GradientScheme, Mat3, SolverConfig,
};
