//! Fixtures shared by the benchmarks.

use suspvisc::{generate, EnsembleSpec, ParticleConfig, ProcessKind, SolverConfig};

/// One random-sequential-addition configuration.
pub fn rsa_config(dim: usize, side: f64, phi: f64, seed: u64) -> ParticleConfig {
    generate(&EnsembleSpec::new(dim, side, ProcessKind::RandomSequentialAddition, phi, 0.5, seed))
        .expect("valid ensemble")
}

/// Solver settings sized for quick repeated runs.
pub fn bench_solver(n: usize) -> SolverConfig {
    SolverConfig::new(n, 1e3).with_tol(1e-6)
}

/// Unit trace-free shear in the first coordinate plane.
pub fn shear() -> suspvisc::Mat3 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [[0.0, r, 0.0], [r, 0.0, 0.0], [0.0, 0.0, 0.0]]
}
