use serde::Serialize;

use super::corrector::{config_digest, CorrectorField};
use super::discretization::Discretization;
use super::grid::sym_components;
use crate::ensembles::ParticleConfig;
use crate::error::{validation, Result};
use crate::stats::CompensatedSum;

/// Net hydrodynamic load on one particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParticleLoad {
    pub force: [f64; 3],
    /// Torque vector in 3D; the scalar torque sits in component 2 in 2D.
    pub torque: [f64; 3],
    /// Outer radius of the cutoff shell that was used.
    pub shell_outer: f64,
}

/// Discrete stress `sigma = 2 mu (D psi + E) - p Id` of a solved field on the
/// strain points, ready to be paired with test-function strains.
pub struct StressField {
    disc: Discretization,
    /// Components in `sym_components` order, off-diagonals carrying their
    /// Frobenius weight.
    comps: Vec<Vec<f64>>,
    indicator: Vec<f64>,
}

impl StressField {
    pub fn new(field: &CorrectorField) -> Self {
        let grid = field.grid;
        let dim = grid.dim;
        let len = grid.len();
        let mut disc = Discretization::new(grid);
        let mu = &field.mu;
        let mut q = vec![Default::default(); disc.vector_len()];
        disc.viscous(mu, Some(&field.velocity_hat), Some(&field.strain), &mut q);
        let pressure = disc.pressure_from_divergence(&q);
        let sym = sym_components(dim);
        let mut comps: Vec<Vec<f64>> = vec![vec![0.0; len]; sym.len()];
        for (c, &(i, j, w)) in sym.iter().enumerate() {
            let e = field.strain[i][j];
            for k in 0..len {
                let mut s = 2.0 * mu[k] * (field.strain_field.comps[c][k] + e);
                if i == j {
                    s -= pressure[k];
                }
                comps[c][k] = w * s;
            }
        }
        Self {
            disc,
            comps,
            indicator: field.indicator.clone(),
        }
    }

    /// `-sum_k weight_k sigma_k : D(v)_k h^d` for a velocity `v` given on the
    /// nodes; `fluid_only` weights each voxel by its fluid fraction.
    ///
    /// With `v` equal to `w` on a particle and supported away from the
    /// others, this is the traction pairing `int_{dB} w . sigma nu`.
    pub fn pair(&mut self, v: &[Vec<f64>], fluid_only: bool) -> f64 {
        let grid = *self.disc.grid();
        let refs: Vec<&[f64]> = v.iter().map(|c| c.as_slice()).collect();
        let hat = self.disc.to_spectral(&refs);
        let dv = self.disc.strain_field(&hat);
        let mut s = CompensatedSum::new();
        for c in 0..self.comps.len() {
            for k in 0..grid.len() {
                let w = if fluid_only { 1.0 - self.indicator[k] } else { 1.0 };
                s.add(w * self.comps[c][k] * dv.comps[c][k]);
            }
        }
        -s.value() * grid.voxel_volume()
    }
}

/// Force and torque on every particle from the volumetric weak form.
///
/// With a cutoff `phi` equal to one on the particle and decaying linearly
/// across a one-voxel shell, the load in direction `v` (a translation or a
/// rotation, times `phi`) is `-sum sigma : grad v` with the discrete stress
/// `sigma = 2 mu (D psi + E) - p I`. If neighbouring shells would overlap the
/// shell is moved to the particle surface.
pub fn force_torque(field: &CorrectorField, config: &ParticleConfig) -> Result<Vec<ParticleLoad>> {
    if field.config_digest != config_digest(config) {
        return validation("field was solved on a different configuration");
    }
    if config.is_empty() {
        return Ok(Vec::new());
    }
    let grid = field.grid;
    let dim = grid.dim;
    let h = grid.spacing();
    let len = grid.len();
    let mut stress = StressField::new(field);

    let mut inner = 1.0 + h;
    let mut outer = 1.0 + 2.0 * h;
    if let Some(dmin) = config.min_center_distance() {
        if dmin < 2.0 * outer {
            log::warn!("evaluation shells overlap at center distance {dmin:.3}; using a tighter shell");
            inner = 1.0;
            outer = (1.0 + h).min(0.5 * dmin);
        }
    }

    let mut loads = Vec::with_capacity(config.len());
    for center in &config.centers {
        let mut phi = vec![0.0; len];
        let mut rel = vec![[0.0; 3]; len];
        for k in 0..len {
            let x = grid.node_position(k);
            let r = config.displacement(center, &x);
            let dist = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
            phi[k] = ((outer - dist) / (outer - inner)).clamp(0.0, 1.0);
            rel[k] = r;
        }
        let mut force = [0.0; 3];
        for (a, f) in force.iter_mut().enumerate().take(dim) {
            let mut v = vec![vec![0.0; len]; dim];
            v[a].copy_from_slice(&phi);
            *f = stress.pair(&v, false);
        }
        let mut torque = [0.0; 3];
        let axes: Vec<usize> = if dim == 3 { vec![0, 1, 2] } else { vec![2] };
        for &a in &axes {
            // v = (e_a x r) phi
            let mut v = vec![vec![0.0; len]; dim];
            for k in 0..len {
                let r = rel[k];
                let w = match a {
                    0 => [0.0, -r[2], r[1]],
                    1 => [r[2], 0.0, -r[0]],
                    _ => [-r[1], r[0], 0.0],
                };
                for c in 0..dim {
                    v[c][k] = w[c] * phi[k];
                }
            }
            torque[a] = stress.pair(&v, false);
        }
        loads.push(ParticleLoad {
            force,
            torque,
            shell_outer: outer,
        });
    }
    Ok(loads)
}
