use serde::{Deserialize, Serialize};

use super::StrainBasis;
use crate::analytic::{cell_model, BoundaryKind};
use crate::ensembles::{geometry_diagnostics, unit_ball_volume, ParticleConfig};
use crate::error::{validation, Error, Result};
use crate::spectral::frobenius;

/// Cell-model estimates of `E : B E` for each basis strain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichBounds {
    /// Clamped cells on the Voronoi inradii: an upper bound.
    pub upper: Vec<f64>,
    /// Traction-free cells of equal volume share: an estimate, not a bound.
    pub lower_estimate: Vec<f64>,
    pub inradii: Vec<f64>,
    pub share_radius: f64,
}

/// Upper bound and lower estimate of the dissipation of `config`.
///
/// The upper bound places a clamped-cell disturbance in the ball of each
/// particle's Voronoi inradius (these balls are disjoint) and the linear
/// flow elsewhere. The lower estimate uses traction-free cells whose volume
/// is the box volume shared equally between the particles.
pub fn sandwich_bounds(config: &ParticleConfig, basis: &StrainBasis) -> Result<SandwichBounds> {
    if config.dim != 3 || basis.dim != 3 {
        return validation("cell bounds are available in three dimensions only");
    }
    let vol = config.side.powi(3);
    let e2: Vec<f64> = basis.elements.iter().map(|e| frobenius(3, e, e)).collect();
    if config.is_empty() {
        return Ok(SandwichBounds {
            upper: e2.clone(),
            lower_estimate: e2,
            inradii: Vec::new(),
            share_radius: f64::INFINITY,
        });
    }
    let diag = geometry_diagnostics(config, 1.0, 1.0)?;
    let inradii = diag.voronoi_inradii;
    if let Some((k, r)) = inradii.iter().enumerate().find(|(_, &r)| r <= 1.0) {
        return Err(Error::Overlap(format!("particle {k} has Voronoi inradius {r:.4} <= 1")));
    }
    let share_radius = (vol / (config.len() as f64 * unit_ball_volume(3))).cbrt();
    let mut upper = Vec::with_capacity(basis.len());
    let mut lower = Vec::with_capacity(basis.len());
    for (e, &n2) in basis.elements.iter().zip(&e2) {
        let mut sum = crate::stats::CompensatedSum::new();
        for &r in &inradii {
            sum.add(cell_model(3, r, BoundaryKind::Clamped, e)?.energy());
        }
        upper.push(n2 + sum.value() / vol);
        let free = if share_radius > 1.0 {
            cell_model(3, share_radius, BoundaryKind::TractionFree, e)?.energy()
        } else {
            return validation("volume share radius does not exceed the particle radius");
        };
        lower.push(n2 + config.len() as f64 * free / vol);
    }
    Ok(SandwichBounds {
        upper,
        lower_estimate: lower,
        inradii,
        share_radius,
    })
}
