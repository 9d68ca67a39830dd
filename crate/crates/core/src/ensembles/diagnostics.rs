use serde::Serialize;

use super::{ball_volume, unit_ball_volume, ParticleConfig};
use crate::error::{validation, Result};

/// A connected component of the fattened particle set.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Component {
    pub members: Vec<usize>,
    /// Max periodic member-center distance plus `2 (1 + rho)`.
    pub diameter: f64,
    /// Volume of the union of fattened balls (pairwise inclusion-exclusion).
    pub volume: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct GeometryDiagnostics {
    /// Surface gap to the nearest other particle; `side / 2` when alone.
    pub gaps: Vec<f64>,
    /// True when `gaps` holds the no-neighbour sentinel.
    pub isolated: bool,
    pub fattening: f64,
    pub exponent: f64,
    /// `sum_n gap_n^{-r0} |I_n| / L^d`.
    pub moment_gap: f64,
    pub components: Vec<Component>,
    /// `sum_q diam(K_q)^{r0} |K_q| / L^d`.
    pub moment_cluster: f64,
    /// Radius of the largest ball around each center inside its Voronoi cell.
    pub voronoi_inradii: Vec<f64>,
}

impl GeometryDiagnostics {
    pub fn min_gap(&self) -> Option<f64> {
        self.gaps.iter().copied().reduce(f64::min)
    }
}

/// Gap statistics, fattened-cluster structure and Voronoi inradii of a configuration.
///
/// `fattening` is the `rho` of the cluster condition; `exponent` the moment
/// exponent `r0` of both moment conditions.
pub fn geometry_diagnostics(config: &ParticleConfig, fattening: f64, exponent: f64) -> Result<GeometryDiagnostics> {
    config.validate()?;
    if !(fattening > 0.0) {
        return validation("fattening radius must be positive");
    }
    let n = config.len();
    let half = 0.5 * config.side;
    let mut nearest = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = config.distance(&config.centers[i], &config.centers[j]);
            nearest[i] = nearest[i].min(d);
            nearest[j] = nearest[j].min(d);
        }
    }
    let isolated = n == 1;
    let gaps: Vec<f64> = nearest
        .iter()
        .map(|&d| if d.is_finite() { d - 2.0 } else { half })
        .collect();
    let voronoi_inradii: Vec<f64> = nearest.iter().map(|&d| (0.5 * d).min(half)).collect();

    let particle = unit_ball_volume(config.dim);
    let total = config.volume();
    let moment_gap = gaps.iter().map(|g| g.powf(-exponent) * particle).sum::<f64>() / total;

    let components = fattened_components(config, fattening);
    let moment_cluster = components
        .iter()
        .map(|c| c.diameter.powf(exponent) * c.volume)
        .sum::<f64>()
        / total;

    Ok(GeometryDiagnostics {
        gaps,
        isolated,
        fattening,
        exponent,
        moment_gap,
        components,
        moment_cluster,
        voronoi_inradii,
    })
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn fattened_components(config: &ParticleConfig, fattening: f64) -> Vec<Component> {
    let n = config.len();
    let radius = 1.0 + fattening;
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if config.distance(&config.centers[i], &config.centers[j]) < 2.0 * radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
        .into_iter()
        .map(|members| {
            let mut span: f64 = 0.0;
            let mut volume = members.len() as f64 * ball_volume(config.dim, radius);
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    let d = config.distance(&config.centers[i], &config.centers[j]);
                    span = span.max(d);
                    volume -= lens_volume(config.dim, radius, d);
                }
            }
            Component {
                members,
                diameter: span + 2.0 * radius,
                volume,
            }
        })
        .collect()
}

/// Intersection volume of two balls of radius `r` at center distance `d`.
fn lens_volume(dim: usize, r: f64, d: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    match dim {
        2 => 2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt(),
        _ => std::f64::consts::PI / 12.0 * (4.0 * r + d) * (2.0 * r - d).powi(2),
    }
}
