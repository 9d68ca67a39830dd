use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::Grid;
use crate::artifact::write_atomic;
use crate::error::{validation, Result};

/// JSON description of a flat binary field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub dims: Vec<usize>,
    #[serde(rename = "box")]
    pub side: f64,
    pub components: Vec<String>,
    pub dtype: String,
    pub order: String,
}

/// Writes `components` (each of grid length) as little-endian `f64`,
/// component after component, to `path`, and the sidecar to `path.json`.
pub fn write_field(path: &Path, grid: &Grid, names: &[String], components: &[Vec<f64>]) -> Result<FieldSidecar> {
    if names.len() != components.len() || components.iter().any(|c| c.len() != grid.len()) {
        return validation("field components do not match the grid");
    }
    let mut bytes = Vec::with_capacity(8 * grid.len() * components.len());
    for c in components {
        for v in c {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &bytes)?;
    let sidecar = FieldSidecar {
        dims: vec![grid.n; grid.dim],
        side: grid.side,
        components: names.to_vec(),
        dtype: "f64".into(),
        order: "row-major".into(),
    };
    let mut side_path = path.as_os_str().to_owned();
    side_path.push(".json");
    write_atomic(Path::new(&side_path), serde_json::to_string_pretty(&sidecar)?.as_bytes())?;
    Ok(sidecar)
}

/// CSV `iteration,residual`.
pub fn write_solver_log(path: &Path, history: &[f64]) -> Result<()> {
    let mut s = String::from("iteration,residual\n");
    for (i, r) in history.iter().enumerate() {
        let _ = writeln!(s, "{},{:e}", i + 1, r);
    }
    write_atomic(path, s.as_bytes())
}
