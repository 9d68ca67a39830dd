use serde::{Deserialize, Serialize};

use super::grid::{sym_components, Grid};
use crate::error::{validation, Result};

/// A `d x d` matrix stored in the upper-left block of a 3x3 array.
pub type Mat3 = [[f64; 3]; 3];

pub fn frobenius(dim: usize, a: &Mat3, b: &Mat3) -> f64 {
    let mut s = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn trace(dim: usize, a: &Mat3) -> f64 {
    (0..dim).map(|i| a[i][i]).sum()
}

/// Rejects strains that are not symmetric and trace-free, or that have
/// entries outside the active `dim x dim` block.
pub fn strain_dim_check(dim: usize, e: &Mat3) -> Result<()> {
    let scale = frobenius(3, e, e).sqrt().max(1.0);
    for i in 0..3 {
        for j in 0..3 {
            if !e[i][j].is_finite() {
                return validation("strain has non-finite entries");
            }
            if (i >= dim || j >= dim) && e[i][j] != 0.0 {
                return validation(format!("strain has entries outside the {dim}x{dim} block"));
            }
            if (e[i][j] - e[j][i]).abs() > 1e-12 * scale {
                return validation("strain must be symmetric");
            }
        }
    }
    let tr = trace(dim, e);
    if tr.abs() > 1e-12 * scale {
        return validation(format!("strain must be trace-free, trace = {tr:e}"));
    }
    Ok(())
}

/// A symmetric-tensor voxel field; component `c` corresponds to
/// `sym_components(dim)[c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymField {
    pub dim: usize,
    pub n: usize,
    pub comps: Vec<Vec<f64>>,
}

impl SymField {
    pub fn zeros(grid: &Grid) -> Self {
        let k = sym_components(grid.dim).len();
        Self {
            dim: grid.dim,
            n: grid.n,
            comps: vec![vec![0.0; grid.len()]; k],
        }
    }

    /// Field equal to `m` everywhere.
    pub fn constant(grid: &Grid, m: &Mat3) -> Self {
        let mut f = Self::zeros(grid);
        for (c, &(i, j, _)) in sym_components(grid.dim).iter().enumerate() {
            f.comps[c].iter_mut().for_each(|v| *v = m[i][j]);
        }
        f
    }

    pub fn len(&self) -> usize {
        self.comps.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Tensor at voxel `idx`.
    pub fn at(&self, idx: usize) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        for (c, &(i, j, _)) in sym_components(self.dim).iter().enumerate() {
            m[i][j] = self.comps[c][idx];
            m[j][i] = self.comps[c][idx];
        }
        m
    }

    /// Voxel average of the field.
    pub fn mean(&self) -> Mat3 {
        let mut m = [[0.0; 3]; 3];
        let len = self.len() as f64;
        for (c, &(i, j, _)) in sym_components(self.dim).iter().enumerate() {
            let v = crate::stats::compensated_sum(self.comps[c].iter().copied()) / len;
            m[i][j] = v;
            m[j][i] = v;
        }
        m
    }

    /// Frobenius product of two fields at voxel `idx`, each shifted by a constant.
    #[inline]
    pub fn shifted_product(&self, a: &Mat3, other: &SymField, b: &Mat3, idx: usize) -> f64 {
        let mut s = 0.0;
        for (c, &(i, j, w)) in sym_components(self.dim).iter().enumerate() {
            s += w * (self.comps[c][idx] + a[i][j]) * (other.comps[c][idx] + b[i][j]);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_trace_and_asymmetry() {
        let mut e = [[0.0; 3]; 3];
        e[0][0] = 1.0;
        assert!(strain_dim_check(3, &e).is_err());
        e[1][1] = -1.0;
        assert!(strain_dim_check(3, &e).is_ok());
        e[0][1] = 0.3;
        assert!(strain_dim_check(3, &e).is_err());
        e[1][0] = 0.3;
        assert!(strain_dim_check(2, &e).is_ok());
        e[2][2] = 0.1;
        assert!(strain_dim_check(2, &e).is_err());
    }

    #[test]
    fn shifted_product_uses_full_frobenius() {
        let g = Grid::new(2, 4, 4.0, Default::default());
        let mut e = [[0.0; 3]; 3];
        e[0][1] = 1.0;
        e[1][0] = 1.0;
        let f = SymField::constant(&g, &e);
        let z = SymField::zeros(&g);
        assert_eq!(f.shifted_product(&[[0.0; 3]; 3], &z, &e, 3), 2.0);
    }
}
