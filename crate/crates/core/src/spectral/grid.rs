//! Uniform periodic grids, discrete gradient symbols and symmetric-tensor
//! component bookkeeping.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Discretization of the gradient operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientScheme {
    /// Trilinear (bilinear in 2D) elements with one-point integration:
    /// velocities live on voxel corners, strains on voxel centers.
    #[default]
    Rotated,
    /// Exact Fourier derivative with the Nyquist frequency dropped; all
    /// fields share one set of sample points.
    Fourier,
}

/// A periodic cube `[0, side)^dim` split into `n^dim` voxels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub side: f64,
    pub scheme: GradientScheme,
}

/// Per-mode data of the discrete gradient: `xi = i * phase * s`.
#[derive(Debug, Clone, Copy)]
pub struct Symbol {
    pub s: [f64; 3],
    pub phase: Complex64,
}

impl Symbol {
    pub fn norm_sqr(&self) -> f64 {
        self.s.iter().map(|v| v * v).sum()
    }

    /// Component `j` of the complex symbol.
    #[inline]
    pub fn xi(&self, j: usize) -> Complex64 {
        Complex64::new(0.0, self.s[j]) * self.phase
    }
}

impl Grid {
    pub fn new(dim: usize, n: usize, side: f64, scheme: GradientScheme) -> Self {
        Self { dim, n, side, scheme }
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Multi-index of a flat row-major index (unused axes are zero).
    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        match self.dim {
            2 => [idx / n, idx % n, 0],
            _ => [idx / (n * n), (idx / n) % n, idx % n],
        }
    }

    #[inline]
    pub fn ravel(&self, m: [usize; 3]) -> usize {
        match self.dim {
            2 => m[0] * self.n + m[1],
            _ => (m[0] * self.n + m[1]) * self.n + m[2],
        }
    }

    /// Flat index of the mode `-k`.
    #[inline]
    pub fn negate(&self, idx: usize) -> usize {
        let m = self.unravel(idx);
        let neg = |v: usize| (self.n - v) % self.n;
        self.ravel([neg(m[0]), neg(m[1]), neg(m[2])])
    }

    /// Position of velocity sample `idx` (voxel corner).
    pub fn node_position(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = m[a] as f64 * h;
        }
        x
    }

    /// Offset of the strain sample points relative to the velocity nodes.
    pub fn strain_offset(&self) -> f64 {
        match self.scheme {
            GradientScheme::Rotated => 0.5 * self.spacing(),
            GradientScheme::Fourier => 0.0,
        }
    }

    /// Position of strain sample `idx`.
    pub fn strain_position(&self, idx: usize) -> [f64; 3] {
        let mut x = self.node_position(idx);
        let off = self.strain_offset();
        for v in x.iter_mut().take(self.dim) {
            *v += off;
        }
        x
    }

    /// Signed integer frequency of index `m` along one axis.
    pub fn signed_frequency(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m > n / 2 {
            m - n
        } else {
            m
        }
    }

    /// Continuum wave vector `2 pi m / side` of mode `idx`.
    pub fn wave_vector(&self, idx: usize) -> [f64; 3] {
        let m = self.unravel(idx);
        let mut k = [0.0; 3];
        for a in 0..self.dim {
            k[a] = 2.0 * PI * self.signed_frequency(m[a]) as f64 / self.side;
        }
        k
    }

    pub fn symbols(&self) -> SymbolTable {
        SymbolTable::new(*self)
    }
}

/// One-dimensional factor tables from which per-mode symbols are assembled.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    grid: Grid,
    sin: Vec<f64>,
    cos: Vec<f64>,
    half_phase: Vec<Complex64>,
}

impl SymbolTable {
    fn new(grid: Grid) -> Self {
        let n = grid.n;
        let h = grid.spacing();
        let mut sin = vec![0.0; n];
        let mut cos = vec![1.0; n];
        let mut half_phase = vec![Complex64::new(1.0, 0.0); n];
        for m in 0..n {
            let t = 2.0 * PI * m as f64 / n as f64;
            match grid.scheme {
                GradientScheme::Rotated => {
                    sin[m] = 2.0 / h * (0.5 * t).sin();
                    cos[m] = (0.5 * t).cos();
                    half_phase[m] = Complex64::from_polar(1.0, 0.5 * t);
                }
                GradientScheme::Fourier => {
                    let f = grid.signed_frequency(m);
                    if n % 2 == 0 && m == n / 2 {
                        sin[m] = 0.0;
                    } else {
                        sin[m] = 2.0 * PI * f as f64 / grid.side;
                    }
                }
            }
        }
        Self {
            grid,
            sin,
            cos,
            half_phase,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, m: [usize; 3]) -> Symbol {
        let d = self.grid.dim;
        let mut s = [0.0; 3];
        let mut phase = Complex64::new(1.0, 0.0);
        for j in 0..d {
            let mut v = self.sin[m[j]];
            for l in 0..d {
                if l != j {
                    v *= self.cos[m[l]];
                }
            }
            s[j] = v;
            phase *= self.half_phase[m[j]];
        }
        Symbol { s, phase }
    }

    #[inline]
    pub fn at_index(&self, idx: usize) -> Symbol {
        self.at(self.grid.unravel(idx))
    }

    /// Visits every mode in flat order.
    pub fn for_each<F: FnMut(usize, &Symbol)>(&self, mut f: F) {
        let n = self.grid.n;
        let mut idx = 0;
        match self.grid.dim {
            2 => {
                for a in 0..n {
                    for b in 0..n {
                        f(idx, &self.at([a, b, 0]));
                        idx += 1;
                    }
                }
            }
            _ => {
                for a in 0..n {
                    for b in 0..n {
                        for c in 0..n {
                            f(idx, &self.at([a, b, c]));
                            idx += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Independent components `(i, j)`, `i <= j`, of a symmetric `dim x dim`
/// tensor, with the multiplicity used in Frobenius products.
pub fn sym_components(dim: usize) -> &'static [(usize, usize, f64)] {
    const D2: [(usize, usize, f64); 3] = [(0, 0, 1.0), (1, 1, 1.0), (0, 1, 2.0)];
    const D3: [(usize, usize, f64); 6] = [
        (0, 0, 1.0),
        (1, 1, 1.0),
        (2, 2, 1.0),
        (0, 1, 2.0),
        (0, 2, 2.0),
        (1, 2, 2.0),
    ];
    match dim {
        2 => &D2,
        _ => &D3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotated_symbol_matches_averaged_forward_difference() {
        let g = Grid::new(3, 8, 2.0, GradientScheme::Rotated);
        let t = g.symbols();
        let h = g.spacing();
        for idx in [1usize, 9, 77, 300, 511] {
            let m = g.unravel(idx);
            let sym = t.at(m);
            for j in 0..3 {
                let th = |a: usize| 2.0 * PI * m[a] as f64 / 8.0;
                let mut expect = (Complex64::from_polar(1.0, th(j)) - 1.0) / h;
                for l in 0..3 {
                    if l != j {
                        expect *= (Complex64::from_polar(1.0, th(l)) + 1.0) * 0.5;
                    }
                }
                assert!((sym.xi(j) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn symbols_are_hermitian() {
        for scheme in [GradientScheme::Rotated, GradientScheme::Fourier] {
            for n in [6, 7] {
                let g = Grid::new(2, n, 3.0, scheme);
                let t = g.symbols();
                for idx in 0..g.len() {
                    let a = t.at_index(idx);
                    let b = t.at_index(g.negate(idx));
                    for j in 0..2 {
                        assert!((a.xi(j) - b.xi(j).conj()).norm() < 1e-12, "{scheme:?} n={n} idx={idx}");
                    }
                }
            }
        }
    }
}
