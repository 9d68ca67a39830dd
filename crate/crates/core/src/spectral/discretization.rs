use rustfft::num_complex::Complex64 as C;

use super::fft::GridFft;
use super::grid::{sym_components, Grid};
use super::strain::{Mat3, SymField};

const I: C = C { re: 0.0, im: 1.0 };

/// Per-mode symbols, FFT plans and scratch buffers for one grid.
///
/// Spectral velocity vectors are stored component-major: component `c` of
/// mode `k` sits at `c * len + k`.
pub struct Discretization {
    grid: Grid,
    s: Vec<[f64; 3]>,
    phase: Vec<C>,
    s2: Vec<f64>,
    neg: Vec<usize>,
    fft: GridFft,
    bufs: Vec<Vec<C>>,
}

/// `|s|^2` below this counts as a null mode.
const NULL_MODE: f64 = 1e-24;

impl Discretization {
    pub fn new(grid: Grid) -> Self {
        let table = grid.symbols();
        let len = grid.len();
        let mut s = Vec::with_capacity(len);
        let mut phase = Vec::with_capacity(len);
        table.for_each(|_, sym| {
            s.push(sym.s);
            phase.push(sym.phase);
        });
        let scale = grid.spacing().powi(-2);
        let s2 = s
            .iter()
            .map(|v: &[f64; 3]| {
                let n = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
                if n < NULL_MODE * scale {
                    0.0
                } else {
                    n
                }
            })
            .collect();
        let neg = (0..len).map(|k| grid.negate(k)).collect();
        let pairs = sym_components(grid.dim).len().div_ceil(2);
        Self {
            grid,
            s,
            phase,
            s2,
            neg,
            fft: GridFft::new(grid.dim, grid.n),
            bufs: vec![vec![C::default(); len]; pairs],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.len() == 0
    }

    /// Length of a spectral velocity vector.
    pub fn vector_len(&self) -> usize {
        self.grid.dim * self.grid.len()
    }

    /// `|s(k)|^2`, zero on the mean and null modes.
    #[inline]
    pub fn s2(&self, k: usize) -> f64 {
        self.s2[k]
    }

    /// Real part `s(k)` of the symbol `xi = i phase s`.
    #[inline]
    pub fn s(&self, k: usize) -> [f64; 3] {
        self.s[k]
    }

    #[inline]
    pub fn xi(&self, k: usize, j: usize) -> C {
        I * self.s[k][j] * self.phase[k]
    }

    #[inline]
    pub fn neg(&self, k: usize) -> usize {
        self.neg[k]
    }

    /// Symbol of the symmetric gradient applied to `u_hat` at mode `k`,
    /// component `(i, j)`.
    #[inline]
    fn strain_hat(&self, u: &[C], k: usize, i: usize, j: usize) -> C {
        let len = self.len();
        0.5 * (self.xi(k, j) * u[i * len + k] + self.xi(k, i) * u[j * len + k])
    }

    /// Orthogonal projection onto divergence-free modes; mean and null
    /// modes are zeroed unless `keep_null`.
    pub fn project(&self, v: &mut [C], keep_null: bool) {
        let (d, len) = (self.grid.dim, self.len());
        for k in 0..len {
            let s2 = self.s2[k];
            if s2 == 0.0 {
                if !keep_null {
                    for c in 0..d {
                        v[c * len + k] = C::default();
                    }
                }
                continue;
            }
            let s = &self.s[k];
            let mut dot = C::default();
            for c in 0..d {
                dot += s[c] * v[c * len + k];
            }
            dot /= s2;
            for c in 0..d {
                v[c * len + k] -= s[c] * dot;
            }
        }
    }

    /// `out = D^H F(mu (F^-1 D u + shift))`, without projection.
    ///
    /// `u` may be `None` for the pure `shift` term. `mu` lives on strain points.
    pub fn viscous(&mut self, mu: &[f64], u: Option<&[C]>, shift: Option<&Mat3>, out: &mut [C]) {
        let dim = self.grid.dim;
        let len = self.len();
        let comps = sym_components(dim);
        let mut bufs = std::mem::take(&mut self.bufs);
        for (p, buf) in bufs.iter_mut().enumerate() {
            let a = comps[2 * p];
            let b = comps.get(2 * p + 1).copied();
            match u {
                Some(u) => {
                    for (k, z) in buf.iter_mut().enumerate() {
                        let za = self.strain_hat(u, k, a.0, a.1);
                        let zb = b.map_or(C::default(), |b| self.strain_hat(u, k, b.0, b.1));
                        *z = za + I * zb;
                    }
                    self.fft.inverse(buf);
                }
                None => buf.iter_mut().for_each(|z| *z = C::default()),
            }
            let e = shift.map_or(C::default(), |e| C::new(e[a.0][a.1], b.map_or(0.0, |b| e[b.0][b.1])));
            for (z, &m) in buf.iter_mut().zip(mu) {
                *z = (*z + e) * m;
            }
            self.fft.forward(buf);
        }
        for v in out.iter_mut() {
            *v = C::default();
        }
        for k in 0..len {
            let nk = self.neg[k];
            let mut tau = [[C::default(); 3]; 3];
            for (c, &(i, j, _)) in comps.iter().enumerate() {
                let z = bufs[c / 2][k];
                let zn = bufs[c / 2][nk].conj();
                let t = if c % 2 == 0 { 0.5 * (z + zn) } else { (z - zn) * C::new(0.0, -0.5) };
                tau[i][j] = t;
                tau[j][i] = t;
            }
            for i in 0..dim {
                let mut acc = C::default();
                for (j, row) in tau[i].iter().enumerate().take(dim) {
                    acc += self.xi(k, j).conj() * row;
                }
                out[i * len + k] = acc;
            }
        }
        self.bufs = bufs;
    }

    /// Real-space symmetric gradient of `u_hat`, on strain points.
    pub fn strain_field(&mut self, u: &[C]) -> SymField {
        let comps = sym_components(self.grid.dim);
        let mut field = SymField::zeros(&self.grid);
        let len = self.len();
        let mut buf = vec![C::default(); len];
        for p in 0..comps.len().div_ceil(2) {
            let a = comps[2 * p];
            let b = comps.get(2 * p + 1).copied();
            for (k, z) in buf.iter_mut().enumerate() {
                let za = self.strain_hat(u, k, a.0, a.1);
                let zb = b.map_or(C::default(), |b| self.strain_hat(u, k, b.0, b.1));
                *z = za + I * zb;
            }
            self.fft.inverse(&mut buf);
            for k in 0..len {
                field.comps[2 * p][k] = buf[k].re;
                if b.is_some() {
                    field.comps[2 * p + 1][k] = buf[k].im;
                }
            }
        }
        field
    }

    /// Real-space full gradient `du_i/dx_j` of `u_hat` on strain points, as
    /// `dim * dim` fields in row-major `(i, j)` order.
    pub fn gradient_field(&mut self, u: &[C]) -> Vec<Vec<f64>> {
        let d = self.grid.dim;
        let len = self.len();
        let mut hat = vec![C::default(); d * d * len];
        for i in 0..d {
            for j in 0..d {
                let o = (i * d + j) * len;
                for k in 0..len {
                    hat[o + k] = self.xi(k, j) * u[i * len + k];
                }
            }
        }
        self.to_real(&hat, d * d)
    }

    /// Inverse transform of `count` Hermitian spectral fields stored
    /// back to back, two per complex FFT.
    pub fn to_real(&mut self, hat: &[C], count: usize) -> Vec<Vec<f64>> {
        let len = self.len();
        let mut out = vec![vec![0.0; len]; count];
        let mut buf = vec![C::default(); len];
        for p in 0..count.div_ceil(2) {
            let a = &hat[2 * p * len..(2 * p + 1) * len];
            let second = 2 * p + 1 < count;
            for k in 0..len {
                let zb = if second { hat[(2 * p + 1) * len + k] } else { C::default() };
                buf[k] = a[k] + I * zb;
            }
            self.fft.inverse(&mut buf);
            for k in 0..len {
                out[2 * p][k] = buf[k].re;
                if second {
                    out[2 * p + 1][k] = buf[k].im;
                }
            }
        }
        out
    }

    /// Forward transform of real fields, two per complex FFT; returns the
    /// spectra back to back.
    pub fn to_spectral(&mut self, fields: &[&[f64]]) -> Vec<C> {
        let len = self.len();
        let count = fields.len();
        let mut out = vec![C::default(); count * len];
        let mut buf = vec![C::default(); len];
        for p in 0..count.div_ceil(2) {
            let second = 2 * p + 1 < count;
            for k in 0..len {
                let b = if second { fields[2 * p + 1][k] } else { 0.0 };
                buf[k] = C::new(fields[2 * p][k], b);
            }
            self.fft.forward(&mut buf);
            for k in 0..len {
                let z = buf[k];
                let zn = buf[self.neg[k]].conj();
                if second {
                    out[2 * p * len + k] = 0.5 * (z + zn);
                    out[(2 * p + 1) * len + k] = (z - zn) * C::new(0.0, -0.5);
                } else {
                    out[2 * p * len + k] = z;
                }
            }
        }
        out
    }

    /// Real-space velocity components on the velocity nodes.
    pub fn velocity_field(&mut self, u: &[C]) -> Vec<Vec<f64>> {
        let d = self.grid.dim;
        self.to_real(u, d)
    }

    /// Pressure multiplier `p_hat = 2 xi . q_hat / |s|^2` of an unprojected
    /// divergence `q_hat = D^H tau_hat`, on strain points.
    pub fn pressure_from_divergence(&mut self, q: &[C]) -> Vec<f64> {
        let (d, len) = (self.grid.dim, self.len());
        let mut p = vec![C::default(); len];
        for (k, pk) in p.iter_mut().enumerate() {
            if self.s2[k] == 0.0 {
                continue;
            }
            let mut acc = C::default();
            for j in 0..d {
                acc += self.xi(k, j) * q[j * len + k];
            }
            *pk = 2.0 * acc / self.s2[k];
        }
        self.to_real(&p, 1).pop().unwrap_or_default()
    }

    /// Discrete divergence `sum_j xi_j u_j` of a spectral velocity.
    pub fn divergence_hat(&self, u: &[C]) -> Vec<C> {
        let (d, len) = (self.grid.dim, self.len());
        (0..len)
            .map(|k| (0..d).map(|j| self.xi(k, j) * u[j * len + k]).sum())
            .collect()
    }
}

/// Real inner product `Re <a, b>` of spectral vectors.
pub fn dot(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::grid::GradientScheme;

    fn random_real(len: usize, seed: u64) -> Vec<f64> {
        let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        (0..len)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn paired_transforms_round_trip() {
        for dim in [2, 3] {
            let g = Grid::new(dim, 8, 5.0, GradientScheme::Rotated);
            let mut disc = Discretization::new(g);
            let fields: Vec<Vec<f64>> = (0..3).map(|s| random_real(g.len(), s + 1)).collect();
            let refs: Vec<&[f64]> = fields.iter().map(|f| f.as_slice()).collect();
            let hat = disc.to_spectral(&refs);
            let back = disc.to_real(&hat, 3);
            for (a, b) in fields.iter().zip(&back) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn viscous_operator_is_self_adjoint() {
        for scheme in [GradientScheme::Rotated, GradientScheme::Fourier] {
            let g = Grid::new(3, 8, 4.0, scheme);
            let mut disc = Discretization::new(g);
            let mu: Vec<f64> = random_real(g.len(), 9).iter().map(|v| 1.0 + 4.0 * (v + 0.5)).collect();
            let mk = |disc: &mut Discretization, seed: u64| {
                let f: Vec<Vec<f64>> = (0..3).map(|c| random_real(g.len(), seed + c)).collect();
                let r: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
                disc.to_spectral(&r)
            };
            let u = mk(&mut disc, 10);
            let v = mk(&mut disc, 20);
            let mut au = vec![C::default(); u.len()];
            let mut av = vec![C::default(); v.len()];
            disc.viscous(&mu, Some(&u), None, &mut au);
            disc.viscous(&mu, Some(&v), None, &mut av);
            let (x, y) = (dot(&v, &au), dot(&u, &av));
            assert!((x - y).abs() < 1e-10 * x.abs().max(1.0), "{x} {y}");
            assert!(dot(&u, &au) > 0.0);
        }
    }

    #[test]
    fn constant_viscosity_operator_is_half_laplacian_on_solenoidal_modes() {
        let g = Grid::new(2, 8, 3.0, GradientScheme::Rotated);
        let mut disc = Discretization::new(g);
        let f: Vec<Vec<f64>> = (0..2).map(|c| random_real(g.len(), 40 + c)).collect();
        let r: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
        let mut u = disc.to_spectral(&r);
        disc.project(&mut u, false);
        let mut au = vec![C::default(); u.len()];
        disc.viscous(&vec![1.0; g.len()], Some(&u), None, &mut au);
        disc.project(&mut au, false);
        let len = g.len();
        for c in 0..2 {
            for k in 0..len {
                let expect = 0.5 * disc.s2(k) * u[c * len + k];
                assert!((au[c * len + k] - expect).norm() < 1e-10);
            }
        }
    }
}
