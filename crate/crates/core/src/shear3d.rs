//! Growing modes `e^{i alpha0 (x - c t)} (u, v, w, P)(y, z)` of the
//! linearized Euler equations around a shear `U(y, z)` on the strip
//! `0 < y < 1`, periodic in `z` with period `L_z`.
//!
//! The unknowns are the streamwise velocity `u` and the cross-plane
//! vorticity `omega = w_y - v_z`. The cross-plane velocity `(v, w)` is
//! rebuilt from its divergence `-i alpha0 Q u` and curl `omega`, and the
//! problem becomes `lambda (u, omega) = (F + K)(u, omega)` with
//! `lambda = -i alpha0 c`, `F = -i alpha0 U` and
//!
//! ```text
//! K(u, omega) = ( i alpha0 <U u> + (1 + alpha0^2 B)^{-1} (alpha0^2 B - Q)(U_y v + U_z w),
//!                 -i alpha0 (U_y w - U_z v) )
//! ```
//!
//! where `<.>` is the strip mean, `Q` removes it and `B = Q (-Delta)_N^{-1} Q`.
//! Fields are Chebyshev in `y` times a truncated Fourier series in `z`;
//! products with `U` are Galerkin convolutions in the Fourier index, so the
//! operator is block banded with one block per spanwise wavenumber.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex as FftComplex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::linalg::{cgemm, rcgemm, ComplexSchur};
use crate::profiles::ShearProfile;
use crate::rayleigh::{instability_threshold, solve_rayleigh, RayleighOptions};
use crate::spectral::ChebGrid;
use crate::{Error, Result, C64};

const I: C64 = C64::new(0.0, 1.0);

fn cr(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Chebyshev nodes in `y` times `nz` uniform points in `z`. The Fourier
/// modes `|k| <= nz/2 - 1` are kept; the Nyquist mode is dropped.
#[derive(Debug, Clone)]
pub struct StripGrid {
    ny: usize,
    nz: usize,
    lz: f64,
    cheb: ChebGrid,
    z: Vec<f64>,
    /// Quadrature in `y` implied by integrating from the wall `y = 0`:
    /// `quad . f = (S f)(1)`. Exact on polynomials of degree `ny - 1`.
    quad: Vec<f64>,
}

/// Per-wavenumber coefficient vectors, index `p = k + kmax`.
pub type Modes = Vec<DVector<C64>>;

impl StripGrid {
    pub fn new(ny: usize, nz: usize, lz: f64) -> Result<Self> {
        if ny < 8 || nz < 4 || nz % 2 != 0 || !(lz > 0.0) {
            return Err(Error::InvalidInput(format!(
                "strip grid needs ny >= 8, even nz >= 4 and L_z > 0, got ({ny}, {nz}, {lz})"
            )));
        }
        let cheb = ChebGrid::new(ny);
        let quad = integral_from_wall(&cheb)?.row(ny).iter().copied().collect();
        Ok(Self {
            ny,
            nz,
            lz,
            cheb,
            z: (0..nz).map(|j| lz * j as f64 / nz as f64).collect(),
            quad,
        })
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn lz(&self) -> f64 {
        self.lz
    }

    pub fn y(&self) -> &[f64] {
        self.cheb.nodes()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn cheb(&self) -> &ChebGrid {
        &self.cheb
    }

    pub fn kmax(&self) -> usize {
        self.nz / 2 - 1
    }

    pub fn nk(&self) -> usize {
        2 * self.kmax() + 1
    }

    pub fn wavenumber(&self, p: usize) -> i64 {
        p as i64 - self.kmax() as i64
    }

    pub fn beta(&self, p: usize) -> f64 {
        2.0 * PI * self.wavenumber(p) as f64 / self.lz
    }

    /// Fourier coefficients in `z` of a field stored as `(y, z)` samples.
    pub fn to_modes(&self, f: &DMatrix<C64>) -> Modes {
        let fft = FftPlanner::<f64>::new().plan_fft_forward(self.nz);
        let mut out = vec![DVector::zeros(self.ny + 1); self.nk()];
        let mut buf = vec![FftComplex::new(0.0, 0.0); self.nz];
        for i in 0..=self.ny {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = FftComplex::new(f[(i, j)].re, f[(i, j)].im);
            }
            fft.process(&mut buf);
            for (p, o) in out.iter_mut().enumerate() {
                let k = self.wavenumber(p).rem_euclid(self.nz as i64) as usize;
                o[i] = C64::new(buf[k].re, buf[k].im) / self.nz as f64;
            }
        }
        out
    }

    pub fn from_modes(&self, m: &[DVector<C64>]) -> DMatrix<C64> {
        let fft = FftPlanner::<f64>::new().plan_fft_inverse(self.nz);
        let mut out = DMatrix::zeros(self.ny + 1, self.nz);
        let mut buf = vec![FftComplex::new(0.0, 0.0); self.nz];
        for i in 0..=self.ny {
            buf.iter_mut().for_each(|b| *b = FftComplex::new(0.0, 0.0));
            for (p, mp) in m.iter().enumerate() {
                let k = self.wavenumber(p).rem_euclid(self.nz as i64) as usize;
                buf[k] = FftComplex::new(mp[i].re, mp[i].im);
            }
            fft.process(&mut buf);
            for j in 0..self.nz {
                out[(i, j)] = C64::new(buf[j].re, buf[j].im);
            }
        }
        out
    }

    /// Strip average `(1/L_z) int int f` with the wall-integration
    /// quadrature in `y`.
    pub fn mean(&self, f: &DMatrix<C64>) -> C64 {
        let w = &self.quad;
        (0..=self.ny)
            .map(|i| f.row(i).iter().sum::<C64>() * (w[i] / self.nz as f64))
            .sum()
    }

    fn mode_mean(&self, u0: &DVector<C64>) -> C64 {
        self.quad.iter().zip(u0.iter()).map(|(w, u)| u * *w).sum()
    }

    pub fn l2_norm(&self, f: &DMatrix<C64>) -> f64 {
        (self.mean(&f.map(|v| cr(v.norm_sqr()))).re * self.lz).sqrt()
    }

    pub fn dy(&self, f: &DMatrix<C64>) -> DMatrix<C64> {
        self.cheb.d1().map(cr) * f
    }

    pub fn dz(&self, f: &DMatrix<C64>) -> DMatrix<C64> {
        let m = self.to_modes(f);
        let d: Modes = m.iter().enumerate().map(|(p, v)| v * (I * self.beta(p))).collect();
        self.from_modes(&d)
    }
}

fn dy_modes(g: &StripGrid, m: &[DVector<C64>]) -> Modes {
    let d = g.cheb.d1().map(cr);
    m.iter().map(|v| &d * v).collect()
}

fn scale_rows(diag: &DVector<C64>, m: &DMatrix<C64>) -> DMatrix<C64> {
    let mut out = m.clone();
    for (i, s) in diag.iter().enumerate() {
        out.row_mut(i).iter_mut().for_each(|z| *z *= *s);
    }
    out
}

/// Galerkin product of two truncated series.
fn convolve(a: &[DVector<C64>], b: &[DVector<C64>]) -> Modes {
    let nk = a.len();
    let kmax = (nk / 2) as i64;
    let mut out = vec![DVector::zeros(a[0].len()); nk];
    for (p, o) in out.iter_mut().enumerate() {
        let k = p as i64 - kmax;
        for (q, bq) in b.iter().enumerate() {
            let m = k - (q as i64 - kmax);
            if m.abs() > kmax {
                continue;
            }
            *o += a[(m + kmax) as usize].component_mul(bq);
        }
    }
    out
}

/// `U(y, z)` sampled on a strip grid.
#[derive(Debug, Clone)]
pub struct Shear3DProfile {
    grid: StripGrid,
    /// `values[(i, j)] = U(y_i, z_j)`.
    pub values: DMatrix<f64>,
    pub base: Option<ShearProfile>,
    pub perturbation_size: f64,
}

impl Shear3DProfile {
    pub fn from_fn(grid: StripGrid, u: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = DMatrix::from_fn(grid.ny + 1, grid.nz, |i, j| u(grid.y()[i], grid.z[j]));
        let p = Self {
            grid,
            values,
            base: None,
            perturbation_size: 0.0,
        };
        p.check_walls(None)?;
        Ok(p)
    }

    /// `U_0(y) + eps g(y, z)` with `g` scaled to unit maximum on the grid.
    pub fn perturbed(grid: StripGrid, base: &ShearProfile, eps: f64, g: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let gv = DMatrix::from_fn(grid.ny + 1, grid.nz, |i, j| g(grid.y()[i], grid.z[j]));
        let gmax = gv.camax();
        let scale = if gmax > 0.0 { eps / gmax } else { 0.0 };
        let u0 = base.sample(&grid.cheb, 0);
        let values = DMatrix::from_fn(grid.ny + 1, grid.nz, |i, j| u0[i] + scale * gv[(i, j)]);
        let p = Self {
            grid,
            values,
            base: Some(base.clone()),
            perturbation_size: eps,
        };
        p.check_walls(Some(base))?;
        Ok(p)
    }

    pub fn z_independent(grid: StripGrid, base: &ShearProfile) -> Result<Self> {
        Self::perturbed(grid, base, 0.0, |_, _| 0.0)
    }

    fn check_walls(&self, base: Option<&ShearProfile>) -> Result<()> {
        let ny = self.grid.ny;
        let (b0, b1) = match base {
            Some(b) => (b.derivative(0.0, 0), b.derivative(1.0, 0)),
            None => (self.values[(0, 0)], self.values[(ny, 0)]),
        };
        for j in 0..self.grid.nz {
            let d = (self.values[(0, j)] - b0).abs().max((self.values[(ny, j)] - b1).abs());
            if d > 1e-12 * (1.0 + b0.abs().max(b1.abs())) {
                return Err(Error::InvalidProfile(format!(
                    "U must match the base flow on both walls; off by {d:.3e} at z = {}",
                    self.grid.z[j]
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &StripGrid {
        &self.grid
    }

    pub fn is_z_independent(&self) -> bool {
        (0..self.grid.nz).all(|j| (0..=self.grid.ny).all(|i| self.values[(i, j)] == self.values[(i, 0)]))
    }

    fn modes(&self) -> Modes {
        self.grid.to_modes(&self.values.map(cr))
    }
}

/// Inverse of a collocated second-order operator `D2 - s I` with the given
/// wall rows; columns of the wall rows are zeroed so that wall values of
/// the right-hand side are ignored.
fn bvp_inverse(g: &ChebGrid, shift: f64, neumann: bool) -> Result<DMatrix<f64>> {
    let n = g.n();
    let mut m = g.d2().clone();
    for i in 0..=n {
        m[(i, i)] -= shift;
    }
    for &r in &[0, n] {
        for j in 0..=n {
            m[(r, j)] = if neumann {
                g.d1()[(r, j)]
            } else if r == j {
                1.0
            } else {
                0.0
            };
        }
    }
    let mut inv = m
        .try_inverse()
        .ok_or_else(|| Error::Eigensolver("singular boundary-value problem".into()))?;
    for r in 0..=n {
        inv[(r, 0)] = 0.0;
        inv[(r, n)] = 0.0;
    }
    Ok(inv)
}

/// Inverse of `d/dy` with the value at `y = 0` fixed to zero.
fn integral_from_wall(g: &ChebGrid) -> Result<DMatrix<f64>> {
    let n = g.n();
    let mut m = g.d1().clone();
    for j in 0..=n {
        m[(0, j)] = if j == 0 { 1.0 } else { 0.0 };
    }
    let mut inv = m
        .try_inverse()
        .ok_or_else(|| Error::Eigensolver("singular integration operator".into()))?;
    for r in 0..=n {
        inv[(r, 0)] = 0.0;
    }
    Ok(inv)
}

/// Per-wavenumber maps from `(div, curl)` to `(v, w)`.
///
/// For `k != 0`, `(v, w) = grad phi + (-psi_z, psi_y)` with
/// `Delta phi = div`, `phi_y = 0` on the walls, and `Delta psi = curl`,
/// `psi = 0` on the walls. For `k = 0` the equations are first order in `y`:
/// `v' = div` and `w' = curl`, integrated from `y = 0`, so that `v` and the
/// circulation `L_z w_0` vanish at `y = 0`; they vanish at `y = 1` exactly
/// when the data have zero mean.
#[derive(Debug, Clone)]
struct Reconstruction {
    /// `(v, w)` from div, then from curl.
    from_div: Vec<(DMatrix<C64>, DMatrix<C64>)>,
    from_curl: Vec<(DMatrix<C64>, DMatrix<C64>)>,
}

impl Reconstruction {
    fn new(g: &StripGrid) -> Result<Self> {
        let d = g.cheb.d1();
        let n1 = g.ny + 1;
        let mut from_div = Vec::with_capacity(g.nk());
        let mut from_curl = Vec::with_capacity(g.nk());
        for p in 0..g.nk() {
            let b = g.beta(p);
            if g.wavenumber(p) == 0 {
                let s = integral_from_wall(&g.cheb)?.map(cr);
                let zero = DMatrix::zeros(n1, n1);
                from_div.push((s.clone(), zero.clone()));
                from_curl.push((zero, s));
            } else {
                let gphi = bvp_inverse(&g.cheb, b * b, true)?;
                let gpsi = bvp_inverse(&g.cheb, b * b, false)?;
                from_div.push(((d * &gphi).map(cr), gphi.map(|x| I * b * x)));
                from_curl.push((gpsi.map(|x| -I * b * x), (d * &gpsi).map(cr)));
            }
        }
        Ok(Self { from_div, from_curl })
    }

    fn apply(&self, f1: &[DVector<C64>], f2: &[DVector<C64>]) -> (Modes, Modes) {
        let mut v = Vec::with_capacity(f1.len());
        let mut w = Vec::with_capacity(f1.len());
        for p in 0..f1.len() {
            let (dv, dw) = &self.from_div[p];
            let (cv, cw) = &self.from_curl[p];
            v.push(dv * &f1[p] + cv * &f2[p]);
            w.push(dw * &f1[p] + cw * &f2[p]);
        }
        (v, w)
    }
}

#[derive(Debug, Clone)]
pub struct DivCurlField {
    pub v: DMatrix<C64>,
    pub w: DMatrix<C64>,
    /// `||(v, w)||_{H^1} / (||f1|| + ||f2||)` for this data.
    pub constant: f64,
}

fn h1_norm(g: &StripGrid, v: &DMatrix<C64>, w: &DMatrix<C64>) -> f64 {
    let parts = [v.clone(), w.clone(), g.dy(v), g.dz(v), g.dy(w), g.dz(w)];
    parts.iter().map(|f| g.l2_norm(f).powi(2)).sum::<f64>().sqrt()
}

/// The field with prescribed divergence and curl, `v = 0` on the walls and
/// zero circulation along both walls. Both data must have zero strip mean:
/// the mean of `f1` is the net wall flux and the mean of `f2` the
/// difference of the wall circulations.
pub fn div_curl_reconstruct(g: &StripGrid, f1: &DMatrix<C64>, f2: &DMatrix<C64>) -> Result<DivCurlField> {
    let shape = (g.ny + 1, g.nz);
    if f1.shape() != shape || f2.shape() != shape {
        return Err(Error::InvalidInput(format!("fields must have shape {shape:?}")));
    }
    let tol = |f: &DMatrix<C64>| 1e-10 * f.iter().fold(1e-300_f64, |m, z| m.max(z.norm()));
    let (m1, m2) = (g.mean(f1), g.mean(f2));
    if m1.norm() > tol(f1) {
        return Err(Error::InvalidInput(format!("divergence has nonzero mean {m1}")));
    }
    if m2.norm() > tol(f2) {
        return Err(Error::InvalidInput(format!(
            "curl has nonzero mean {m2}, incompatible with zero circulation on both walls"
        )));
    }
    let rec = Reconstruction::new(g)?;
    let (v, w) = rec.apply(&g.to_modes(f1), &g.to_modes(f2));
    let (v, w) = (g.from_modes(&v), g.from_modes(&w));
    let data = g.l2_norm(f1) + g.l2_norm(f2);
    let constant = if data > 0.0 { h1_norm(g, &v, &w) / data } else { 0.0 };
    Ok(DivCurlField { v, w, constant })
}

/// Square matrix of `nk x nk` blocks of size `bs`, nonzero only within
/// `band` of the diagonal.
#[derive(Debug, Clone)]
pub struct BlockBanded {
    pub nk: usize,
    pub bs: usize,
    pub band: usize,
    blocks: Vec<Option<DMatrix<C64>>>,
}

impl BlockBanded {
    fn zeros(nk: usize, bs: usize, band: usize) -> Self {
        Self {
            nk,
            bs,
            band,
            blocks: vec![None; nk * nk],
        }
    }

    pub fn block(&self, p: usize, q: usize) -> Option<&DMatrix<C64>> {
        self.blocks[p * self.nk + q].as_ref()
    }

    fn block_mut(&mut self, p: usize, q: usize) -> &mut DMatrix<C64> {
        let bs = self.bs;
        self.blocks[p * self.nk + q].get_or_insert_with(|| DMatrix::zeros(bs, bs))
    }

    pub fn dim(&self) -> usize {
        self.nk * self.bs
    }

    pub fn mul(&self, x: &DVector<C64>) -> DVector<C64> {
        let bs = self.bs;
        let mut y = DVector::zeros(self.dim());
        for p in 0..self.nk {
            for q in 0..self.nk {
                if let Some(b) = self.block(p, q) {
                    let r = b * x.rows(q * bs, bs);
                    let mut yp = y.rows_mut(p * bs, bs);
                    yp += r;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let bs = self.bs;
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for p in 0..self.nk {
            for q in 0..self.nk {
                if let Some(b) = self.block(p, q) {
                    m.view_mut((p * bs, q * bs), (bs, bs)).copy_from(b);
                }
            }
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.band = self.band.max(other.band);
        for p in 0..self.nk {
            for q in 0..self.nk {
                if let Some(b) = other.block(p, q) {
                    *out.block_mut(p, q) += b;
                }
            }
        }
        out
    }

    fn inf_norm(&self) -> f64 {
        (0..self.nk)
            .flat_map(|p| {
                (0..self.bs).map(move |r| {
                    (0..self.nk)
                        .filter_map(|q| self.block(p, q))
                        .map(|b| b.row(r).iter().map(|z| z.norm()).sum::<f64>())
                        .sum::<f64>()
                })
            })
            .fold(0.0, f64::max)
    }

    /// Block LU of `self - shift I` without pivoting across blocks.
    fn factor(&self, shift: C64) -> Result<BlockLu> {
        let (nk, bs, band) = (self.nk, self.bs, self.band);
        let mut a = self.clone();
        for p in 0..nk {
            let d = a.block_mut(p, p);
            for i in 0..bs {
                d[(i, i)] -= shift;
            }
        }
        let mut inv_diag = Vec::with_capacity(nk);
        let mut lower: Vec<Option<DMatrix<C64>>> = vec![None; nk * nk];
        for p in 0..nk {
            let inv = a
                .block(p, p)
                .cloned()
                .unwrap_or_else(|| DMatrix::zeros(bs, bs))
                .try_inverse()
                .ok_or_else(|| Error::Eigensolver("singular pivot block".into()))?;
            let last = (p + band).min(nk - 1);
            for i in p + 1..=last {
                let Some(a_ip) = a.block(i, p).cloned() else { continue };
                let l = cgemm(&a_ip, &inv);
                for j in p + 1..=last {
                    if let Some(u_pj) = a.block(p, j).cloned() {
                        *a.block_mut(i, j) -= cgemm(&l, &u_pj);
                    }
                }
                lower[i * nk + p] = Some(l);
            }
            inv_diag.push(inv);
        }
        Ok(BlockLu {
            nk,
            bs,
            band,
            inv_diag,
            lower,
            upper: a,
        })
    }
}

struct BlockLu {
    nk: usize,
    bs: usize,
    band: usize,
    inv_diag: Vec<DMatrix<C64>>,
    lower: Vec<Option<DMatrix<C64>>>,
    upper: BlockBanded,
}

impl BlockLu {
    fn solve(&self, b: &DVector<C64>) -> DVector<C64> {
        let (nk, bs) = (self.nk, self.bs);
        let mut y = b.clone();
        for p in 0..nk {
            for q in p.saturating_sub(self.band)..p {
                if let Some(l) = &self.lower[p * nk + q] {
                    let r = l * y.rows(q * bs, bs);
                    let mut yp = y.rows_mut(p * bs, bs);
                    yp -= r;
                }
            }
        }
        let mut x = DVector::zeros(nk * bs);
        for p in (0..nk).rev() {
            let mut r: DVector<C64> = y.rows(p * bs, bs).into_owned();
            for q in p + 1..=(p + self.band).min(nk - 1) {
                if let Some(u) = self.upper.block(p, q) {
                    r -= u * x.rows(q * bs, bs);
                }
            }
            x.rows_mut(p * bs, bs).copy_from(&(&self.inv_diag[p] * r));
        }
        x
    }
}

/// `A = F + K` on stacked per-wavenumber blocks `[u_k; omega_k]`.
#[derive(Debug, Clone)]
pub struct DiscretizedAK {
    pub alpha0: f64,
    pub grid: StripGrid,
    pub f_part: BlockBanded,
    pub k_part: BlockBanded,
    profile_modes: Modes,
    rec: Reconstruction,
}

/// Largest `|m|` with a non-negligible `U_m`.
fn bandwidth(modes: &[DVector<C64>]) -> usize {
    let kmax = modes.len() / 2;
    let top = modes.iter().map(|v| v.camax()).fold(0.0, f64::max);
    (0..=kmax)
        .rev()
        .find(|&m| modes[kmax + m].camax().max(modes[kmax - m].camax()) > 1e-14 * top)
        .unwrap_or(0)
}

/// Mean-zero Neumann resolvent form of `(1 + a^2 B)^{-1} (a^2 B - Q)` for
/// one wavenumber: `(2 a^2 (-D2 + b^2 + a^2)_N^{-1} - I) Q`.
fn h_block(g: &StripGrid, alpha0: f64, p: usize) -> Result<DMatrix<C64>> {
    let b = g.beta(p);
    let a2 = alpha0 * alpha0;
    let inv = bvp_inverse(&g.cheb, b * b + a2, true)?;
    // (D2 - s)^{-1} = -(-D2 + s)^{-1}
    let mut h = inv * (-2.0 * a2);
    for i in 0..=g.ny {
        h[(i, i)] -= 1.0;
    }
    let mut h = h.map(cr);
    if g.wavenumber(p) == 0 {
        let q = projector(g);
        h = &q * h * q;
    }
    Ok(h)
}

/// Discrete mean-removal `Q = I - 1 w^T` on the `k = 0` mode.
pub fn projector(g: &StripGrid) -> DMatrix<C64> {
    let n1 = g.ny + 1;
    let w = &g.quad;
    DMatrix::from_fn(n1, n1, |i, j| cr(if i == j { 1.0 } else { 0.0 } - w[j]))
}

pub fn assemble_ak(profile: &Shear3DProfile, alpha0: f64) -> Result<DiscretizedAK> {
    if !(alpha0 > 0.0) {
        return Err(Error::InvalidInput(format!("alpha0 must be positive, got {alpha0}")));
    }
    let g = profile.grid.clone();
    let (nk, n1) = (g.nk(), g.ny + 1);
    let bs = 2 * n1;
    let kmax = g.kmax();
    let um = profile.modes();
    let band = bandwidth(&um);
    let rec = Reconstruction::new(&g)?;
    let q0 = projector(&g);
    let hs: Vec<DMatrix<C64>> = (0..nk).map(|p| h_block(&g, alpha0, p)).collect::<Result<_>>()?;
    let w = &g.quad;
    let d = g.cheb.d1();
    let ia = I * alpha0;

    // (v, w) as maps of the stacked block [u; omega] of one wavenumber
    let vw: Vec<(DMatrix<C64>, DMatrix<C64>)> = (0..nk)
        .map(|q| {
            let (dv, dw) = &rec.from_div[q];
            let (cv, cw) = &rec.from_curl[q];
            let mut to_u = DMatrix::<C64>::identity(n1, n1) * (-ia);
            if g.wavenumber(q) == 0 {
                to_u = to_u * &q0;
            }
            let mut vm = DMatrix::zeros(n1, bs);
            let mut wm = DMatrix::zeros(n1, bs);
            vm.view_mut((0, 0), (n1, n1)).copy_from(&(dv * &to_u));
            vm.view_mut((0, n1), (n1, n1)).copy_from(cv);
            wm.view_mut((0, 0), (n1, n1)).copy_from(&(dw * &to_u));
            wm.view_mut((0, n1), (n1, n1)).copy_from(cw);
            (vm, wm)
        })
        .collect();

    let mut f_part = BlockBanded::zeros(nk, bs, band);
    let mut k_part = BlockBanded::zeros(nk, bs, band);
    for p in 0..nk {
        for q in 0..nk {
            let m = g.wavenumber(p) - g.wavenumber(q);
            if m.unsigned_abs() as usize > band {
                continue;
            }
            let mi = (m + kmax as i64) as usize;
            let f = f_part.block_mut(p, q);
            for i in 0..n1 {
                let val = -ia * um[mi][i];
                f[(i, i)] = val;
                f[(n1 + i, n1 + i)] = val;
            }
            let (vm, wm) = &vw[q];
            let (uvm, uwm) = (scale_rows(&um[mi], vm), scale_rows(&um[mi], wm));
            // U_y v + U_z w = div(U (v, w)) + i alpha0 U Q u
            let mut forcing = rcgemm(d, &uvm) + &uwm * (I * g.beta(p));
            {
                let mut fu = forcing.view_mut((0, 0), (n1, n1));
                let mut qu = if g.wavenumber(q) == 0 { q0.clone() } else { DMatrix::identity(n1, n1) };
                qu = scale_rows(&um[mi], &qu);
                fu += qu * ia;
            }
            let urow = cgemm(&hs[p], &forcing);
            // U_y w - U_z v = curl(U (v, w)) - U omega, differentiated in
            // conservative form so the product rule holds discretely
            let mut orow = (rcgemm(d, &uwm) - &uvm * (I * g.beta(p))) * (-ia);
            for i in 0..n1 {
                orow[(i, n1 + i)] += ia * um[mi][i];
            }
            let kb = k_part.block_mut(p, q);
            kb.view_mut((0, 0), (n1, bs)).copy_from(&urow);
            kb.view_mut((n1, 0), (n1, bs)).copy_from(&orow);
            if g.wavenumber(p) == 0 {
                // i alpha0 <U u>: the k = 0 mode of U u integrated in y
                let back = (-g.wavenumber(q) + kmax as i64) as usize;
                for j in 0..n1 {
                    let c = ia * um[back][j] * w[j];
                    for i in 0..n1 {
                        kb[(i, j)] += c;
                    }
                }
            }
        }
    }
    // the wall values of omega enter nothing; their rows are replaced by
    // omega = curl(v, w), applied to A so that lambda omega = curl(lambda v, lambda w)
    for p in 0..nk {
        let (vm, wm) = &vw[p];
        let curl = rcgemm(d, wm) - vm * (I * g.beta(p));
        for r in [0, g.ny] {
            let c = curl.row(r).into_owned();
            for q in 0..nk {
                let (Some(fb), Some(kb)) = (f_part.block(p, q), k_part.block(p, q)) else { continue };
                let row = &c * (fb + kb) - fb.row(n1 + r);
                k_part.block_mut(p, q).row_mut(n1 + r).copy_from(&row);
            }
        }
    }
    Ok(DiscretizedAK {
        alpha0,
        grid: g,
        f_part,
        k_part,
        profile_modes: um,
        rec,
    })
}

impl DiscretizedAK {
    pub fn operator(&self) -> BlockBanded {
        self.f_part.add(&self.k_part)
    }

    fn split(&self, x: &DVector<C64>) -> (Modes, Modes) {
        let n1 = self.grid.ny + 1;
        let bs = 2 * n1;
        let u = (0..self.grid.nk()).map(|p| x.rows(p * bs, n1).into_owned()).collect();
        let o = (0..self.grid.nk()).map(|p| x.rows(p * bs + n1, n1).into_owned()).collect();
        (u, o)
    }

    /// `(v, w)` attached to `(u, omega)` in the definition of `K`.
    pub fn velocity(&self, u: &[DVector<C64>], omega: &[DVector<C64>]) -> (Modes, Modes) {
        let g = &self.grid;
        let mut f1: Modes = u.iter().map(|v| v * (-I * self.alpha0)).collect();
        let k0 = g.kmax();
        let mean = g.mode_mean(&f1[k0]);
        f1[k0].add_scalar_mut(-mean);
        self.rec.apply(&f1, omega)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeResiduals {
    /// Residuals of the three momentum equations and of the divergence
    /// condition, relative to the largest velocity component. Products
    /// with `U` are differentiated in the same conservative form as in the
    /// operator, and `P` solves its Neumann problem.
    pub momentum_x: f64,
    pub momentum_y: f64,
    pub momentum_z: f64,
    pub divergence: f64,
    /// `omega - (w_y - v_z)`.
    pub curl: f64,
    pub mean_u: f64,
    pub circulation_bottom: f64,
    pub circulation_top: f64,
    pub wall_v: f64,
    /// `|div(U (v, w)) + i alpha0 U u - (U_y v + U_z w)|`, zero in exact
    /// arithmetic on resolved fields; a resolution indicator.
    pub product_rule_defect: f64,
}

impl ModeResiduals {
    pub fn equations_max(&self) -> f64 {
        [self.momentum_x, self.momentum_y, self.momentum_z, self.divergence]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn invariants_max(&self) -> f64 {
        [
            self.curl,
            self.mean_u,
            self.circulation_bottom,
            self.circulation_top,
            self.wall_v,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct GrowingMode3D {
    pub alpha0: f64,
    pub c: C64,
    pub lambda: C64,
    pub grid: (usize, usize),
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub u: DMatrix<C64>,
    pub v: DMatrix<C64>,
    pub w: DMatrix<C64>,
    pub p: DMatrix<C64>,
    pub omega: DMatrix<C64>,
    pub residuals: ModeResiduals,
    /// Eigenvalue change `|c_N - c_{3N/2}|` under refinement in `y`.
    pub refinement_delta: f64,
    /// Spectral tail of `u`: top-eighth Chebyshev coefficients and the
    /// outermost Fourier mode, relative to the largest coefficient.
    pub tail: f64,
    /// `||A x - lambda x|| / (||A|| ||x||)`.
    pub operator_residual: f64,
}

impl GrowingMode3D {
    pub fn growth_rate(&self) -> f64 {
        self.lambda.re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shear3DOptions {
    pub ny: usize,
    pub nz: usize,
    pub lz: f64,
    /// Relative eigen-residual at which inverse iteration stops.
    pub tol: f64,
    /// Repeat each mode on a `3/2` finer `y` grid.
    pub two_grid: bool,
    /// Largest `|c_N - c_{3N/2}|` of a retained mode.
    pub two_grid_tol: f64,
}

impl Default for Shear3DOptions {
    fn default() -> Self {
        Self {
            ny: 128,
            nz: 16,
            lz: 1.0,
            tol: 1e-12,
            two_grid: true,
            two_grid_tol: 1e-6,
        }
    }
}

impl Shear3DOptions {
    pub fn grid(&self) -> Result<StripGrid> {
        StripGrid::new(self.ny, self.nz, self.lz)
    }
}

/// Eigenvalues of one diagonal block, with the padded block eigenvectors.
fn block_spectrum(a: &BlockBanded, p: usize) -> Result<Vec<(C64, DVector<C64>)>> {
    let blk = a
        .block(p, p)
        .cloned()
        .unwrap_or_else(|| DMatrix::zeros(a.bs, a.bs));
    let s = ComplexSchur::new(blk)?;
    Ok(s.eigenvalues()
        .into_iter()
        .enumerate()
        .map(|(k, lam)| {
            let v = s.eigenvector(k);
            let mut x = DVector::zeros(a.dim());
            x.rows_mut(p * a.bs, a.bs).copy_from(&v);
            (lam, x)
        })
        .collect())
}

/// Largest `Re lambda` of linear shear, whose exact spectrum is on the
/// imaginary axis, on the same grid and wavenumber.
pub fn noise_floor_3d(grid: &StripGrid, alpha0: f64) -> Result<f64> {
    let lin = Shear3DProfile::z_independent(grid.clone(), &ShearProfile::Linear)?;
    let a = assemble_ak(&lin, alpha0)?.operator();
    let mut floor: f64 = 0.0;
    // the spectrum of block -k mirrors that of block k
    for p in grid.kmax()..grid.nk() {
        for (lam, _) in block_spectrum(&a, p)? {
            floor = floor.max(lam.re);
        }
    }
    Ok(floor.max(0.0))
}

/// Smallest `Re lambda` counted as growth: the Rayleigh threshold applied
/// to `Im c = Re lambda / alpha0`.
pub fn growth_threshold(grid: &StripGrid, alpha0: f64) -> Result<f64> {
    Ok(instability_threshold(noise_floor_3d(grid, alpha0)? / alpha0) * alpha0)
}

struct Converged {
    lambda: C64,
    x: DVector<C64>,
    residual: f64,
}

/// Shifted inverse iteration on the coupled operator, restarting the
/// factorization when the estimate has moved away from the shift.
fn inverse_iteration(a: &BlockBanded, seed: C64, start: DVector<C64>, tol: f64) -> Result<Converged> {
    let norm_a = a.inf_norm();
    let nudge = C64::new(1.0, 1.0) * (1e-9 * (1.0 + seed.norm()));
    let mut shift = seed + nudge;
    let mut lu = a.factor(shift)?;
    let mut x = start;
    x /= cr(x.norm());
    let mut residual = f64::INFINITY;
    for it in 0..40 {
        let y = lu.solve(&x);
        let ny = y.norm();
        if !ny.is_finite() || ny == 0.0 {
            break;
        }
        x = y / cr(ny);
        let ax = a.mul(&x);
        let lambda = x.dotc(&ax);
        let r = &ax - &x * lambda;
        residual = r.camax() / (norm_a * x.camax());
        if residual < tol {
            return Ok(Converged { lambda, x, residual });
        }
        if it % 6 == 5 && (lambda - shift).norm() > 1e-6 * (1.0 + lambda.norm()) {
            shift = lambda + nudge;
            lu = a.factor(shift)?;
        }
    }
    Err(Error::NewtonFailed {
        what: "3D eigenpair (inverse iteration)",
        residual,
    })
}

fn tail_of(g: &StripGrid, u: &[DVector<C64>]) -> f64 {
    let k0 = g.kmax();
    let re: Vec<f64> = u[k0].iter().map(|z| z.re).collect();
    let im: Vec<f64> = u[k0].iter().map(|z| z.im).collect();
    let ty = g.cheb.tail_ratio(&re).max(g.cheb.tail_ratio(&im));
    let top = u.iter().map(|v| v.camax()).fold(0.0, f64::max);
    let outer = u[0].camax().max(u[u.len() - 1].camax());
    if top == 0.0 {
        0.0
    } else {
        ty.max(outer / top)
    }
}

fn build_mode(ak: &DiscretizedAK, conv: Converged) -> GrowingMode3D {
    let g = &ak.grid;
    let ia = I * ak.alpha0;
    let c = conv.lambda / (-ia);
    let (mut u, mut omega) = ak.split(&conv.x);
    let (mut v, mut w) = ak.velocity(&u, &omega);
    // scale so that the largest velocity coefficient is 1
    let mut big = C64::new(0.0, 0.0);
    for m in u.iter().chain(&v).chain(&w) {
        for z in m.iter() {
            if z.norm() > big.norm() {
                big = *z;
            }
        }
    }
    if big.norm() > 0.0 {
        for m in u.iter_mut().chain(omega.iter_mut()).chain(v.iter_mut()).chain(w.iter_mut()) {
            *m /= big;
        }
    }
    let um = &ak.profile_modes;
    let uy = dy_modes(g, um);
    let uz: Modes = um.iter().enumerate().map(|(p, x)| x * (I * g.beta(p))).collect();
    let mut shifted = um.clone();
    shifted[g.kmax()].add_scalar_mut(-c);
    let d = g.cheb.d1().map(cr);
    let k0 = g.kmax();

    // U_y v + U_z w in the conservative form used by the operator, and
    // pointwise; their gap is a product-rule (resolution) defect
    let uv_plain = convolve(um, &v);
    let uw_plain = convolve(um, &w);
    let uu_plain = convolve(um, &u);
    let lift: Modes = (0..g.nk())
        .map(|k| &d * &uv_plain[k] + &uw_plain[k] * (I * g.beta(k)) + &uu_plain[k] * ia)
        .collect();
    let lift_pointwise: Modes = convolve(&uy, &v)
        .iter()
        .zip(convolve(&uz, &w))
        .map(|(a, b)| a + b)
        .collect();

    // P from its Neumann problem -Delta P = 2 i alpha0 (U_y v + U_z w)
    let adv = convolve(&shifted, &u);
    let q0 = projector(g);
    let mut p: Modes = (0..g.nk())
        .map(|k| {
            let b2 = g.beta(k).powi(2) + ak.alpha0 * ak.alpha0;
            let inv = bvp_inverse(&g.cheb, b2, true).expect("invertible for alpha0 > 0").map(cr);
            if k == k0 {
                &q0 * (inv * (&q0 * &lift[k])) * (-2.0 * ia)
            } else {
                inv * &lift[k] * (-2.0 * ia)
            }
        })
        .collect();
    // the constant in P_0 is fixed by the mean of the x-momentum equation
    let gauge = g.mode_mean(&(&adv[k0] * ia + &lift[k0] + &p[k0] * ia)) / ia;
    p[k0].add_scalar_mut(-gauge);

    let mx = |f: &[DVector<C64>]| f.iter().map(|x| x.camax()).fold(0.0, f64::max);
    let vel = mx(&u).max(mx(&v)).max(mx(&w)).max(f64::MIN_POSITIVE);
    let dp: Modes = p.iter().map(|x| &d * x).collect();
    let uv = convolve(&shifted, &v);
    let uw = convolve(&shifted, &w);
    let mom_x: Modes = adv
        .iter()
        .zip(&lift)
        .zip(&p)
        .map(|((a, l), pp)| a * ia + l + pp * ia)
        .collect();
    let mom_y: Modes = uv.iter().zip(&dp).map(|(a, b)| a * ia + b).collect();
    let mom_z: Modes = uw
        .iter()
        .zip(&p)
        .enumerate()
        .map(|(k, (a, pp))| a * ia + pp * (I * g.beta(k)))
        .collect();
    let product_gap: Modes = lift.iter().zip(&lift_pointwise).map(|(a, b)| a - b).collect();
    let div: Modes = (0..g.nk())
        .map(|k| &u[k] * ia + &d * &v[k] + &w[k] * (I * g.beta(k)))
        .collect();
    let curl: Modes = (0..g.nk())
        .map(|k| &d * &w[k] - &v[k] * (I * g.beta(k)) - &omega[k])
        .collect();
    let scale_eq = vel * (ak.alpha0 + 1.0) * (1.0 + mx(um));
    let n = g.ny;
    let residuals = ModeResiduals {
        momentum_x: mx(&mom_x) / scale_eq,
        momentum_y: mx(&mom_y) / scale_eq,
        momentum_z: mx(&mom_z) / scale_eq,
        divergence: mx(&div) / (vel * (ak.alpha0 + 1.0)),
        curl: mx(&curl) / (vel + mx(&omega)),
        mean_u: g.mode_mean(&u[k0]).norm() / vel,
        circulation_bottom: (w[k0][0] * g.lz).norm() / vel,
        circulation_top: (w[k0][n] * g.lz).norm() / vel,
        wall_v: v.iter().map(|x| x[0].norm().max(x[n].norm())).fold(0.0, f64::max) / vel,
        product_rule_defect: mx(&product_gap) / scale_eq,
    };
    let tail = tail_of(g, &u);
    GrowingMode3D {
        alpha0: ak.alpha0,
        c,
        lambda: conv.lambda,
        grid: (g.ny, g.nz),
        y: g.y().to_vec(),
        z: g.z.clone(),
        u: g.from_modes(&u),
        v: g.from_modes(&v),
        w: g.from_modes(&w),
        p: g.from_modes(&p),
        omega: g.from_modes(&omega),
        residuals,
        refinement_delta: 0.0,
        tail,
        operator_residual: conv.residual,
    }
}

/// The same profile on a finer `y` grid by Chebyshev interpolation.
fn refine_profile(profile: &Shear3DProfile, ny: usize) -> Result<Shear3DProfile> {
    let g = StripGrid::new(ny, profile.grid.nz, profile.grid.lz)?;
    let coarse = &profile.grid.cheb;
    let mut values = DMatrix::zeros(ny + 1, g.nz);
    for j in 0..g.nz {
        let col: Vec<f64> = profile.values.column(j).iter().copied().collect();
        for (i, v) in coarse.resample(&col, &g.cheb).into_iter().enumerate() {
            values[(i, j)] = v;
        }
    }
    Ok(Shear3DProfile {
        grid: g,
        values,
        base: profile.base.clone(),
        perturbation_size: profile.perturbation_size,
    })
}

/// Block vector `[u_k; omega_k]` interpolated onto another `y` grid.
fn resample_vector(from: &StripGrid, to: &StripGrid, x: &DVector<C64>) -> DVector<C64> {
    let (n1, m1) = (from.ny + 1, to.ny + 1);
    let mut out = DVector::zeros(from.nk() * 2 * m1);
    for part in 0..2 * from.nk() {
        let seg: Vec<C64> = x.rows(part * n1, n1).iter().copied().collect();
        let fine = from.cheb.resample(&seg, &to.cheb);
        out.rows_mut(part * m1, m1).copy_from_slice(&fine);
    }
    out
}

/// Eigenvector of the `k = 0` block whose eigenvalue is nearest `seed`.
fn mean_block_start(a: &BlockBanded, g: &StripGrid, seed: C64) -> Result<DVector<C64>> {
    block_spectrum(a, g.kmax())?
        .into_iter()
        .min_by(|x, y| (x.0 - seed).norm().total_cmp(&(y.0 - seed).norm()))
        .map(|p| p.1)
        .ok_or_else(|| Error::Eigensolver("empty block spectrum".into()))
}

/// Lazily assembled operator on the `3/2` finer grid.
struct FineGrid<'a> {
    profile: &'a Shear3DProfile,
    alpha0: f64,
    built: Option<(StripGrid, BlockBanded)>,
}

impl FineGrid<'_> {
    fn ensure(&mut self) -> Result<(&StripGrid, &BlockBanded)> {
        if self.built.is_none() {
            let fine = refine_profile(self.profile, self.profile.grid.ny * 3 / 2)?;
            let a = assemble_ak(&fine, self.alpha0)?.operator();
            self.built = Some((fine.grid, a));
        }
        let (g, a) = self.built.as_ref().expect("assembled above");
        Ok((g, a))
    }

    /// `|c_N - c_{3N/2}|` for a converged pair, infinite when the fine
    /// iteration does not converge.
    fn delta(&mut self, coarse: &StripGrid, conv: &Converged, tol: f64) -> Result<f64> {
        let alpha0 = self.alpha0;
        let (g, a) = self.ensure()?;
        let start = resample_vector(coarse, g, &conv.x);
        match inverse_iteration(a, conv.lambda, start, tol) {
            Ok(f) => Ok(((f.lambda - conv.lambda) / (I * alpha0)).norm()),
            Err(Error::NewtonFailed { .. }) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    /// Eigenvalues of one diagonal block on the fine grid.
    fn block_eigenvalues(&mut self, p: usize) -> Result<Vec<C64>> {
        let (_, a) = self.ensure()?;
        Ok(block_spectrum(a, p)?.into_iter().map(|e| e.0).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscardReason {
    /// Moved by more than the two-grid tolerance under refinement.
    GridSensitive,
    /// Inverse iteration on the coupled operator did not converge.
    NotConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscardedMode {
    pub c: C64,
    pub refinement_delta: f64,
    pub reason: DiscardReason,
}

#[derive(Debug, Clone)]
pub struct Spectrum3D {
    /// Retained modes, most unstable first.
    pub modes: Vec<GrowingMode3D>,
    pub discarded: Vec<DiscardedMode>,
    /// `Re lambda` above which an eigenvalue is a candidate.
    pub threshold: f64,
}

impl Spectrum3D {
    pub fn most_unstable(&self) -> Option<&GrowingMode3D> {
        self.modes.first()
    }
}

/// Unstable modes at streamwise wavenumber `alpha0`.
///
/// Candidates are the eigenvalues of the diagonal (single-wavenumber)
/// blocks above the linear-shear noise threshold. Each is refined on the
/// coupled operator and kept when it moves by less than `two_grid_tol`
/// on a `3/2` finer `y` grid; the rest are listed as discarded.
pub fn solve_3d_modes(profile: &Shear3DProfile, alpha0: f64, opts: &Shear3DOptions) -> Result<Spectrum3D> {
    let threshold = growth_threshold(&profile.grid, alpha0)?;
    solve_above(profile, alpha0, opts, threshold)
}

fn solve_above(profile: &Shear3DProfile, alpha0: f64, opts: &Shear3DOptions, threshold: f64) -> Result<Spectrum3D> {
    let ak = assemble_ak(profile, alpha0)?;
    let a = ak.operator();
    let mut fine = FineGrid {
        profile,
        alpha0,
        built: None,
    };
    // block eigenvalues that do not survive refinement are continuous
    // spectrum artifacts and are not worth refining on the coupled operator
    let screen = 100.0 * opts.two_grid_tol * alpha0;
    let mut candidates = Vec::new();
    let mut discarded = Vec::new();
    for p in 0..ak.grid.nk() {
        let coarse: Vec<_> = block_spectrum(&a, p)?
            .into_iter()
            .filter(|(lam, _)| lam.re > threshold)
            .collect();
        if coarse.is_empty() {
            continue;
        }
        let refined = if opts.two_grid { fine.block_eigenvalues(p)? } else { Vec::new() };
        for (lam, x) in coarse {
            let gap = refined.iter().map(|r| (r - lam).norm()).fold(f64::INFINITY, f64::min);
            if !opts.two_grid || gap < screen {
                candidates.push((lam, x));
            } else {
                discarded.push(DiscardedMode {
                    c: lam / (-I * alpha0),
                    refinement_delta: gap / alpha0,
                    reason: DiscardReason::GridSensitive,
                });
            }
        }
    }
    candidates.sort_by(|x, y| y.0.re.total_cmp(&x.0.re));
    let ia = I * alpha0;
    let mut seen: Vec<C64> = Vec::new();
    let near = |seen: &[C64], lam: C64| seen.iter().any(|s| (s - lam).norm() < 1e-8 * (1.0 + lam.norm()));
    let mut modes = Vec::new();
    for (lam, x) in candidates {
        if near(&seen, lam) {
            continue;
        }
        let conv = match inverse_iteration(&a, lam, x, opts.tol) {
            Ok(c) => c,
            Err(Error::NewtonFailed { .. }) => {
                seen.push(lam);
                discarded.push(DiscardedMode {
                    c: lam / (-ia),
                    refinement_delta: f64::NAN,
                    reason: DiscardReason::NotConverged,
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        if conv.lambda.re <= threshold || near(&seen, conv.lambda) {
            seen.push(lam);
            continue;
        }
        seen.push(lam);
        seen.push(conv.lambda);
        let delta = if opts.two_grid {
            fine.delta(&ak.grid, &conv, opts.tol)?
        } else {
            0.0
        };
        if delta < opts.two_grid_tol {
            let mut mode = build_mode(&ak, conv);
            mode.refinement_delta = delta;
            modes.push(mode);
        } else {
            discarded.push(DiscardedMode {
                c: conv.lambda / (-ia),
                refinement_delta: delta,
                reason: DiscardReason::GridSensitive,
            });
        }
    }
    modes.sort_by(|x: &GrowingMode3D, y| y.lambda.re.total_cmp(&x.lambda.re));
    Ok(Spectrum3D {
        modes,
        discarded,
        threshold,
    })
}

/// The coupled mode continuing the `k = 0` block eigenvalue nearest
/// `c_seed`, with its two-grid delta when `opts.two_grid` is set.
pub fn track_3d_mode(profile: &Shear3DProfile, alpha0: f64, c_seed: C64, opts: &Shear3DOptions) -> Result<GrowingMode3D> {
    let seed = -I * alpha0 * c_seed;
    let ak = assemble_ak(profile, alpha0)?;
    let a = ak.operator();
    let start = mean_block_start(&a, &ak.grid, seed)?;
    let conv = inverse_iteration(&a, seed, start, opts.tol)?;
    let delta = if opts.two_grid {
        FineGrid {
            profile,
            alpha0,
            built: None,
        }
        .delta(&ak.grid, &conv, opts.tol)?
    } else {
        0.0
    };
    let mut mode = build_mode(&ak, conv);
    mode.refinement_delta = delta;
    Ok(mode)
}

/// Discrete `W^{1,4}` norm `(int int |g|^4 + |grad g|^4)^{1/4}`.
pub fn w14_norm(profile_grid: &StripGrid, g: &DMatrix<f64>) -> f64 {
    let gc = g.map(cr);
    let gy = profile_grid.dy(&gc);
    let gz = profile_grid.dz(&gc);
    let integrand = DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| {
        let grad = gy[(i, j)].norm_sqr() + gz[(i, j)].norm_sqr();
        cr(g[(i, j)].powi(4) + grad * grad)
    });
    (profile_grid.mean(&integrand).re * profile_grid.lz).powf(0.25)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistenceRow {
    pub eps: f64,
    pub c: Option<C64>,
    /// `|c(eps) - c0|`.
    pub defect: Option<f64>,
    /// No resolved unstable mode near `c0` at this size.
    pub lost: bool,
    /// `eps ||g||_{W^{1,4}}` with `g` scaled to unit maximum.
    pub w14: f64,
    pub refinement_delta: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PersistenceTable {
    pub alpha0: f64,
    /// Inviscid 2D eigenvalue of the base flow.
    pub c0: C64,
    pub rows: Vec<PersistenceRow>,
    /// Defects increase with `eps` over the rows that kept the mode.
    pub increasing: bool,
    /// The tracked mode of each row, `None` where it was lost.
    #[serde(skip)]
    pub modes: Vec<Option<GrowingMode3D>>,
}

fn sweep_row(
    base: &ShearProfile,
    g: &(dyn Fn(f64, f64) -> f64 + Sync),
    eps: f64,
    alpha0: f64,
    c0: C64,
    threshold: f64,
    opts: &Shear3DOptions,
) -> Result<(PersistenceRow, Option<GrowingMode3D>)> {
    let grid = opts.grid()?;
    let profile = Shear3DProfile::perturbed(grid.clone(), base, eps, g)?;
    let gv = DMatrix::from_fn(grid.ny + 1, grid.nz, |i, j| g(grid.y()[i], grid.z[j]));
    let gmax = gv.camax();
    let w14 = if gmax > 0.0 { eps * w14_norm(&grid, &(gv / gmax)) } else { 0.0 };
    let row = match track_3d_mode(&profile, alpha0, c0, opts) {
        Ok(m) if m.lambda.re > threshold && m.refinement_delta < opts.two_grid_tol => (
            PersistenceRow {
                eps,
                c: Some(m.c),
                defect: Some((m.c - c0).norm()),
                lost: false,
                w14,
                refinement_delta: m.refinement_delta,
                residual: m.residuals.equations_max(),
            },
            Some(m),
        ),
        Ok(_) | Err(Error::NewtonFailed { .. }) => (
            PersistenceRow {
                eps,
                c: None,
                defect: None,
                lost: true,
                w14,
                refinement_delta: f64::NAN,
                residual: f64::NAN,
            },
            None,
        ),
        Err(e) => return Err(e),
    };
    Ok(row)
}

/// Follows the unstable 2D mode of `base` at `alpha0` into
/// `U = base + eps g` for each `eps`.
pub fn persistence_sweep(
    base: &ShearProfile,
    g: &(dyn Fn(f64, f64) -> f64 + Sync),
    eps_list: &[f64],
    alpha0: f64,
    opts: &Shear3DOptions,
) -> Result<PersistenceTable> {
    let ray = solve_rayleigh(base, alpha0, None, &RayleighOptions::for_profile(base))?;
    let c0 = ray
        .mode()
        .ok_or_else(|| Error::NoCertificate(format!("base flow is stable at alpha = {alpha0}")))?
        .c;
    let threshold = growth_threshold(&opts.grid()?, alpha0)?;
    #[cfg(feature = "parallel")]
    let out: Vec<(PersistenceRow, Option<GrowingMode3D>)> = {
        use rayon::prelude::*;
        eps_list
            .par_iter()
            .map(|&e| sweep_row(base, g, e, alpha0, c0, threshold, opts))
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let out: Vec<(PersistenceRow, Option<GrowingMode3D>)> = eps_list
        .iter()
        .map(|&e| sweep_row(base, g, e, alpha0, c0, threshold, opts))
        .collect::<Result<_>>()?;
    let (rows, modes): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let mut kept: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.defect.map(|d| (r.eps, d))).collect();
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let increasing = kept.windows(2).all(|w| w[1].1 > w[0].1);
    Ok(PersistenceTable {
        alpha0,
        c0,
        rows,
        increasing,
        modes,
    })
}

/// Direct discretization of the coupled `(v, w)` equations
///
/// ```text
/// (U - c)(v_yy - a^2 v + w_yz) - U_yy v - U_yz w - U_z w_y + U_y w_z = 0
/// (U - c)(w_zz - a^2 w + v_yz) - U_zz w - U_yz v - U_y v_z + U_z v_y = 0
/// ```
///
/// with `v = 0` on the walls, as a dense pencil `A x = c B x`. Meant for
/// coarse grids only.
pub fn direct_pencil(profile: &Shear3DProfile, alpha0: f64) -> (DMatrix<C64>, DMatrix<C64>) {
    let g = &profile.grid;
    let (n, nk) = (g.ny, g.nk());
    let kmax = g.kmax() as i64;
    let d1 = g.cheb.d1().map(cr);
    let d2 = g.cheb.d2().map(cr);
    let um = profile.modes();
    let uy = dy_modes(g, &um);
    let uyy = dy_modes(g, &uy);
    let bz = |m: usize| I * g.beta(m);
    let uz: Modes = um.iter().enumerate().map(|(m, x)| x * bz(m)).collect();
    let uyz: Modes = uy.iter().enumerate().map(|(m, x)| x * bz(m)).collect();
    let uzz: Modes = uz.iter().enumerate().map(|(m, x)| x * bz(m)).collect();
    let a2 = alpha0 * alpha0;
    // unknowns per wavenumber: v at interior nodes, then w at all nodes
    let nv = n - 1;
    let bs = nv + n + 1;
    let dim = nk * bs;
    let mut a = DMatrix::<C64>::zeros(dim, dim);
    let mut b = DMatrix::<C64>::zeros(dim, dim);
    let vcol = |q: usize, j: usize| q * bs + j - 1;
    let wcol = |q: usize, j: usize| q * bs + nv + j;
    for p in 0..nk {
        let kp = p as i64 - kmax;
        for q in 0..nk {
            let m = kp - (q as i64 - kmax);
            if m.abs() > kmax {
                continue;
            }
            let mi = (m + kmax) as usize;
            let bq = bz(q);
            // eq1 rows: interior nodes
            for i in 1..n {
                let row = p * bs + i - 1;
                let (u, uy_, uyy_, uz_, uyz_) = (um[mi][i], uy[mi][i], uyy[mi][i], uz[mi][i], uyz[mi][i]);
                for j in 1..n {
                    let mut val = u * (d2[(i, j)] - if i == j { cr(a2) } else { cr(0.0) });
                    if i == j {
                        val -= uyy_;
                    }
                    a[(row, vcol(q, j))] += val;
                }
                for j in 0..=n {
                    let mut val = u * bq * d1[(i, j)] - uz_ * d1[(i, j)];
                    if i == j {
                        val += -uyz_ + uy_ * bq;
                    }
                    a[(row, wcol(q, j))] += val;
                }
                if m == 0 {
                    for j in 1..n {
                        b[(row, vcol(q, j))] += d2[(i, j)] - if i == j { cr(a2) } else { cr(0.0) };
                    }
                    for j in 0..=n {
                        b[(row, wcol(q, j))] += bq * d1[(i, j)];
                    }
                }
            }
            // eq2 rows: all nodes
            for i in 0..=n {
                let row = p * bs + nv + i;
                let (u, uy_, uz_, uyz_, uzz_) = (um[mi][i], uy[mi][i], uz[mi][i], uyz[mi][i], uzz[mi][i]);
                a[(row, wcol(q, i))] += u * (bq * bq - cr(a2)) - uzz_;
                for j in 1..n {
                    let mut val = u * bq * d1[(i, j)] + uz_ * d1[(i, j)];
                    if i == j {
                        val += -uyz_ - uy_ * bq;
                    }
                    a[(row, vcol(q, j))] += val;
                }
                if m == 0 {
                    b[(row, wcol(q, i))] += bq * bq - cr(a2);
                    for j in 1..n {
                        b[(row, vcol(q, j))] += bq * d1[(i, j)];
                    }
                }
            }
        }
    }
    (a, b)
}

/// Eigenvalue `c` of the direct `(v, w)` discretization nearest `seed`.
pub fn direct_eigenvalue(profile: &Shear3DProfile, alpha0: f64, seed: C64) -> Result<C64> {
    let (a, b) = direct_pencil(profile, alpha0);
    let pair = crate::linalg::refine_eigenpair(&a, &b, seed, None, 1e-10)?;
    Ok(pair.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_round_trip() {
        let g2 = StripGrid::new(8, 8, 1.0).unwrap();
        let f2 = DMatrix::from_fn(9, 8, |i, j| C64::new(i as f64 + (2.0 * PI * g2.z()[j]).sin(), 0.3));
        assert!((g2.from_modes(&g2.to_modes(&f2)) - f2).camax() < 1e-13);
        // the Nyquist mode is dropped
        let nyq = DMatrix::from_fn(9, 8, |_, j| C64::new((8.0 * PI * g2.z()[j]).cos(), 0.0));
        assert!(g2.from_modes(&g2.to_modes(&nyq)).camax() < 1e-13);
    }

    #[test]
    fn block_lu_solves_banded_systems() {
        let mut m = BlockBanded::zeros(5, 3, 1);
        for p in 0..5usize {
            for q in 0..5 {
                if p.abs_diff(q) <= 1 {
                    *m.block_mut(p, q) = DMatrix::from_fn(3, 3, |i, j| {
                        C64::new(((p * 7 + q * 3 + i * 5 + j) as f64).sin() + if p == q && i == j { 4.0 } else { 0.0 }, 0.1 * j as f64)
                    });
                }
            }
        }
        let x = DVector::from_fn(15, |i, _| C64::new(i as f64, 1.0));
        let b = m.mul(&x);
        let lu = m.factor(C64::new(0.5, 0.0)).unwrap();
        let shifted = &b - &x * C64::new(0.5, 0.0);
        assert!((lu.solve(&shifted) - &x).camax() < 1e-10);
        assert!((m.to_dense() * &x - b).camax() < 1e-12);
    }
}
