//! Cat's-eye travelling waves bifurcating from `U_n` at the line `y = 1/2`.
//!
//! In the frame moving with `c = 1/2` the relative stream function of the
//! shear is `psi*_rel(y) = int_{1/2}^y (U - 1/2)`, and steady Euler flows
//! solve `alpha^2 psi_xixi + psi_yy = f(psi)` with `f` read off the shear
//! through `psi*_rel'' = U' = f(psi*_rel)`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::profiles::ShearProfile;
use crate::spectral::{cheb_interpolate, ChebGrid};
use crate::sturm::{neutral_witness_at, InstabilityCertificate, NeutralWitness};
use crate::{Error, Result};

/// Line of the eye centres, where `U = 1/2`.
const EYE_LINE: f64 = 0.5;
const KNOTS_PER_N: usize = 4000;
/// Headroom of the table beyond the shear range `[0, psi*_rel(0)]`, in
/// units of that range.
const TABLE_MARGIN: f64 = 0.5;

/// `f` as a cubic Hermite table in `s = psi_rel`, with exact slopes.
///
/// Knots on `s >= 0` come from `y = 1/2 + t`; the negative side, reached
/// inside the eyes, continues `psi*_rel` along `y = 1/2 + i t`, where both
/// `s` and `f` stay real because they are even in `t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonlinearityF {
    pub n: u32,
    pub amplitude: f64,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
    /// Range of `psi*_rel` over the channel.
    pub domain: (f64, f64),
}

fn osc_params(profile: &ShearProfile) -> Result<(u32, f64)> {
    match profile {
        ShearProfile::Oscillatory { n, amplitude } => Ok((*n, *amplitude)),
        other => Err(Error::InvalidProfile(format!(
            "cat's-eye waves need the oscillatory profile, got {}",
            other.kind_name()
        ))),
    }
}

/// `psi*_rel` of `U_n` in closed form.
pub fn psi_star_rel(n: u32, amplitude: f64, y: f64) -> f64 {
    let t = y - EYE_LINE;
    let k = 4.0 * n as f64 * PI;
    0.5 * t * t + amplitude / (n as f64 * k) * (1.0 - (k * t).cos())
}

/// Real point `y = 1/2 + t`: `(s, f, f')`.
fn real_knot(n: u32, a: f64, t: f64) -> (f64, f64, f64) {
    let k = 4.0 * n as f64 * PI;
    let an = a / n as f64;
    let s = 0.5 * t * t + an / k * (1.0 - (k * t).cos());
    let f = 1.0 + an * k * (k * t).cos();
    let du = t + an * (k * t).sin();
    let slope = if t.abs() < 1e-6 {
        -an * k.powi(3) / (1.0 + an * k)
    } else {
        -an * k * k * (k * t).sin() / du
    };
    (s, f, slope)
}

/// Imaginary point `y = 1/2 + i t`: `(s, f, f')`.
fn imag_knot(n: u32, a: f64, t: f64) -> (f64, f64, f64) {
    let k = 4.0 * n as f64 * PI;
    let an = a / n as f64;
    let s = -0.5 * t * t - an / k * ((k * t).cosh() - 1.0);
    let f = 1.0 + an * k * (k * t).cosh();
    let slope = if t.abs() < 1e-6 {
        -an * k.powi(3) / (1.0 + an * k)
    } else {
        an * k * k * (k * t).sinh() / (-t - an * (k * t).sinh())
    };
    (s, f, slope)
}

fn bisect_t(g: impl Fn(f64) -> f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Tabulates `f` for an oscillatory profile with `U' > 0`.
pub fn build_f(profile: &ShearProfile) -> Result<NonlinearityF> {
    let (n, a) = osc_params(profile)?;
    let min_slope = 1.0 - 4.0 * PI * a.abs();
    if min_slope <= 0.0 {
        return Err(Error::NonMonotone(min_slope));
    }
    let top = psi_star_rel(n, a, 0.0);
    let margin = TABLE_MARGIN * top;
    let t_real = bisect_t(|t| real_knot(n, a, t).0, top + margin);
    let t_imag = bisect_t(|t| -imag_knot(n, a, t).0, margin);
    let m = KNOTS_PER_N * n as usize;
    let mut rows: Vec<(f64, f64, f64)> = (1..=m)
        .rev()
        .map(|k| imag_knot(n, a, t_imag * k as f64 / m as f64))
        .collect();
    rows.extend((0..=m).map(|k| real_knot(n, a, t_real * k as f64 / m as f64)));
    if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::NonMonotone(min_slope));
    }
    Ok(NonlinearityF {
        n,
        amplitude: a,
        knots: rows.iter().map(|r| r.0).collect(),
        values: rows.iter().map(|r| r.1).collect(),
        slopes: rows.iter().map(|r| r.2).collect(),
        domain: (0.0, top),
    })
}

impl NonlinearityF {
    pub fn table_range(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    pub fn contains(&self, s: f64) -> bool {
        let (lo, hi) = self.table_range();
        s >= lo && s <= hi
    }

    /// `(f(s), f'(s))`; `None` outside the table.
    pub fn eval(&self, s: f64) -> Option<(f64, f64)> {
        if !self.contains(s) {
            return None;
        }
        let k = self.knots.partition_point(|&x| x <= s).clamp(1, self.knots.len() - 1) - 1;
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let h = x1 - x0;
        let t = (s - x0) / h;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let (t2, t3) = (t * t, t * t * t);
        let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let d = (6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1;
        Some((v, d / h))
    }

    pub fn value(&self, s: f64) -> Option<f64> {
        self.eval(s).map(|e| e.0)
    }

    pub fn slope(&self, s: f64) -> Option<f64> {
        self.eval(s).map(|e| e.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WaveOrder {
    Leading,
    Newton,
}

/// Samples on a uniform `xi` grid over `[0, 2 pi]` times a `y` grid;
/// `values[j][i]` sits at `(xi[j], y[i])`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldGrid {
    pub xi: Vec<f64>,
    pub y: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TravellingWave {
    pub n: u32,
    pub amplitude: f64,
    pub beta: f64,
    pub alpha_sq: f64,
    pub order: WaveOrder,
    /// Chebyshev nodes carrying `modes`.
    pub y: Vec<f64>,
    /// `psi_rel = sum_m modes[m](y) cos(m xi)`.
    pub modes: Vec<Vec<f64>>,
    /// `psi_rel` on 64 uniform `xi` intervals times `y`.
    pub psi_rel: FieldGrid,
    /// Max residual of the discrete wave equation (zero for leading order).
    pub residual: f64,
    pub iterations: usize,
}

const STORED_XI: usize = 64;

impl TravellingWave {
    fn assemble(
        n: u32,
        amplitude: f64,
        beta: f64,
        alpha_sq: f64,
        order: WaveOrder,
        y: Vec<f64>,
        modes: Vec<Vec<f64>>,
    ) -> Self {
        let mut w = Self {
            n,
            amplitude,
            beta,
            alpha_sq,
            order,
            psi_rel: FieldGrid {
                xi: vec![],
                y: vec![],
                values: vec![],
            },
            y,
            modes,
            residual: 0.0,
            iterations: 0,
        };
        let xi: Vec<f64> = (0..=STORED_XI).map(|j| 2.0 * PI * j as f64 / STORED_XI as f64).collect();
        let mut values = vec![vec![0.0; w.y.len()]; xi.len()];
        for j in 0..=STORED_XI / 2 {
            for (i, v) in values[j].iter_mut().enumerate() {
                *v = w
                    .modes
                    .iter()
                    .enumerate()
                    .map(|(m, a)| a[i] * (m as f64 * xi[j]).cos())
                    .sum();
            }
        }
        // exact evenness about xi = pi
        for j in STORED_XI / 2 + 1..=STORED_XI {
            values[j] = values[STORED_XI - j].clone();
        }
        w.psi_rel = FieldGrid {
            xi,
            y: w.y.clone(),
            values,
        };
        w
    }

    /// Streamwise period `2 pi / alpha`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.alpha_sq.sqrt()
    }

    fn evaluator(&self) -> Evaluator {
        Evaluator::new(&self.modes)
    }

    pub fn value_at(&self, xi: f64, y: f64) -> f64 {
        self.evaluator().at(xi, y).0
    }

    /// Uniform samples with `nx` intervals in `xi` and `ny` in `y`.
    pub fn sample(&self, nx: usize, ny: usize) -> FieldGrid {
        self.evaluator().sample(nx, ny)
    }
}

/// Largest pointwise difference of two waves on a uniform 64 x 64 grid.
pub fn sup_distance(a: &TravellingWave, b: &TravellingWave) -> f64 {
    let (fa, fb) = (a.sample(64, 64), b.sample(64, 64));
    fa.values
        .iter()
        .flatten()
        .zip(fb.values.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

struct Evaluator {
    /// Per mode: values, first and second `y` derivatives on the nodes.
    tables: Vec<[Vec<f64>; 3]>,
}

impl Evaluator {
    fn new(modes: &[Vec<f64>]) -> Self {
        let grid = ChebGrid::new(modes[0].len() - 1);
        let tables = modes
            .iter()
            .map(|a| {
                let d1 = grid.differentiate(a);
                let d2 = grid.differentiate(&d1);
                [a.clone(), d1, d2]
            })
            .collect();
        Self { tables }
    }

    fn column(&self, y: f64) -> Vec<[f64; 3]> {
        self.tables
            .iter()
            .map(|t| [cheb_interpolate(&t[0], y), cheb_interpolate(&t[1], y), cheb_interpolate(&t[2], y)])
            .collect()
    }

    /// Value, gradient and Hessian in `(xi, y)`.
    fn at(&self, xi: f64, y: f64) -> (f64, [f64; 2], [f64; 3]) {
        let col = self.column(y);
        let (mut v, mut gx, mut gy, mut hxx, mut hxy, mut hyy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (m, a) in col.iter().enumerate() {
            let m = m as f64;
            let (s, c) = (m * xi).sin_cos();
            v += a[0] * c;
            gx -= m * a[0] * s;
            gy += a[1] * c;
            hxx -= m * m * a[0] * c;
            hxy -= m * a[1] * s;
            hyy += a[2] * c;
        }
        (v, [gx, gy], [hxx, hxy, hyy])
    }

    fn sample(&self, nx: usize, ny: usize) -> FieldGrid {
        let xi: Vec<f64> = (0..=nx).map(|j| 2.0 * PI * j as f64 / nx as f64).collect();
        let y: Vec<f64> = (0..=ny).map(|i| i as f64 / ny as f64).collect();
        let cols: Vec<Vec<f64>> = y.iter().map(|&yy| self.column(yy).iter().map(|a| a[0]).collect()).collect();
        let values = xi
            .iter()
            .map(|&x| {
                cols.iter()
                    .map(|col| col.iter().enumerate().map(|(m, a)| a * (m as f64 * x).cos()).sum())
                    .collect()
            })
            .collect();
        FieldGrid { xi, y, values }
    }
}

/// Kernel data at the eye line: the certificate's own mode when it sits at
/// `y = 1/2`, otherwise the neutral mode of that operator.
fn eye_witness(profile: &ShearProfile, cert: &InstabilityCertificate) -> Result<NeutralWitness> {
    if !cert.unstable {
        return Err(Error::NoCertificate("certificate does not show instability".into()));
    }
    match &cert.mode {
        Some(m) if (m.inflection - EYE_LINE).abs() < 1e-12 => Ok(m.clone()),
        _ => neutral_witness_at(profile, EYE_LINE, cert.grid_n),
    }
}

pub fn default_wave_grid(n: u32) -> (usize, usize) {
    (8, (64 * n as usize).max(96))
}

/// `psi*_rel + beta phi_n cos xi` with `alpha^2 = alpha_n^2`.
pub fn leading_order_wave(profile: &ShearProfile, cert: &InstabilityCertificate, beta: f64) -> Result<TravellingWave> {
    let (n, a) = osc_params(profile)?;
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput(format!("beta must be non-negative, got {beta}")));
    }
    let wit = eye_witness(profile, cert)?;
    let grid = ChebGrid::new(default_wave_grid(n).1);
    let y = grid.nodes().to_vec();
    let base: Vec<f64> = y.iter().map(|&yy| psi_star_rel(n, a, yy)).collect();
    let phi: Vec<f64> = y.iter().map(|&yy| beta * cheb_interpolate(&wit.phi, yy)).collect();
    let modes = if beta == 0.0 { vec![base] } else { vec![base, phi] };
    Ok(TravellingWave::assemble(n, a, beta, wit.alpha * wit.alpha, WaveOrder::Leading, y, modes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveOptions {
    /// Cosine modes `0..=modes` in `xi`.
    pub modes: usize,
    /// Chebyshev intervals in `y`.
    pub ny: usize,
    pub residual_tol: f64,
    pub max_iter: usize,
}

impl WaveOptions {
    pub fn for_profile(profile: &ShearProfile) -> Self {
        let (modes, ny) = default_wave_grid(profile.oscillation_index());
        Self {
            modes,
            ny,
            residual_tol: 1e-8,
            max_iter: 30,
        }
    }
}

struct WaveSystem {
    f: NonlinearityF,
    m: usize,
    ni: usize,
    /// `xi_j = j pi / m`, `j = 0..=m`.
    dxx: DMatrix<f64>,
    to_modes: DMatrix<f64>,
    d2: DMatrix<f64>,
    base: Vec<f64>,
    f_base: Vec<f64>,
    kernel: Vec<f64>,
    weights: Vec<f64>,
    y: Vec<f64>,
}

impl WaveSystem {
    fn new(profile: &ShearProfile, wit: &NeutralWitness, opts: &WaveOptions) -> Result<Self> {
        let (n, a) = osc_params(profile)?;
        let f = build_f(profile)?;
        let m = opts.modes;
        if m < 3 || opts.ny < 16 {
            return Err(Error::InvalidInput(format!("wave grid ({m}, {}) too coarse", opts.ny)));
        }
        let grid = ChebGrid::new(opts.ny);
        let ni = opts.ny - 1;
        let e = DMatrix::from_fn(m + 1, m + 1, |j, k| (k as f64 * j as f64 * PI / m as f64).cos());
        let to_modes = e
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("singular cosine transform".into()))?;
        let lam = DMatrix::from_diagonal(&DVector::from_fn(m + 1, |k, _| -((k * k) as f64)));
        let dxx = &e * lam * &to_modes;
        let d2 = grid.d2().view((1, 1), (ni, ni)).into_owned();
        let y: Vec<f64> = grid.nodes()[1..opts.ny].to_vec();
        let base: Vec<f64> = y.iter().map(|&yy| psi_star_rel(n, a, yy)).collect();
        let f_base = base
            .iter()
            .map(|&s| f.value(s).ok_or(Error::InvalidInput("shear outside the table of f".into())))
            .collect::<Result<Vec<_>>>()?;
        let kernel: Vec<f64> = y.iter().map(|&yy| cheb_interpolate(&wit.phi, yy)).collect();
        let wy = &grid.weights()[1..opts.ny];
        let mut weights = Vec::with_capacity((m + 1) * ni);
        for j in 0..=m {
            let wx = if j == 0 || j == m { 1.0 } else { 2.0 } / m as f64;
            for i in 0..ni {
                weights.push(wx * wy[i] * (j as f64 * PI / m as f64).cos() * kernel[i]);
            }
        }
        Ok(Self {
            f,
            m,
            ni,
            dxx,
            to_modes,
            d2,
            base,
            f_base,
            kernel,
            weights,
            y: grid.nodes().to_vec(),
        })
    }

    fn size(&self) -> usize {
        (self.m + 1) * self.ni
    }

    fn shape(&self, j: usize, i: usize) -> f64 {
        self.kernel[i] * (j as f64 * PI / self.m as f64).cos()
    }

    /// Scaled residual `G` and Jacobian for unknowns `(w, alpha^2)`, with
    /// `phi = beta (Phi + w)` and `Phi = phi_n cos xi`.
    fn evaluate(&self, beta: f64, w: &DVector<f64>, want_jac: bool) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        let (m1, ni, size) = (self.m + 1, self.ni, self.size());
        let alpha_sq = w[size];
        let x = |j: usize, i: usize| self.shape(j, i) + w[j * ni + i];
        let mut g = DVector::zeros(size + 1);
        let mut jac = want_jac.then(|| DMatrix::zeros(size + 1, size + 1));
        let mut xx = vec![0.0; size];
        for j in 0..m1 {
            for i in 0..ni {
                xx[j * ni + i] = (0..m1).map(|k| self.dxx[(j, k)] * x(k, i)).sum();
            }
        }
        for j in 0..m1 {
            for i in 0..ni {
                let r = j * ni + i;
                let yy: f64 = (0..ni).map(|l| self.d2[(i, l)] * x(j, l)).sum();
                let xv = x(j, i);
                let (nl, dnl) = if beta == 0.0 {
                    let d = self.f.slope(self.base[i]).unwrap_or(0.0);
                    (d * xv, d)
                } else {
                    let s = self.base[i] + beta * xv;
                    let (fv, fd) = self.f.eval(s).ok_or(Error::NewtonFailed {
                        what: "travelling wave (stream function left the table of f)",
                        residual: f64::INFINITY,
                    })?;
                    ((fv - self.f_base[i]) / beta, fd)
                };
                g[r] = alpha_sq * xx[r] + yy - nl;
                if let Some(jm) = jac.as_mut() {
                    for k in 0..m1 {
                        jm[(r, k * ni + i)] += alpha_sq * self.dxx[(j, k)];
                    }
                    for l in 0..ni {
                        jm[(r, j * ni + l)] += self.d2[(i, l)];
                    }
                    jm[(r, r)] -= dnl;
                    jm[(r, size)] = xx[r];
                }
            }
        }
        g[size] = (0..size).map(|r| self.weights[r] * w[r]).sum();
        if let Some(jm) = jac.as_mut() {
            for r in 0..size {
                jm[(size, r)] = self.weights[r];
            }
        }
        Ok((g, jac))
    }

    fn solve(&self, beta: f64, mut w: DVector<f64>, opts: &WaveOptions) -> Result<(DVector<f64>, f64, usize)> {
        let size = self.size();
        let unscaled = |g: &DVector<f64>| g.rows(0, size).amax() * if beta == 0.0 { 1.0 } else { beta };
        let mut res = f64::INFINITY;
        for it in 0..opts.max_iter {
            let (g, jac) = self.evaluate(beta, &w, true)?;
            res = unscaled(&g);
            if g.amax() < 1e-12 {
                return Ok((w, res, it));
            }
            let step = jac.unwrap().lu().solve(&(-g)).ok_or(Error::NewtonFailed {
                what: "travelling wave",
                residual: res,
            })?;
            w += &step;
            if !w.iter().all(|v| v.is_finite()) {
                break;
            }
            if step.amax() < 1e-14 * (1.0 + w.amax()) {
                let (g, _) = self.evaluate(beta, &w, false)?;
                res = unscaled(&g);
                if res < opts.residual_tol {
                    return Ok((w, res, it + 1));
                }
                break;
            }
        }
        if res < opts.residual_tol {
            let (g, _) = self.evaluate(beta, &w, false)?;
            return Ok((w, unscaled(&g), opts.max_iter));
        }
        Err(Error::NewtonFailed {
            what: "travelling wave",
            residual: res,
        })
    }

    fn wave(&self, n: u32, amplitude: f64, beta: f64, w: &DVector<f64>) -> TravellingWave {
        let (m1, ni) = (self.m + 1, self.ni);
        let mut modes = vec![vec![0.0; ni + 2]; m1];
        for (k, mode) in modes.iter_mut().enumerate() {
            for i in 0..ni {
                mode[i + 1] = (0..m1)
                    .map(|j| self.to_modes[(k, j)] * beta * (self.shape(j, i) + w[j * ni + i]))
                    .sum();
            }
        }
        modes[0][0] = psi_star_rel(n, amplitude, 0.0);
        modes[0][ni + 1] = psi_star_rel(n, amplitude, 1.0);
        for i in 0..ni {
            modes[0][i + 1] += self.base[i];
        }
        if beta == 0.0 {
            modes.truncate(1);
        }
        TravellingWave::assemble(n, amplitude, beta, w[self.size()], WaveOrder::Newton, self.y.clone(), modes)
    }
}

/// Newton solve of the discrete wave equation for `(phi, alpha^2)` at
/// amplitude `beta`, continuing from smaller amplitudes when the direct
/// attempt fails.
pub fn newton_branch(
    profile: &ShearProfile,
    cert: &InstabilityCertificate,
    beta: f64,
    opts: &WaveOptions,
) -> Result<TravellingWave> {
    let (n, a) = osc_params(profile)?;
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput(format!("beta must be non-negative, got {beta}")));
    }
    let wit = eye_witness(profile, cert)?;
    let sys = WaveSystem::new(profile, &wit, opts)?;
    let mut start = DVector::zeros(sys.size() + 1);
    start[sys.size()] = wit.alpha * wit.alpha;
    let (w, res, its) = match sys.solve(beta, start.clone(), opts) {
        Ok(r) => r,
        Err(e) if beta > 0.0 => {
            let mut guess = start;
            let mut last = Err(e);
            for k in (0..4).rev() {
                let b = beta / f64::powi(2.0, k);
                last = sys.solve(b, guess.clone(), opts);
                match &last {
                    Ok(r) => guess = r.0.clone(),
                    Err(_) => break,
                }
            }
            last?
        }
        Err(e) => return Err(e),
    };
    if beta == 0.0 {
        // the field is the shear; only the kernel `alpha^2` is computed
        let mut wave = sys.wave(n, a, 0.0, &w);
        wave.residual = 0.0;
        wave.iterations = its;
        return Ok(wave);
    }
    let mut wave = sys.wave(n, a, beta, &w);
    wave.residual = res;
    wave.iterations = its;
    Ok(wave)
}

/// Largest `beta` in `1e-2 / 2^k` at which Newton converges.
pub fn max_branch_beta(profile: &ShearProfile, cert: &InstabilityCertificate, opts: &WaveOptions) -> Result<f64> {
    let mut beta: f64 = 1e-2;
    for _ in 0..20 {
        if newton_branch(profile, cert, beta, opts).is_ok() {
            return Ok(beta);
        }
        beta *= 0.5;
    }
    Err(Error::NewtonFailed {
        what: "travelling wave branch",
        residual: f64::NAN,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalKind {
    Saddle,
    Center,
    Unclassified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub xi: f64,
    pub y: f64,
    pub value: f64,
    pub hessian_det: f64,
    pub kind: CriticalKind,
}

/// Interior critical points of `psi_rel` in one period `0 <= xi < 2 pi`.
pub fn critical_points(w: &TravellingWave) -> Vec<CriticalPoint> {
    if w.beta == 0.0 || w.modes.len() < 2 {
        return Vec::new();
    }
    let ev = w.evaluator();
    let mut found: Vec<CriticalPoint> = Vec::new();
    for sx in 0..16 {
        for sy in 0..12 {
            let (mut x, mut y) = (2.0 * PI * sx as f64 / 16.0, (sy as f64 + 0.5) / 12.0);
            let mut ok = false;
            for _ in 0..60 {
                let (_, g, [hxx, hxy, hyy]) = ev.at(x, y);
                if g[0].hypot(g[1]) < 1e-13 {
                    ok = true;
                    break;
                }
                let det = hxx * hyy - hxy * hxy;
                if det == 0.0 {
                    break;
                }
                let mut dx = -(hyy * g[0] - hxy * g[1]) / det;
                let mut dy = -(-hxy * g[0] + hxx * g[1]) / det;
                let len = dx.hypot(dy);
                if len > 0.1 {
                    dx *= 0.1 / len;
                    dy *= 0.1 / len;
                }
                x += dx;
                y += dy;
                if !(y > 1e-9 && y < 1.0 - 1e-9) {
                    break;
                }
            }
            if !ok {
                continue;
            }
            x = x.rem_euclid(2.0 * PI);
            if 2.0 * PI - x < 1e-9 {
                x = 0.0;
            }
            let dup = found.iter().any(|p| {
                let dx = (p.xi - x).abs();
                dx.min(2.0 * PI - dx).hypot(p.y - y) < 1e-6
            });
            if dup {
                continue;
            }
            let (v, _, [hxx, hxy, hyy]) = ev.at(x, y);
            let det = hxx * hyy - hxy * hxy;
            let scale = (hxx.abs() + hxy.abs() + hyy.abs()).powi(2);
            let kind = if det.abs() <= 1e-10 * scale {
                CriticalKind::Unclassified
            } else if det < 0.0 {
                CriticalKind::Saddle
            } else {
                CriticalKind::Center
            };
            found.push(CriticalPoint {
                xi: x,
                y,
                value: v,
                hessian_det: det,
                kind,
            });
        }
    }
    found.sort_by(|a, b| a.xi.total_cmp(&b.xi).then(a.y.total_cmp(&b.y)));
    found
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polyline {
    pub level: f64,
    /// `(xi, y)`; `xi` is unwrapped along the line and may leave `[0, 2 pi]`.
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
    /// Closed only modulo the period, i.e. an open streamline.
    pub wraps: bool,
}

pub const DEFAULT_CONTOUR_GRID: (usize, usize) = (256, 256);

pub fn streamlines(w: &TravellingWave, levels: &[f64]) -> Vec<Polyline> {
    streamlines_on(&w.sample(DEFAULT_CONTOUR_GRID.0, DEFAULT_CONTOUR_GRID.1), levels)
}

/// Cell edges: `(vertical, j, i)`; horizontal edges join `(j, i)` and
/// `(j + 1, i)`, vertical ones `(j, i)` and `(j, i + 1)`.
type Edge = (bool, usize, usize);

/// Marching squares on a field sampled over one full period in `xi`
/// (first and last columns equal), periodic in `xi`.
pub fn streamlines_on(field: &FieldGrid, levels: &[f64]) -> Vec<Polyline> {
    let nx = field.xi.len() - 1;
    let ny = field.y.len() - 1;
    let h = 2.0 * PI / nx as f64;
    let v = |j: usize, i: usize| field.values[j % nx][i];
    let mut out = Vec::new();
    for &level in levels {
        let point = |e: Edge| -> [f64; 2] {
            let (vert, j, i) = e;
            let (a, b) = if vert { (v(j, i), v(j, i + 1)) } else { (v(j, i), v(j + 1, i)) };
            let t = if b == a { 0.5 } else { (level - a) / (b - a) };
            if vert {
                [j as f64 * h, field.y[i] + t * (field.y[i + 1] - field.y[i])]
            } else {
                [(j as f64 + t) * h, field.y[i]]
            }
        };
        let mut segs: Vec<[Edge; 2]> = Vec::new();
        for j in 0..nx {
            let jr = (j + 1) % nx;
            for i in 0..ny {
                let c = [v(j, i), v(j + 1, i), v(j + 1, i + 1), v(j, i + 1)];
                let inside = c.map(|x| x > level);
                let edges: [Edge; 4] = [(false, j, i), (true, jr, i), (false, j, i + 1), (true, j, i)];
                let cut: Vec<usize> = (0..4).filter(|&k| inside[k] != inside[(k + 1) % 4]).collect();
                match cut.len() {
                    2 => segs.push([edges[cut[0]], edges[cut[1]]]),
                    4 => {
                        let centre_in = c.iter().sum::<f64>() / 4.0 > level;
                        if centre_in == inside[0] {
                            segs.push([edges[0], edges[1]]);
                            segs.push([edges[2], edges[3]]);
                        } else {
                            segs.push([edges[0], edges[3]]);
                            segs.push([edges[1], edges[2]]);
                        }
                    }
                    _ => {}
                }
            }
        }
        let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
        for (k, s) in segs.iter().enumerate() {
            for e in s {
                by_edge.entry(*e).or_default().push(k);
            }
        }
        let mut used = vec![false; segs.len()];
        let chain = |start: usize, from: Edge, used: &mut Vec<bool>| -> (Vec<Edge>, bool) {
            let mut edges = vec![from];
            let mut seg = start;
            let mut cur = from;
            loop {
                used[seg] = true;
                let next = if segs[seg][0] == cur { segs[seg][1] } else { segs[seg][0] };
                edges.push(next);
                if next == from {
                    return (edges, true);
                }
                match by_edge[&next].iter().find(|&&s| !used[s]) {
                    Some(&s) => {
                        seg = s;
                        cur = next;
                    }
                    None => return (edges, false),
                }
            }
        };
        // open chains first, starting from an end used by one segment only
        let mut order: Vec<(usize, Edge)> = Vec::new();
        for (k, s) in segs.iter().enumerate() {
            for e in s {
                if by_edge[e].len() == 1 {
                    order.push((k, *e));
                }
            }
        }
        for k in 0..segs.len() {
            order.push((k, segs[k][0]));
        }
        for (k, e) in order {
            if used[k] {
                continue;
            }
            let (edges, closed) = chain(k, e, &mut used);
            let mut points: Vec<[f64; 2]> = Vec::with_capacity(edges.len());
            for e in edges {
                let mut p = point(e);
                if let Some(prev) = points.last() {
                    while p[0] - prev[0] > PI {
                        p[0] -= 2.0 * PI;
                    }
                    while prev[0] - p[0] > PI {
                        p[0] += 2.0 * PI;
                    }
                }
                points.push(p);
            }
            let wraps = closed && (points[0][0] - points[points.len() - 1][0]).abs() > PI;
            out.push(Polyline {
                level,
                points,
                closed,
                wraps,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_table_reproduces_shear() {
        let p = ShearProfile::oscillatory(1, 0.06).unwrap();
        let f = build_f(&p).unwrap();
        for k in 0..=200 {
            let y = k as f64 / 200.0;
            let s = psi_star_rel(1, 0.06, y);
            let err = (f.value(s).unwrap() - p.derivative(y, 1)).abs();
            assert!(err < 1e-9, "y = {y}: {err}");
        }
    }

    #[test]
    fn eye_centre_slope_is_q_at_half() {
        let p = ShearProfile::oscillatory(1, 0.06).unwrap();
        let f = build_f(&p).unwrap();
        assert!((f.slope(0.0).unwrap() + 67.882).abs() < 1e-3);
        assert!(f.table_range().0 < 0.0);
    }

    #[test]
    fn other_profiles_are_rejected() {
        assert!(build_f(&ShearProfile::Linear).is_err());
    }
}
