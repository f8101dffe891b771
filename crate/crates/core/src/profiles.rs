//! Base shear profiles `U(y)` on the channel `0 <= y <= 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::spectral::{cheb_interpolate, ChebGrid};
use crate::{Error, Result};

/// Highest derivative stored for tabulated profiles. Needed by the Taylor
/// expansion of the potential near an inflection point.
const TABULATED_ORDERS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShearProfile {
    /// `U = y`.
    Linear,
    /// `U = y + (A/n) sin(4 n pi y)`.
    Oscillatory { n: u32, amplitude: f64 },
    /// `U = y + sum_m a_m sin(m pi y)`, `coeffs[m - 1] = a_m`.
    SineSeries { coeffs: Vec<f64> },
    Tabulated(Tabulated),
}

/// Samples of `U` on Chebyshev nodes, with spectral derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tabulated {
    n: usize,
    derivs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeWindow {
    pub amplitude: f64,
    pub delta: f64,
    pub in_window: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub epsilon: f64,
    pub t: f64,
}

/// `delta = 1 - 4 pi A` and membership of the open window
/// `1/(8 pi) < A < 1/(4 pi)`. All bounds consume `delta` from here.
pub fn amplitude_window(amplitude: f64) -> AmplitudeWindow {
    let lower = 1.0 / (8.0 * PI);
    let upper = 1.0 / (4.0 * PI);
    AmplitudeWindow {
        amplitude,
        delta: 1.0 - 4.0 * PI * amplitude,
        in_window: amplitude > lower && amplitude < upper,
    }
}

impl ShearProfile {
    pub fn oscillatory(n: u32, amplitude: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidProfile("n must be at least 1".into()));
        }
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::InvalidProfile(format!("amplitude {amplitude}")));
        }
        Ok(Self::Oscillatory { n, amplitude })
    }

    pub fn sine_series(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidProfile("non-finite sine coefficient".into()));
        }
        Ok(Self::SineSeries { coeffs })
    }

    /// Profile from values on the nodes of `ChebGrid::new(values.len() - 1)`.
    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::InvalidProfile("need at least three samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProfile("non-finite sample".into()));
        }
        let last = values.len() - 1;
        if values[0].abs() > 1e-12 || (values[last] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidProfile(format!(
                "samples must satisfy U(0) = 0 and U(1) = 1, got {} and {}",
                values[0], values[last]
            )));
        }
        let mut values = values;
        values[0] = 0.0;
        values[last] = 1.0;
        let grid = ChebGrid::new(last);
        let mut derivs = vec![values];
        for k in 1..=TABULATED_ORDERS {
            let next = grid.differentiate(&derivs[k - 1]);
            derivs.push(next);
        }
        Ok(Self::Tabulated(Tabulated { n: last, derivs }))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Oscillatory { .. } => "oscillatory",
            Self::SineSeries { .. } => "sine-series",
            Self::Tabulated(_) => "tabulated",
        }
    }

    /// Derivative of order `order` at `y`. Analytic kinds support orders up
    /// to 3, tabulated profiles up to 2.
    pub fn eval(&self, y: f64, order: usize) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return Err(Error::OutOfDomain(y));
        }
        let max = if matches!(self, Self::Tabulated(_)) { 2 } else { 3 };
        if order > max {
            return Err(Error::UnsupportedOrder {
                order,
                kind: self.kind_name(),
            });
        }
        Ok(self.derivative(y, order))
    }

    /// Unchecked derivative of any order the representation supports.
    pub(crate) fn derivative(&self, y: f64, order: usize) -> f64 {
        match self {
            Self::Linear => linear_part(y, order),
            Self::Oscillatory { n, amplitude } => {
                linear_part(y, order)
                    + sine_term(*amplitude / *n as f64, (4 * n) as f64, y, order)
            }
            Self::SineSeries { coeffs } => {
                linear_part(y, order)
                    + coeffs
                        .iter()
                        .enumerate()
                        .map(|(i, a)| sine_term(*a, (i + 1) as f64, y, order))
                        .sum::<f64>()
            }
            Self::Tabulated(t) => {
                cheb_interpolate(&t.derivs[order.min(TABULATED_ORDERS)], y)
            }
        }
    }

    /// Values of the `order`-th derivative on every node of `grid`.
    pub fn sample(&self, grid: &ChebGrid, order: usize) -> Vec<f64> {
        if let Self::Tabulated(t) = self {
            let values = &t.derivs[order.min(TABULATED_ORDERS)];
            return grid.nodes().iter().map(|&y| cheb_interpolate(values, y)).collect();
        }
        grid.nodes().iter().map(|&y| self.derivative(y, order)).collect()
    }

    /// Oscillation parameter used to size grids: `n` for the oscillatory
    /// kind, roughly a quarter of the highest sine index otherwise.
    pub fn oscillation_index(&self) -> u32 {
        match self {
            Self::Linear => 1,
            Self::Oscillatory { n, .. } => *n,
            Self::SineSeries { coeffs } => {
                let top = coeffs.iter().rposition(|c| *c != 0.0).map_or(0, |i| i + 1);
                (top as u32).div_ceil(4).max(1)
            }
            Self::Tabulated(t) => (t.n as u32 / 64).max(1),
        }
    }

    /// Interior points where `U''` changes sign, located to within `tol`.
    pub fn inflection_points(&self, tol: f64) -> Vec<f64> {
        match self {
            Self::Linear => Vec::new(),
            Self::Oscillatory { n, amplitude } => {
                if *amplitude == 0.0 {
                    return Vec::new();
                }
                let m = 4 * n;
                (1..m).map(|k| k as f64 / m as f64).collect()
            }
            _ => {
                let m = 4000 * self.oscillation_index() as usize;
                let f = |y: f64| self.derivative(y, 2);
                let scale = (0..=m)
                    .map(|i| f(i as f64 / m as f64).abs())
                    .fold(0.0, f64::max);
                if scale == 0.0 {
                    return Vec::new();
                }
                let mut roots = Vec::new();
                let mut prev = (0.5 / m as f64, f(0.5 / m as f64));
                for i in 1..m {
                    let y = (i as f64 + 0.5) / m as f64;
                    let v = f(y);
                    if prev.1.signum() * v.signum() < 0.0
                        && prev.1.abs() > 1e-14 * scale
                        && v.abs() > 1e-14 * scale
                    {
                        roots.push(bisect(f, prev.0, y, tol));
                    }
                    if v.abs() > 1e-14 * scale {
                        prev = (y, v);
                    }
                }
                roots
            }
        }
    }

    /// Exact diffusive evolution `U_t = eps U_yy` of the sine part.
    pub fn drift(&self, params: DriftParams) -> Result<Self> {
        let DriftParams { epsilon, t } = params;
        if !(epsilon >= 0.0 && t >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "drift needs eps >= 0 and t >= 0, got eps = {epsilon}, t = {t}"
            )));
        }
        let decay = |m: f64| (-epsilon * (m * PI).powi(2) * t).exp();
        match self {
            Self::Linear => Ok(Self::Linear),
            Self::Oscillatory { n, amplitude } => Ok(Self::Oscillatory {
                n: *n,
                amplitude: amplitude * decay((4 * n) as f64),
            }),
            Self::SineSeries { coeffs } => Ok(Self::SineSeries {
                coeffs: coeffs
                    .iter()
                    .enumerate()
                    .map(|(i, a)| a * decay((i + 1) as f64))
                    .collect(),
            }),
            Self::Tabulated(_) => Err(Error::InvalidProfile(
                "drift is defined for sine-series profiles only".into(),
            )),
        }
    }

    /// Smallest `U'` over a uniform sample of `samples + 1` points.
    pub fn min_slope(&self, samples: usize) -> f64 {
        (0..=samples)
            .map(|i| self.derivative(i as f64 / samples as f64, 1))
            .fold(f64::INFINITY, f64::min)
    }
}

fn linear_part(y: f64, order: usize) -> f64 {
    match order {
        0 => y,
        1 => 1.0,
        _ => 0.0,
    }
}

/// `d^k/dy^k [a sin(m pi y)]`.
fn sine_term(a: f64, m: f64, y: f64, k: usize) -> f64 {
    let w = m * PI;
    let (s, c) = (w * y).sin_cos();
    let phase = match k % 4 {
        0 => s,
        1 => c,
        2 => -s,
        _ => -c,
    };
    a * w.powi(k as i32) * phase
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    while b - a > tol.max(1e-15) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fa.signum() == fm.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}
