//! Chebyshev–Gauss–Lobatto machinery on the unit interval.
//!
//! Nodes are `y_j = sin^2(j pi / 2N)`, ascending from 0 to 1, which is the
//! usual `x_j = cos(j pi / N)` grid mapped by `y = (1 - x) / 2`.

use std::f64::consts::PI;
use std::ops::{Add, Div, Mul};
use std::sync::OnceLock;

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct ChebGrid {
    n: usize,
    nodes: Vec<f64>,
    bary: Vec<f64>,
    weights: Vec<f64>,
    d1: DMatrix<f64>,
    d2: OnceLock<DMatrix<f64>>,
}

impl ChebGrid {
    /// Grid with `n` intervals (`n + 1` nodes).
    ///
    /// # Panics
    /// Panics if `n < 2`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "a Chebyshev grid needs at least two intervals");
        let half = |j: usize| j as f64 * PI / (2 * n) as f64;
        let nodes: Vec<f64> = (0..=n).map(|j| half(j).sin().powi(2)).collect();
        let bary: Vec<f64> = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();

        // y_i - y_j = sin(a_i - a_j) sin(a_i + a_j) avoids cancellation
        // between clustered nodes.
        let mut d1 = DMatrix::zeros(n + 1, n + 1);
        for i in 0..=n {
            let mut diag = 0.0;
            for j in 0..=n {
                if i != j {
                    let dy = (half(i) - half(j)).sin() * (half(i) + half(j)).sin();
                    let v = bary[j] / bary[i] / dy;
                    d1[(i, j)] = v;
                    diag -= v;
                }
            }
            d1[(i, i)] = diag;
        }

        Self {
            n,
            nodes,
            bary,
            weights: clenshaw_curtis(n),
            d1,
            d2: OnceLock::new(),
        }
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Clenshaw–Curtis weights for integration over [0, 1].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &DMatrix<f64> {
        self.d2.get_or_init(|| &self.d1 * &self.d1)
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn differentiate(&self, f: &[f64]) -> Vec<f64> {
        (0..=self.n)
            .map(|i| (0..=self.n).map(|j| self.d1[(i, j)] * f[j]).sum())
            .collect()
    }

    /// Barycentric interpolation of nodal values at an arbitrary `y`.
    pub fn interpolate<T>(&self, values: &[T], y: f64) -> T
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T> + Div<f64, Output = T>,
    {
        let mut num: Option<T> = None;
        let mut den = 0.0;
        for (j, (&yj, &fj)) in self.nodes.iter().zip(values).enumerate() {
            let d = y - yj;
            if d == 0.0 {
                return fj;
            }
            let c = self.bary[j] / d;
            num = Some(match num {
                Some(acc) => acc + fj * c,
                None => fj * c,
            });
            den += c;
        }
        num.expect("grid is never empty") / den
    }

    /// Chebyshev coefficients `a_k` with `f(y) = sum a_k T_k(1 - 2y)`.
    pub fn coefficients(&self, values: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..=n)
            .map(|k| {
                let mut s = 0.0;
                for (j, &v) in values.iter().enumerate() {
                    let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                    s += w * v * ((k * j) as f64 * PI / n as f64).cos();
                }
                let scale = if k == 0 || k == n { 1.0 } else { 2.0 };
                scale * s / n as f64
            })
            .collect()
    }

    /// Ratio of the largest coefficient in the top eighth of the spectrum
    /// to the largest coefficient overall. Small values mean resolved.
    pub fn tail_ratio(&self, values: &[f64]) -> f64 {
        let a = self.coefficients(values);
        let head = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if head == 0.0 {
            return 0.0;
        }
        let start = self.n - self.n / 8;
        a[start..].iter().fold(0.0_f64, |m, v| m.max(v.abs())) / head
    }

    /// Values interpolated onto the nodes of `other`.
    pub fn resample<T>(&self, values: &[T], other: &ChebGrid) -> Vec<T>
    where
        T: Copy + Add<Output = T> + Mul<f64, Output = T> + Div<f64, Output = T>,
    {
        other
            .nodes
            .iter()
            .map(|&y| self.interpolate(values, y))
            .collect()
    }
}

/// Barycentric interpolation of values given on the nodes of
/// `ChebGrid::new(values.len() - 1)`, without building the grid.
pub fn cheb_interpolate(values: &[f64], y: f64) -> f64 {
    let n = values.len() - 1;
    let (mut num, mut den) = (0.0, 0.0);
    for (j, &fj) in values.iter().enumerate() {
        let yj = (j as f64 * PI / (2 * n) as f64).sin().powi(2);
        let d = y - yj;
        if d == 0.0 {
            return fj;
        }
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let mut c = sign / d;
        if j == 0 || j == n {
            c *= 0.5;
        }
        num += c * fj;
        den += c;
    }
    num / den
}

fn clenshaw_curtis(n: usize) -> Vec<f64> {
    let theta = |j: usize| j as f64 * PI / n as f64;
    let mut w = vec![0.0; n + 1];
    if n % 2 == 0 {
        let nn = (n * n) as f64 - 1.0;
        w[0] = 1.0 / nn;
        w[n] = w[0];
        for (j, wj) in w.iter_mut().enumerate().take(n).skip(1) {
            let mut v = 1.0;
            for k in 1..n / 2 {
                v -= 2.0 * (2.0 * k as f64 * theta(j)).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
            v -= (n as f64 * theta(j)).cos() / nn;
            *wj = 2.0 * v / n as f64;
        }
    } else {
        let nn = (n * n) as f64;
        w[0] = 1.0 / nn;
        w[n] = w[0];
        for (j, wj) in w.iter_mut().enumerate().take(n).skip(1) {
            let mut v = 1.0;
            for k in 1..=(n - 1) / 2 {
                v -= 2.0 * (2.0 * k as f64 * theta(j)).cos() / (4.0 * (k * k) as f64 - 1.0);
            }
            *wj = 2.0 * v / n as f64;
        }
    }
    // weights above integrate over [-1, 1]
    w.iter().map(|v| 0.5 * v).collect()
}

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton on `P_m`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}
