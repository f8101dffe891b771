//! Second-order finite differences for `-phi'' + Q phi = lambda phi` on a
//! uniform grid, solved by Sturm-sequence bisection on the symmetric
//! tridiagonal matrix and Richardson-extrapolated over two grids. Shares
//! no code with the spectral solver.

use std::f64::consts::PI;

/// `U = y + (A/n) sin(4 n pi y)` and its potential about `y_i`, written
/// out by hand.
pub fn oscillatory_potential(n: u32, amplitude: f64, y_i: f64) -> impl Fn(f64) -> f64 {
    let k = 4.0 * n as f64 * PI;
    let a = amplitude / n as f64;
    let u = move |y: f64| y + a * (k * y).sin();
    let u1 = move |y: f64| 1.0 + a * k * (k * y).cos();
    let u2 = move |y: f64| -a * k * k * (k * y).sin();
    let u3 = move |y: f64| -a * k * k * k * (k * y).cos();
    let ui = u(y_i);
    move |y: f64| {
        if (y - y_i).abs() < 1e-7 {
            u3(y_i) / u1(y_i)
        } else {
            u2(y) / (u(y) - ui)
        }
    }
}

/// Number of eigenvalues of the tridiagonal matrix below `x`.
fn count_below(diag: &[f64], off: f64, x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for (i, &a) in diag.iter().enumerate() {
        let e2 = if i == 0 { 0.0 } else { off * off };
        d = a - x - e2 / d;
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// `k`-th eigenvalue (0-based) of the FD matrix with `m` intervals.
pub fn fd_eigenvalue(q: &dyn Fn(f64) -> f64, m: usize, k: usize) -> f64 {
    let h = 1.0 / m as f64;
    let off = -1.0 / (h * h);
    let diag: Vec<f64> = (1..m).map(|j| 2.0 / (h * h) + q(j as f64 * h)).collect();
    let qmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let qmax = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (qmin - 2.0 * off.abs(), qmax + 2.0 * off.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count_below(&diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Richardson extrapolation over `m` and `2m` intervals.
pub fn fd_eigenvalue_extrapolated(q: &dyn Fn(f64) -> f64, m: usize, k: usize) -> f64 {
    let coarse = fd_eigenvalue(q, m, k);
    let fine = fd_eigenvalue(q, 2 * m, k);
    (4.0 * fine - coarse) / 3.0
}
