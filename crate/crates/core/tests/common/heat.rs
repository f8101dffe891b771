//! Reference solver for `U_t = eps U_yy`, `U(0) = 0`, `U(1) = 1`:
//! Chebyshev collocation in `y`, classical RK4 in time on the interior
//! unknowns of `U - y`.

use nalgebra::{DMatrix, DVector};
use shearspec_core::spectral::ChebGrid;

pub fn heat_step(u0: impl Fn(f64) -> f64, eps: f64, t: f64, n: usize, steps: usize) -> (Vec<f64>, Vec<f64>) {
    let g = ChebGrid::new(n);
    let y = g.nodes().to_vec();
    let l = DMatrix::from_fn(n - 1, n - 1, |i, j| eps * g.d2()[(i + 1, j + 1)]);
    let mut x = DVector::from_fn(n - 1, |i, _| u0(y[i + 1]) - y[i + 1]);
    let dt = t / steps as f64;
    for _ in 0..steps {
        let k1 = &l * &x;
        let k2 = &l * (&x + &k1 * (0.5 * dt));
        let k3 = &l * (&x + &k2 * (0.5 * dt));
        let k4 = &l * (&x + &k3 * dt);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    let mut u = vec![0.0; n + 1];
    u[n] = 1.0;
    for i in 1..n {
        u[i] = x[i - 1] + y[i];
    }
    (y, u)
}
