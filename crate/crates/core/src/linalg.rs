//! Dense eigenvalue helpers shared by the normal-mode solvers.

use nalgebra::{DMatrix, DVector, Schur};

use crate::{Error, Result, C64};

const SCHUR_MAX_ITER: usize = 20_000;

/// All eigenvalues of a real matrix.
pub fn real_matrix_eigenvalues(m: DMatrix<f64>) -> Result<Vec<C64>> {
    let schur = Schur::try_new(m, f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Eigensolver("real Schur iteration stalled".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Complex Schur form `M = Q T Q^H`.
pub struct ComplexSchur {
    q: DMatrix<C64>,
    t: DMatrix<C64>,
}

impl ComplexSchur {
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        let schur = Schur::try_new(m, f64::EPSILON, SCHUR_MAX_ITER)
            .ok_or_else(|| Error::Eigensolver("complex Schur iteration stalled".into()))?;
        let (q, t) = schur.unpack();
        Ok(Self { q, t })
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Eigenvector for the `k`-th diagonal entry of `T`, by back
    /// substitution on the triangular factor.
    pub fn eigenvector(&self, k: usize) -> DVector<C64> {
        let t = &self.t;
        let lam = t[(k, k)];
        let scale = t.iter().fold(0.0_f64, |m, v| m.max(v.norm())).max(1.0);
        let mut x = DVector::<C64>::zeros(t.nrows());
        x[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in i + 1..=k {
                s += t[(i, j)] * x[j];
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < f64::EPSILON * scale {
                d = C64::new(f64::EPSILON * scale, 0.0);
            }
            x[i] = -s / d;
        }
        let v = &self.q * x;
        let n = v.norm();
        v / C64::new(n, 0.0)
    }
}

pub fn complex_matrix_eigenvalues(m: DMatrix<C64>) -> Result<Vec<C64>> {
    Ok(ComplexSchur::new(m)?.eigenvalues())
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

/// Backward-error style residual of `(A - cB) v`.
pub fn pencil_residual(a: &DMatrix<C64>, b: &DMatrix<C64>, c: C64, v: &DVector<C64>) -> f64 {
    let r = a * v - b * v * c;
    let inf = |m: &DMatrix<C64>| {
        m.row_iter()
            .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let vmax = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let rmax = r.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    rmax / ((inf(a) + c.norm() * inf(b)) * vmax).max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: C64,
    pub vector: DVector<C64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Refines an eigenpair of the pencil `A v = c B v` near `seed`.
///
/// Without a starting vector, a few steps of shifted inverse iteration
/// produce one. The pair is then polished by Newton's method on
/// `(A - cB) v = 0`, `l^H v = 1`, which converges quadratically for a
/// simple eigenvalue.
pub fn refine_eigenpair(
    a: &DMatrix<C64>,
    b: &DMatrix<C64>,
    seed: C64,
    start: Option<&DVector<C64>>,
    tol: f64,
) -> Result<Eigenpair> {
    let n = a.nrows();
    let mut v = match start {
        Some(s) => s.clone(),
        None => {
            let shifted = a - b * seed;
            let lu = shifted.lu();
            let mut v = DVector::from_fn(n, |i, _| C64::new(1.0 + (i as f64 * 0.37).sin(), 0.0));
            for _ in 0..4 {
                let rhs = b * &v;
                v = lu.solve(&rhs).ok_or(Error::NewtonFailed {
                    what: "inverse iteration",
                    residual: f64::INFINITY,
                })?;
                let nv = v.norm();
                if !nv.is_finite() || nv == 0.0 {
                    break;
                }
                v /= C64::new(nv, 0.0);
            }
            v
        }
    };
    let mut c = seed;
    let k = v.icamax();
    v /= v[k];
    let l = v.clone();
    let norm_l = l.dot(&l.conjugate()).re;
    let ell = l.map(|z| z.conj() / norm_l);

    let mut jac = DMatrix::<C64>::zeros(n + 1, n + 1);
    let mut residual = f64::INFINITY;
    for it in 0..40 {
        let bv = b * &v;
        let f = a * &v - &bv * c;
        let g = ell.dot(&v) - C64::new(1.0, 0.0);
        jac.view_mut((0, 0), (n, n)).copy_from(&(a - b * c));
        for i in 0..n {
            jac[(i, n)] = -bv[i];
            jac[(n, i)] = ell[i];
        }
        jac[(n, n)] = C64::new(0.0, 0.0);
        let mut rhs = DVector::<C64>::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -f[i];
        }
        rhs[n] = -g;
        let step = jac.clone().lu().solve(&rhs).ok_or(Error::NewtonFailed {
            what: "eigenpair refinement",
            residual,
        })?;
        for i in 0..n {
            v[i] += step[i];
        }
        c += step[n];
        residual = pencil_residual(a, b, c, &v);
        if !residual.is_finite() || !c.re.is_finite() {
            break;
        }
        if step[n].norm() <= 1e-15 * (1.0 + c.norm()) || residual < 1e-15 {
            if residual < tol {
                return Ok(Eigenpair {
                    value: c,
                    vector: v,
                    residual,
                    iterations: it + 1,
                });
            }
            break;
        }
    }
    if residual < tol {
        return Ok(Eigenpair {
            value: c,
            vector: v,
            residual,
            iterations: 40,
        });
    }
    Err(Error::NewtonFailed {
        what: "eigenpair refinement",
        residual,
    })
}


/// Complex matrix product through four real products, which use the
/// blocked real kernel.
pub fn cgemm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

/// Real matrix times complex matrix.
pub fn rcgemm(a: &DMatrix<f64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let re = a * b.map(|z| z.re);
    let im = a * b.map(|z| z.im);
    re.zip_map(&im, C64::new)
}
