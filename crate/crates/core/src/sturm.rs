//! The Sturm–Liouville operator `L = -d^2/dy^2 + Q(y)` with Dirichlet
//! conditions, where `Q = U'' / (U - U(y_i))` for an inflection point
//! `y_i`. A negative eigenvalue certifies a neutral Rayleigh mode with
//! `alpha^2 = -lambda` and wave speed `U(y_i)`, hence linear instability.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::profiles::{amplitude_window, ShearProfile};
use crate::spectral::{gauss_legendre, ChebGrid};
use crate::{Error, Result};

/// Nodes closer than this to the inflection point use a Taylor expansion
/// of `U''` and `U - U(y_i)` instead of the direct quotient.
pub const SINGULAR_RADIUS: f64 = 1e-8;

/// Relative eigenvalue change tolerated under one grid doubling.
pub const REFINEMENT_TOL: f64 = 1e-8;

#[derive(Clone)]
enum Source {
    Shear {
        profile: ShearProfile,
        y_i: f64,
        u_i: f64,
    },
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

#[derive(Clone)]
pub struct SlProblem {
    grid: ChebGrid,
    potential: Vec<f64>,
    source: Source,
}

impl fmt::Debug for SlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = match &self.source {
            Source::Shear { y_i, .. } => format!("shear(y_i = {y_i})"),
            Source::Function(_) => "function".to_string(),
        };
        f.debug_struct("SlProblem")
            .field("n", &self.grid.n())
            .field("source", &src)
            .finish()
    }
}

fn shear_potential(profile: &ShearProfile, y_i: f64, u_i: f64, y: f64) -> f64 {
    let h = y - y_i;
    if h.abs() < SINGULAR_RADIUS {
        // U''(y_i + h) / (U(y_i + h) - U(y_i)) with the common factor h removed
        let (mut num, mut den, mut fact, mut hp) = (0.0, 0.0, 1.0, 1.0);
        for j in 1..=4 {
            fact *= j as f64;
            num += profile.derivative(y_i, 2 + j) * hp / fact;
            den += profile.derivative(y_i, j) * hp / fact;
            hp *= h;
        }
        num / den
    } else {
        profile.derivative(y, 2) / (profile.derivative(y, 0) - u_i)
    }
}

/// Potential `Q` for `profile` about the inflection point `y_i`, sampled
/// on a Chebyshev grid with `n_grid` intervals.
pub fn build_q(profile: &ShearProfile, y_i: f64, n_grid: usize) -> Result<SlProblem> {
    if !(y_i > 0.0 && y_i < 1.0) {
        return Err(Error::OutOfDomain(y_i));
    }
    if n_grid < 8 {
        return Err(Error::InvalidInput(format!("grid of {n_grid} intervals is too coarse")));
    }
    let samples = 2000 * profile.oscillation_index() as usize;
    let scale = (0..=samples)
        .map(|i| profile.derivative(i as f64 / samples as f64, 2).abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let second = profile.derivative(y_i, 2);
    if second.abs() > 1e-8 * scale {
        return Err(Error::NotInflection { y: y_i, second });
    }
    let u_i = profile.derivative(y_i, 0);
    for i in 0..=samples {
        let y = i as f64 / samples as f64;
        let h = y - y_i;
        if h.abs() >= SINGULAR_RADIUS && (profile.derivative(y, 0) - u_i) * h <= 0.0 {
            return Err(Error::SingularPotential(y));
        }
    }
    let source = Source::Shear {
        profile: profile.clone(),
        y_i,
        u_i,
    };
    SlProblem::with_source(n_grid, source)
}

impl SlProblem {
    /// Problem with an arbitrary smooth potential.
    pub fn from_potential(
        n_grid: usize,
        q: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::with_source(n_grid, Source::Function(Arc::new(q)))
    }

    fn with_source(n_grid: usize, source: Source) -> Result<Self> {
        if n_grid < 8 {
            return Err(Error::InvalidInput(format!("grid of {n_grid} intervals is too coarse")));
        }
        let grid = ChebGrid::new(n_grid);
        let mut p = Self {
            potential: Vec::new(),
            grid,
            source,
        };
        p.potential = p.grid.nodes().iter().map(|&y| p.potential_at(y)).collect();
        if let Some(bad) = p.potential.iter().position(|v| !v.is_finite()) {
            return Err(Error::SingularPotential(p.grid.nodes()[bad]));
        }
        Ok(p)
    }

    pub fn potential_at(&self, y: f64) -> f64 {
        match &self.source {
            Source::Shear { profile, y_i, u_i } => shear_potential(profile, *y_i, *u_i, y),
            Source::Function(f) => f(y),
        }
    }

    pub fn grid(&self) -> &ChebGrid {
        &self.grid
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn inflection(&self) -> Option<f64> {
        match &self.source {
            Source::Shear { y_i, .. } => Some(*y_i),
            Source::Function(_) => None,
        }
    }

    pub fn refined(&self) -> Result<Self> {
        Self::with_source(2 * self.grid.n(), self.source.clone())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlSpectrum {
    pub eigenvalues: Vec<f64>,
    /// Eigenfunctions on `nodes`, unit L2 norm, largest value positive.
    pub eigenfunctions: Vec<Vec<f64>>,
    pub zero_counts: Vec<usize>,
    pub nodes: Vec<f64>,
    pub grid_n: usize,
    /// Largest relative eigenvalue change under one grid doubling.
    pub refinement_delta: f64,
}

/// Symmetric weighted form of the operator on interior nodes:
/// `W^{-1/2} (D^T W D + W Q) W^{-1/2}`, restricted to functions vanishing
/// at both walls. Its spectrum is real by construction.
fn symmetric_operator(p: &SlProblem) -> (DMatrix<f64>, Vec<f64>) {
    let g = &p.grid;
    let n = g.n();
    let w = g.weights();
    let d = g.d1();
    let m = n - 1;
    let dint = d.columns(1, m).into_owned();
    let mut wd = dint.clone();
    for (r, mut row) in wd.row_iter_mut().enumerate() {
        row *= w[r];
    }
    let mut h: DMatrix<f64> = dint.transpose() * wd;
    let sw: Vec<f64> = (1..n).map(|j| w[j].sqrt()).collect();
    for a in 0..m {
        h[(a, a)] += w[a + 1] * p.potential[a + 1];
    }
    for a in 0..m {
        for b in 0..m {
            h[(a, b)] /= sw[a] * sw[b];
        }
    }
    (h, sw)
}

fn lowest_eigenvalues(p: &SlProblem, k: usize) -> Vec<f64> {
    let (h, _) = symmetric_operator(p);
    let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev.truncate(k);
    ev
}

/// Lowest `k` eigenpairs, checked against a doubled grid.
pub fn solve_sl(p: &SlProblem, k: usize) -> Result<SlSpectrum> {
    let n = p.grid.n();
    if k == 0 || k > n - 1 {
        return Err(Error::InvalidInput(format!("cannot return {k} modes from {} unknowns", n - 1)));
    }
    let (h, sw) = symmetric_operator(p);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order.truncate(k);

    let fine = lowest_eigenvalues(&p.refined()?, k);
    let mut delta: f64 = 0.0;
    for (i, &j) in order.iter().enumerate() {
        let (c, f) = (eig.eigenvalues[j], fine[i]);
        let rel = (c - f).abs() / c.abs().max(1.0);
        if rel > REFINEMENT_TOL {
            return Err(Error::NotConverged {
                what: "Sturm-Liouville eigenvalue",
                coarse: c,
                fine: f,
            });
        }
        delta = delta.max(rel);
    }

    let mut eigenfunctions = Vec::with_capacity(k);
    let mut zero_counts = Vec::with_capacity(k);
    for &j in &order {
        let mut phi = vec![0.0; n + 1];
        for a in 0..n - 1 {
            phi[a + 1] = eig.eigenvectors[(a, j)] / sw[a];
        }
        polish_collocation(p, eig.eigenvalues[j], &mut phi);
        normalize(&p.grid, &mut phi);
        zero_counts.push(count_sign_changes(&phi));
        eigenfunctions.push(phi);
    }
    Ok(SlSpectrum {
        eigenvalues: order.iter().map(|&j| eig.eigenvalues[j]).collect(),
        eigenfunctions,
        zero_counts,
        nodes: p.grid.nodes().to_vec(),
        grid_n: n,
        refinement_delta: delta,
    })
}

/// Two steps of inverse iteration on the collocation form
/// `-phi'' + Q phi` at the computed eigenvalue, so the returned nodal
/// values satisfy the differential equation pointwise and not only in the
/// weak sense.
fn polish_collocation(p: &SlProblem, lambda: f64, phi: &mut [f64]) {
    let n = p.grid.n();
    let m = n - 1;
    let d2 = p.grid.d2();
    let mut c = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            c[(a, b)] = -d2[(a + 1, b + 1)];
        }
        c[(a, a)] += p.potential[a + 1] - lambda;
    }
    let lu = c.lu();
    let mut v = nalgebra::DVector::from_fn(m, |a, _| phi[a + 1]);
    for _ in 0..2 {
        match lu.solve(&v) {
            Some(next) if next.iter().all(|x| x.is_finite()) => {
                let scale = next.amax();
                v = next / scale;
            }
            _ => return,
        }
    }
    for a in 0..m {
        phi[a + 1] = v[a];
    }
}

fn normalize(g: &ChebGrid, phi: &mut [f64]) {
    let sq: Vec<f64> = phi.iter().map(|v| v * v).collect();
    let norm = g.integrate(&sq).sqrt();
    let peak = phi
        .iter()
        .copied()
        .fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
    let s = peak.signum() / norm;
    phi.iter_mut().for_each(|v| *v *= s);
}

fn count_sign_changes(phi: &[f64]) -> usize {
    let peak = phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut last = 0.0;
    let mut count = 0;
    for &v in phi {
        if v.abs() <= 1e-9 * peak {
            continue;
        }
        if last != 0.0 && v.signum() != last {
            count += 1;
        }
        last = v.signum();
    }
    count
}

/// Trial function for the Rayleigh quotient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrialFunction {
    /// Values on the nodes of the problem grid.
    OnGrid(Vec<f64>),
    /// Continuous, linear between knots; knots run from 0 to 1.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
}

/// `(int phi'^2 + Q phi^2) / int phi^2` for a trial function vanishing at
/// both walls.
pub fn rayleigh_quotient(p: &SlProblem, phi: &TrialFunction) -> Result<f64> {
    match phi {
        TrialFunction::OnGrid(v) => {
            let g = &p.grid;
            if v.len() != g.len() {
                return Err(Error::InvalidInput("trial function does not match the grid".into()));
            }
            check_walls(v[0], v[v.len() - 1], v)?;
            let dv = g.differentiate(v);
            let num: Vec<f64> = (0..v.len())
                .map(|j| dv[j] * dv[j] + p.potential[j] * v[j] * v[j])
                .collect();
            let den: Vec<f64> = v.iter().map(|x| x * x).collect();
            Ok(g.integrate(&num) / g.integrate(&den))
        }
        TrialFunction::PiecewiseLinear { knots, values } => {
            if knots.len() != values.len() || knots.len() < 2 {
                return Err(Error::InvalidInput("knots and values differ in length".into()));
            }
            if knots[0] != 0.0 || knots[knots.len() - 1] != 1.0 || knots.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput("knots must increase from 0 to 1".into()));
            }
            check_walls(values[0], values[values.len() - 1], values)?;
            let (gx, gw) = gauss_legendre(10);
            let mut num = 0.0;
            let mut den = 0.0;
            for s in 0..knots.len() - 1 {
                let (a, b) = (knots[s], knots[s + 1]);
                let (fa, fb) = (values[s], values[s + 1]);
                let h = b - a;
                let slope = (fb - fa) / h;
                num += slope * slope * h;
                den += h * (fa * fa + fa * fb + fb * fb) / 3.0;
                if fa == 0.0 && fb == 0.0 {
                    continue;
                }
                let pieces = 32;
                let hp = h / pieces as f64;
                for q in 0..pieces {
                    let lo = a + q as f64 * hp;
                    for (x, w) in gx.iter().zip(&gw) {
                        let y = lo + 0.5 * hp * (x + 1.0);
                        let f = fa + slope * (y - a);
                        num += 0.5 * hp * w * p.potential_at(y) * f * f;
                    }
                }
            }
            Ok(num / den)
        }
    }
}

fn check_walls(first: f64, last: f64, all: &[f64]) -> Result<()> {
    let peak = all.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::InvalidInput("trial function vanishes identically".into()));
    }
    if first.abs() > 1e-12 * peak || last.abs() > 1e-12 * peak {
        return Err(Error::InvalidInput("trial function must vanish at both walls".into()));
    }
    Ok(())
}

/// Plateau of height `1/(4n)` on `|y - 1/2| <= 1/(8n)`, falling linearly
/// to zero at `|y - 1/2| = 3/(8n)`.
pub fn plateau_test_function(n: u32) -> TrialFunction {
    let n = n.max(1) as f64;
    let (inner, outer, h) = (1.0 / (8.0 * n), 3.0 / (8.0 * n), 1.0 / (4.0 * n));
    TrialFunction::PiecewiseLinear {
        knots: vec![0.0, 0.5 - outer, 0.5 - inner, 0.5 + inner, 0.5 + outer, 1.0],
        values: vec![0.0, 0.0, h, h, 0.0, 0.0],
    }
}

/// Upper bound `-(6/5)(4n)^2 [pi (1 - delta)/(2 - delta) - 1]` on the
/// lowest eigenvalue about `y = 1/2`, valid for
/// `0 < delta < (pi - 2)/(pi - 1)`, where it is negative.
pub fn lambda1_bound(n: u32, delta: f64) -> Result<f64> {
    let limit = (PI - 2.0) / (PI - 1.0);
    if !(delta > 0.0 && delta < limit) {
        return Err(Error::BoundOutOfRange(delta));
    }
    let m = (4 * n) as f64;
    Ok(-1.2 * m * m * (PI * (1.0 - delta) / (2.0 - delta) - 1.0))
}

/// Grid used by the certificate: `max(256, 64 n)` intervals.
pub fn default_grid(profile: &ShearProfile) -> usize {
    (64 * profile.oscillation_index() as usize).max(256)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InflectionWitness {
    pub y: f64,
    pub lambda1: f64,
}

/// Neutral mode attached to the most negative eigenvalue.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NeutralWitness {
    pub inflection: f64,
    /// `U(y_i)`.
    pub phase_speed: f64,
    pub lambda1: f64,
    /// `sqrt(-lambda1)`.
    pub alpha: f64,
    pub nodes: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstabilityCertificate {
    pub unstable: bool,
    pub witnesses: Vec<InflectionWitness>,
    pub mode: Option<NeutralWitness>,
    pub grid_n: usize,
    pub refinement_delta: f64,
    /// Closed-form bound, for oscillatory profiles whose `delta` admits it.
    pub bound: Option<f64>,
}

pub fn certify_instability(profile: &ShearProfile) -> Result<InstabilityCertificate> {
    certify_instability_on(profile, default_grid(profile))
}

pub fn certify_instability_on(profile: &ShearProfile, n_grid: usize) -> Result<InstabilityCertificate> {
    let min_slope = profile.min_slope(4000 * profile.oscillation_index() as usize);
    if min_slope <= 0.0 {
        return Err(Error::NonMonotone(min_slope));
    }
    let bound = match profile {
        ShearProfile::Oscillatory { n, amplitude } => {
            lambda1_bound(*n, amplitude_window(*amplitude).delta).ok()
        }
        _ => None,
    };
    let mut witnesses = Vec::new();
    let mut best: Option<(SlProblem, SlSpectrum)> = None;
    let mut delta: f64 = 0.0;
    for y_i in profile.inflection_points(1e-13) {
        let prob = build_q(profile, y_i, n_grid)?;
        let spec = solve_sl(&prob, 1)?;
        delta = delta.max(spec.refinement_delta);
        witnesses.push(InflectionWitness {
            y: y_i,
            lambda1: spec.eigenvalues[0],
        });
        let better = best
            .as_ref()
            .is_none_or(|(_, s)| spec.eigenvalues[0] < s.eigenvalues[0]);
        if better {
            best = Some((prob, spec));
        }
    }
    let mode = best.and_then(|(prob, spec)| {
        let lambda1 = spec.eigenvalues[0];
        // tolerance for a marginal eigenvalue at zero
        if lambda1 >= -1e-10 {
            return None;
        }
        let y_i = prob.inflection()?;
        Some(NeutralWitness {
            inflection: y_i,
            phase_speed: profile.derivative(y_i, 0),
            lambda1,
            alpha: (-lambda1).sqrt(),
            nodes: spec.nodes,
            phi: spec.eigenfunctions.into_iter().next()?,
        })
    });
    Ok(InstabilityCertificate {
        unstable: mode.is_some(),
        witnesses,
        mode,
        grid_n: n_grid,
        refinement_delta: delta,
        bound,
    })
}

/// Neutral mode of the operator attached to one chosen inflection point,
/// whether or not it carries the most negative eigenvalue.
pub fn neutral_witness_at(profile: &ShearProfile, y_i: f64, n_grid: usize) -> Result<NeutralWitness> {
    let prob = build_q(profile, y_i, n_grid)?;
    let spec = solve_sl(&prob, 1)?;
    let lambda1 = spec.eigenvalues[0];
    if lambda1 >= -1e-10 {
        return Err(Error::NoCertificate(format!("lambda1 = {lambda1} at y = {y_i}")));
    }
    Ok(NeutralWitness {
        inflection: y_i,
        phase_speed: profile.derivative(y_i, 0),
        lambda1,
        alpha: (-lambda1).sqrt(),
        nodes: spec.nodes,
        phi: spec.eigenfunctions.into_iter().next().unwrap_or_default(),
    })
}

/// `alpha_n / n` for each `n` at a fixed amplitude.
pub fn wavenumber_ratios(ns: &[u32], amplitude: f64) -> Result<Vec<(u32, f64)>> {
    ns.iter()
        .map(|&n| {
            let cert = certify_instability(&ShearProfile::oscillatory(n, amplitude)?)?;
            let mode = cert
                .mode
                .ok_or_else(|| Error::NoCertificate(format!("no negative eigenvalue for n = {n}")))?;
            Ok((n, mode.alpha / n as f64))
        })
        .collect()
}
