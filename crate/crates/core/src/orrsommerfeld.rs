//! Viscous normal modes from the Orr–Sommerfeld equation
//! `U'' phi - (U - c)(phi'' - alpha^2 phi) + (eps / (i alpha)) (D^2 - alpha^2)^2 phi = 0`
//! with `eps = 1/R` and clamped walls `phi = phi' = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{pencil_residual, refine_eigenpair, ComplexSchur};
use crate::profiles::ShearProfile;
use crate::rayleigh::{instability_threshold, normalize_peak, solve_rayleigh, EigenMode, ModeKind, RayleighOptions};
use crate::spectral::ChebGrid;
use crate::sturm::certify_instability;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OsOptions {
    /// Coarse grid; the agreement check uses `3/2` of it.
    pub grid_n: usize,
    /// Eigenvalues on the two grids must agree to this (relative to `max(1, |c|)`).
    pub agree_tol: f64,
    /// Largest admissible Chebyshev tail ratio of a retained eigenfunction.
    pub tail_tol: f64,
    pub residual_tol: f64,
}

impl Default for OsOptions {
    fn default() -> Self {
        Self {
            grid_n: 200,
            agree_tol: 1e-6,
            tail_tol: 1e-6,
            residual_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsProblem {
    pub profile: ShearProfile,
    pub alpha: f64,
    pub reynolds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DiscardReason {
    GridDisagreement { delta: f64 },
    UnresolvedTail { ratio: f64 },
    Residual { residual: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discarded {
    pub c: C64,
    pub reason: DiscardReason,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OsSpectrum {
    pub alpha: f64,
    pub reynolds: f64,
    pub grid_n: usize,
    /// Retained modes, most unstable first.
    pub modes: Vec<EigenMode>,
    pub discarded: Vec<Discarded>,
    /// Largest two-grid discrepancy among retained eigenvalues.
    pub noise_floor: f64,
    pub threshold: f64,
    /// Index into `modes` of the most unstable mode, if any is unstable.
    pub most_unstable: Option<usize>,
    pub warnings: Vec<String>,
}

impl OsSpectrum {
    /// Largest `Re lambda = alpha Im c` over retained modes.
    pub fn max_growth_rate(&self) -> Option<f64> {
        self.modes.iter().map(|m| m.growth_rate()).reduce(f64::max)
    }
}

pub(crate) struct OsPencil {
    pub grid: ChebGrid,
    pub a: DMatrix<C64>,
    pub b: DMatrix<C64>,
    /// Lifts the reduced unknowns `phi_2 .. phi_{N-2}` to all nodes.
    pub lift: DMatrix<f64>,
}

impl OsPencil {
    pub fn new(profile: &ShearProfile, alpha: f64, reynolds: f64, n: usize) -> Result<Self> {
        if n < 8 {
            return Err(Error::InvalidInput(format!("grid of {n} intervals is too coarse")));
        }
        if !(alpha > 0.0 && reynolds > 0.0) {
            return Err(Error::InvalidInput(format!("need alpha > 0 and R > 0, got {alpha}, {reynolds}")));
        }
        let grid = ChebGrid::new(n);
        let d1 = grid.d1();
        let d2 = grid.d2();
        let d4 = d2 * d2;
        let a2 = alpha * alpha;
        let u = profile.sample(&grid, 0);
        let u2 = profile.sample(&grid, 2);

        // phi_0 = phi_N = 0; the two derivative rows fix phi_1 and phi_{N-1}
        let m = n - 3;
        let s = nalgebra::Matrix2::new(d1[(0, 1)], d1[(0, n - 1)], d1[(n, 1)], d1[(n, n - 1)]);
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::Eigensolver("singular clamped boundary block".into()))?;
        let mut lift = DMatrix::zeros(n + 1, m);
        for k in 0..m {
            let j = k + 2;
            lift[(j, k)] = 1.0;
            let r = nalgebra::Vector2::new(-d1[(0, j)], -d1[(n, j)]);
            let x = s_inv * r;
            lift[(1, k)] = x[0];
            lift[(n - 1, k)] = x[1];
        }

        let visc = C64::new(0.0, 1.0) / (alpha * reynolds);
        let mut a = DMatrix::<C64>::zeros(m, n + 1);
        let mut b = DMatrix::<C64>::zeros(m, n + 1);
        for r in 0..m {
            let i = r + 2;
            for j in 0..=n {
                let id = if i == j { 1.0 } else { 0.0 };
                let l = d2[(i, j)] - a2 * id;
                let l2 = d4[(i, j)] - 2.0 * a2 * d2[(i, j)] + a2 * a2 * id;
                // (U - c) L phi - U'' phi = (1/(i alpha R)) L^2 phi
                a[(r, j)] = C64::new(u[i] * l - u2[i] * id, 0.0) + visc * l2;
                b[(r, j)] = C64::new(l, 0.0);
            }
        }
        let liftc = lift.map(|v| C64::new(v, 0.0));
        Ok(Self {
            grid,
            a: a * &liftc,
            b: b * &liftc,
            lift,
        })
    }

    fn full(&self, v: &DVector<C64>) -> Vec<C64> {
        let mut phi: Vec<C64> = (0..self.lift.nrows())
            .map(|i| (0..self.lift.ncols()).map(|k| v[k] * self.lift[(i, k)]).sum())
            .collect();
        normalize_peak(&mut phi);
        phi
    }

    fn schur(&self) -> Result<ComplexSchur> {
        let m = self
            .b
            .clone()
            .lu()
            .solve(&self.a)
            .ok_or_else(|| Error::Eigensolver("singular Orr-Sommerfeld operator".into()))?;
        ComplexSchur::new(m)
    }
}

fn tail_ratio(grid: &ChebGrid, phi: &[C64]) -> f64 {
    let re: Vec<f64> = phi.iter().map(|z| z.re).collect();
    let im: Vec<f64> = phi.iter().map(|z| z.im).collect();
    let (ar, ai) = (grid.coefficients(&re), grid.coefficients(&im));
    let head = ar.iter().zip(&ai).map(|(x, y)| x.hypot(*y)).fold(0.0, f64::max);
    let start = grid.n() - grid.n() / 8;
    let tail = ar[start..]
        .iter()
        .zip(&ai[start..])
        .map(|(x, y)| x.hypot(*y))
        .fold(0.0, f64::max);
    if head == 0.0 {
        0.0
    } else {
        tail / head
    }
}

/// Full discrete spectrum at two resolutions, keeping eigenvalues that
/// agree between them and whose eigenfunctions are resolved.
pub fn solve_os(problem: &OsProblem, opts: &OsOptions) -> Result<OsSpectrum> {
    let OsProblem { profile, alpha, reynolds } = problem;
    let coarse = OsPencil::new(profile, *alpha, *reynolds, opts.grid_n)?;
    let fine = OsPencil::new(profile, *alpha, *reynolds, opts.grid_n * 3 / 2)?;
    let warnings = resolution_warnings(profile, *alpha, *reynolds, opts.grid_n);
    let cs = coarse.schur()?;
    let fine_ev = fine.schur()?.eigenvalues();

    let mut modes = Vec::new();
    let mut discarded = Vec::new();
    let mut floor: f64 = 0.0;
    for (k, c) in cs.eigenvalues().into_iter().enumerate() {
        let delta = fine_ev.iter().map(|f| (f - c).norm()).fold(f64::INFINITY, f64::min);
        if delta > opts.agree_tol * c.norm().max(1.0) {
            discarded.push(Discarded {
                c,
                reason: DiscardReason::GridDisagreement { delta },
            });
            continue;
        }
        let v = cs.eigenvector(k);
        let residual = pencil_residual(&coarse.a, &coarse.b, c, &v);
        if residual > opts.residual_tol {
            discarded.push(Discarded {
                c,
                reason: DiscardReason::Residual { residual },
            });
            continue;
        }
        let phi = coarse.full(&v);
        let ratio = tail_ratio(&coarse.grid, &phi);
        if ratio > opts.tail_tol {
            discarded.push(Discarded {
                c,
                reason: DiscardReason::UnresolvedTail { ratio },
            });
            continue;
        }
        floor = floor.max(delta);
        modes.push(EigenMode {
            alpha: *alpha,
            c,
            nodes: coarse.grid.nodes().to_vec(),
            phi,
            residual,
            grid_n: opts.grid_n,
            refinement_delta: delta,
            resolved: true,
            kind: ModeKind::Stable,
        });
    }
    let threshold = instability_threshold(floor);
    for m in &mut modes {
        if m.c.im > threshold {
            m.kind = ModeKind::Unstable;
        }
    }
    modes.sort_by(|a, b| b.c.im.total_cmp(&a.c.im));
    let most_unstable = modes.first().filter(|m| m.kind == ModeKind::Unstable).map(|_| 0);
    Ok(OsSpectrum {
        alpha: *alpha,
        reynolds: *reynolds,
        grid_n: opts.grid_n,
        modes,
        discarded,
        noise_floor: floor,
        threshold,
        most_unstable,
        warnings,
    })
}

fn resolution_warnings(profile: &ShearProfile, alpha: f64, reynolds: f64, n: usize) -> Vec<String> {
    let mut w = Vec::new();
    let layer = 4.0 * (alpha * reynolds).sqrt();
    if (n as f64) < layer {
        w.push(format!("grid N = {n} below the boundary-layer estimate 4 sqrt(alpha R) = {layer:.0}"));
    }
    let osc = 64 * profile.oscillation_index().max(1) as usize;
    if n < osc {
        w.push(format!("grid N = {n} below 64 n = {osc} for the profile oscillation"));
    }
    w
}

/// Newton refinement of the viscous mode nearest `seed` on the coarse and
/// the `3/2` grid. Returns the fine-grid mode.
pub fn refine_os_mode(problem: &OsProblem, seed: C64, opts: &OsOptions) -> Result<EigenMode> {
    let OsProblem { profile, alpha, reynolds } = problem;
    let coarse = OsPencil::new(profile, *alpha, *reynolds, opts.grid_n)?;
    let p1 = refine_eigenpair(&coarse.a, &coarse.b, seed, None, opts.residual_tol)?;
    let fine = OsPencil::new(profile, *alpha, *reynolds, opts.grid_n * 3 / 2)?;
    let p2 = refine_eigenpair(&fine.a, &fine.b, p1.value, None, opts.residual_tol)?;
    let delta = (p2.value - p1.value).norm();
    Ok(EigenMode {
        alpha: *alpha,
        c: p2.value,
        nodes: fine.grid.nodes().to_vec(),
        phi: fine.full(&p2.vector),
        residual: p2.residual,
        grid_n: fine.grid.n(),
        refinement_delta: delta,
        resolved: delta < opts.agree_tol * p2.value.norm().max(1.0),
        kind: if p2.value.im > crate::rayleigh::MIN_THRESHOLD {
            ModeKind::Unstable
        } else {
            ModeKind::Stable
        },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackPoint {
    pub reynolds: f64,
    pub c: C64,
    /// `|c(R) - c0|`.
    pub defect: f64,
    pub refinement_delta: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimitTrack {
    pub alpha: f64,
    pub c0: C64,
    pub points: Vec<TrackPoint>,
    /// First Reynolds number at which the mode could not be followed.
    pub lost_at: Option<f64>,
    /// Least-squares slope of `log defect` against `log R`.
    pub slope: Option<f64>,
    /// Whether the last defect is below the first; `None` for fewer than
    /// two points.
    pub converging: Option<bool>,
}

fn track_modes(
    profile: &ShearProfile,
    alpha: f64,
    c0: C64,
    schedule: &[f64],
    opts: &OsOptions,
) -> (Vec<EigenMode>, Vec<f64>, Option<f64>) {
    let mut seed = c0;
    let mut modes = Vec::new();
    let mut rs = Vec::new();
    for &r in schedule {
        let problem = OsProblem {
            profile: profile.clone(),
            alpha,
            reynolds: r,
        };
        match refine_os_mode(&problem, seed, opts) {
            Ok(m) if m.kind == ModeKind::Unstable => {
                seed = m.c;
                modes.push(m);
                rs.push(r);
            }
            _ => return (modes, rs, Some(r)),
        }
    }
    (modes, rs, None)
}

pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Follows the viscous continuation of the inviscid mode `(alpha, c0)`
/// along an increasing Reynolds schedule.
pub fn track_inviscid_limit(
    profile: &ShearProfile,
    alpha: f64,
    c0: C64,
    schedule: &[f64],
    opts: &OsOptions,
) -> Result<LimitTrack> {
    if schedule.is_empty() || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("Reynolds schedule must be increasing".into()));
    }
    let (modes, rs, lost_at) = track_modes(profile, alpha, c0, schedule, opts);
    let points: Vec<TrackPoint> = modes
        .iter()
        .zip(&rs)
        .map(|(m, &r)| TrackPoint {
            reynolds: r,
            c: m.c,
            defect: (m.c - c0).norm(),
            refinement_delta: m.refinement_delta,
            resolved: m.resolved,
        })
        .collect();
    let slope = fit_slope(
        &points.iter().map(|p| p.reynolds).collect::<Vec<_>>(),
        &points.iter().map(|p| p.defect).collect::<Vec<_>>(),
    );
    let converging = match (points.first(), points.last()) {
        (Some(a), Some(b)) if points.len() > 1 => Some(b.defect < a.defect),
        _ => None,
    };
    Ok(LimitTrack {
        alpha,
        c0,
        points,
        lost_at,
        slope,
        converging,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n: u32,
    pub amplitude: f64,
    /// `None` for the linear-shear control row.
    pub alpha_n: Option<f64>,
    /// Wavenumber of the largest viscous growth among the samples.
    pub alpha_at_max: f64,
    pub growth_rate: f64,
    pub inviscid_growth_rate: Option<f64>,
}

/// Wavenumber used for the stable control row.
const CONTROL_ALPHA: f64 = 1.0;

fn growth_row(n: u32, amplitude: f64, reynolds: f64, opts: &OsOptions) -> Result<GrowthRow> {
    if amplitude == 0.0 {
        return Ok(GrowthRow {
            n,
            amplitude,
            alpha_n: None,
            alpha_at_max: CONTROL_ALPHA,
            growth_rate: control_growth_rate(CONTROL_ALPHA, reynolds, opts)?,
            inviscid_growth_rate: None,
        });
    }
    let profile = ShearProfile::oscillatory(n, amplitude)?;
    let cert = certify_instability(&profile)?;
    let alpha_n = cert
        .mode
        .as_ref()
        .ok_or_else(|| Error::NoCertificate(format!("n = {n}, A = {amplitude}")))?
        .alpha;
    let ray = RayleighOptions::for_profile(&profile);
    let os = OsOptions {
        grid_n: opts.grid_n.max(100 * n as usize),
        ..*opts
    };
    let mut best = (f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY);
    for k in 1..8 {
        let alpha = alpha_n * k as f64 / 8.0;
        let Some(inv) = solve_rayleigh(&profile, alpha, None, &ray)?.mode().cloned() else {
            continue;
        };
        let problem = OsProblem {
            profile: profile.clone(),
            alpha,
            reynolds,
        };
        let visc = refine_os_mode(&problem, inv.c, &os)?;
        let g = alpha * visc.c.im;
        if g > best.0 {
            best.0 = g;
            best.1 = alpha;
        }
        best.2 = best.2.max(inv.growth_rate());
    }
    Ok(GrowthRow {
        n,
        amplitude,
        alpha_n: Some(alpha_n),
        alpha_at_max: best.1,
        growth_rate: best.0,
        inviscid_growth_rate: Some(best.2),
    })
}

/// Largest viscous growth rate over the inviscid branch, per `n`. An
/// amplitude of zero yields linear-shear control rows.
pub fn growth_rate_vs_n(ns: &[u32], amplitude: f64, reynolds: f64, opts: &OsOptions) -> Result<Vec<GrowthRow>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        ns.par_iter().map(|&n| growth_row(n, amplitude, reynolds, opts)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        ns.iter().map(|&n| growth_row(n, amplitude, reynolds, opts)).collect()
    }
}

/// Largest `alpha Im c` of linear shear at the given wavenumber; negative
/// at every Reynolds number.
pub fn control_growth_rate(alpha: f64, reynolds: f64, opts: &OsOptions) -> Result<f64> {
    let s = solve_os(
        &OsProblem {
            profile: ShearProfile::Linear,
            alpha,
            reynolds,
        },
        opts,
    )?;
    s.max_growth_rate()
        .ok_or_else(|| Error::Eigensolver("no retained eigenvalue for linear shear".into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryLayerRow {
    pub reynolds: f64,
    /// `|gamma| = sqrt(alpha R)`.
    pub gamma: f64,
    pub c: C64,
    /// `(s, ||phi||_{H^s})` with `max |phi| = 1`.
    pub norms: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryLayerTable {
    pub rows: Vec<BoundaryLayerRow>,
    /// `(s, d log ||phi||_{H^s} / d log |gamma|)`.
    pub exponents: Vec<(f64, f64)>,
}

/// Discrete `H^s` norm: integer orders sum the squared L2 norms of the
/// derivatives; fractional orders interpolate geometrically between the
/// neighbouring integers.
pub fn sobolev_norm(grid: &ChebGrid, phi: &[C64], s: f64) -> f64 {
    let lo = s.floor() as usize;
    let hi = s.ceil() as usize;
    let mut sq = Vec::with_capacity(hi + 1);
    let mut re: Vec<f64> = phi.iter().map(|z| z.re).collect();
    let mut im: Vec<f64> = phi.iter().map(|z| z.im).collect();
    let mut acc = 0.0;
    for k in 0..=hi {
        if k > 0 {
            re = grid.differentiate(&re);
            im = grid.differentiate(&im);
        }
        let d: Vec<f64> = re.iter().zip(&im).map(|(a, b)| a * a + b * b).collect();
        acc += grid.integrate(&d);
        sq.push(acc.sqrt());
    }
    if lo == hi {
        return sq[lo];
    }
    let t = s - lo as f64;
    sq[lo].powf(1.0 - t) * sq[hi].powf(t)
}

/// `(s, ||phi||_{H^s})` for a mode computed on a Chebyshev grid.
pub fn mode_sobolev_norms(mode: &EigenMode, s_list: &[f64]) -> Result<Vec<(f64, f64)>> {
    if s_list.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidInput("Sobolev orders must be non-negative".into()));
    }
    if mode.nodes.len() != mode.grid_n + 1 {
        return Err(Error::InvalidInput("mode is not stored on a Chebyshev grid".into()));
    }
    let grid = ChebGrid::new(mode.grid_n);
    Ok(s_list.iter().map(|&s| (s, sobolev_norm(&grid, &mode.phi, s))).collect())
}

/// Sobolev norms of the tracked viscous mode as `R` grows.
pub fn boundary_layer_diagnostic(
    profile: &ShearProfile,
    alpha: f64,
    c0: C64,
    schedule: &[f64],
    s_list: &[f64],
    opts: &OsOptions,
) -> Result<BoundaryLayerTable> {
    if s_list.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidInput("Sobolev orders must be non-negative".into()));
    }
    let (modes, rs, _) = track_modes(profile, alpha, c0, schedule, opts);
    let rows: Vec<BoundaryLayerRow> = modes
        .iter()
        .zip(&rs)
        .map(|(m, &r)| {
            let grid = ChebGrid::new(m.grid_n);
            BoundaryLayerRow {
                reynolds: r,
                gamma: (alpha * r).sqrt(),
                c: m.c,
                norms: s_list.iter().map(|&s| (s, sobolev_norm(&grid, &m.phi, s))).collect(),
            }
        })
        .collect();
    let exponents = s_list
        .iter()
        .enumerate()
        .filter_map(|(k, &s)| {
            let x: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
            let y: Vec<f64> = rows.iter().map(|r| r.norms[k].1).collect();
            fit_slope(&x, &y).map(|e| (s, e))
        })
        .collect();
    Ok(BoundaryLayerTable { rows, exponents })
}
