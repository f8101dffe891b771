//! Inviscid normal modes `psi = phi(y) e^{i alpha (x - c t)}` from the
//! Rayleigh equation `U'' phi - (U - c)(phi'' - alpha^2 phi) = 0` with
//! `phi(0) = phi(1) = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{real_matrix_eigenvalues, refine_eigenpair, to_complex};
use crate::profiles::ShearProfile;
use crate::spectral::ChebGrid;
use crate::sturm::InstabilityCertificate;
use crate::{Error, Result, C64};

/// Smallest usable instability threshold on `Im c`.
pub const MIN_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighOptions {
    /// Coarse grid; the Cauchy check uses twice this.
    pub grid_n: usize,
    pub cauchy_tol: f64,
    pub residual_tol: f64,
}

impl Default for RayleighOptions {
    fn default() -> Self {
        Self {
            grid_n: 128,
            cauchy_tol: 1e-6,
            residual_tol: 1e-8,
        }
    }
}

impl RayleighOptions {
    pub fn for_profile(profile: &ShearProfile) -> Self {
        Self {
            grid_n: 128 * profile.oscillation_index() as usize,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    Unstable,
    Neutral,
    Stable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenMode {
    pub alpha: f64,
    pub c: C64,
    pub nodes: Vec<f64>,
    /// Normalised to `max |phi| = 1`, real and positive at the peak.
    pub phi: Vec<C64>,
    pub residual: f64,
    pub grid_n: usize,
    /// `|c_N - c_2N|` between the two grids of the Cauchy check.
    pub refinement_delta: f64,
    pub resolved: bool,
    pub kind: ModeKind,
}

impl EigenMode {
    /// Growth rate `alpha Im c`.
    pub fn growth_rate(&self) -> f64 {
        self.alpha * self.c.im
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum RayleighOutcome {
    Unstable(EigenMode),
    NoUnstableMode { threshold: f64, max_imag: f64 },
}

impl RayleighOutcome {
    pub fn mode(&self) -> Option<&EigenMode> {
        match self {
            Self::Unstable(m) => Some(m),
            Self::NoUnstableMode { .. } => None,
        }
    }
}

/// Interior-node pencil `A phi = c B phi` with `B = D^2 - alpha^2` and
/// `A = U B - U''`.
pub fn rayleigh_pencil(profile: &ShearProfile, alpha: f64, grid: &ChebGrid) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = grid.n();
    let m = n - 1;
    let d2 = grid.d2();
    let u = profile.sample(grid, 0);
    let u2 = profile.sample(grid, 2);
    let mut b = d2.view((1, 1), (m, m)).into_owned();
    for i in 0..m {
        b[(i, i)] -= alpha * alpha;
    }
    let mut a = b.clone();
    for i in 0..m {
        for j in 0..m {
            a[(i, j)] *= u[i + 1];
        }
        a[(i, i)] -= u2[i + 1];
    }
    (a, b)
}

fn dense_spectrum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<C64>> {
    let m = b
        .clone()
        .lu()
        .solve(a)
        .ok_or_else(|| Error::Eigensolver("singular Rayleigh operator".into()))?;
    real_matrix_eigenvalues(m)
}

/// Full discrete Rayleigh spectrum on the interior nodes of `grid`.
pub fn rayleigh_spectrum(profile: &ShearProfile, alpha: f64, grid: &ChebGrid) -> Result<Vec<C64>> {
    let (a, b) = rayleigh_pencil(profile, alpha, grid);
    dense_spectrum(&a, &b)
}

/// Largest `|Im c|` of the discrete spectrum of linear shear, whose exact
/// spectrum is real, at the same wavenumber and grid.
pub fn noise_floor(alpha: f64, grid: &ChebGrid) -> Result<f64> {
    let (a, b) = rayleigh_pencil(&ShearProfile::Linear, alpha, grid);
    let ev = dense_spectrum(&a, &b)?;
    Ok(ev.iter().fold(0.0, |m, c| m.max(c.im.abs())))
}

pub fn instability_threshold(floor: f64) -> f64 {
    (10.0 * floor).max(MIN_THRESHOLD)
}

fn pad(grid: &ChebGrid, interior: &DVector<C64>) -> Vec<C64> {
    let mut phi = vec![C64::new(0.0, 0.0); grid.len()];
    for (i, v) in interior.iter().enumerate() {
        phi[i + 1] = *v;
    }
    normalize_peak(&mut phi);
    phi
}

pub(crate) fn normalize_peak(phi: &mut [C64]) {
    let peak = phi
        .iter()
        .copied()
        .fold(C64::new(0.0, 0.0), |m, z| if z.norm() > m.norm() { z } else { m });
    if peak.norm() > 0.0 {
        let s = C64::new(1.0, 0.0) / peak;
        phi.iter_mut().for_each(|z| *z *= s);
    }
}

struct Refined {
    c: C64,
    phi: DVector<C64>,
    residual: f64,
}

fn refine_on(profile: &ShearProfile, alpha: f64, grid: &ChebGrid, seed: C64, tol: f64) -> Result<Refined> {
    let (a, b) = rayleigh_pencil(profile, alpha, grid);
    let pair = refine_eigenpair(&to_complex(&a), &to_complex(&b), seed, None, tol)?;
    Ok(Refined {
        c: pair.value,
        phi: pair.vector,
        residual: pair.residual,
    })
}

/// Most unstable mode, or the unstable mode nearest `seed`.
///
/// The discrete spectrum at `opts.grid_n` supplies candidates above the
/// noise threshold; the chosen one is polished by Newton's method on both
/// that grid and a doubled grid, and the mode on the finer grid returned.
pub fn solve_rayleigh(
    profile: &ShearProfile,
    alpha: f64,
    seed: Option<C64>,
    opts: &RayleighOptions,
) -> Result<RayleighOutcome> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("wavenumber must be positive, got {alpha}")));
    }
    let coarse = ChebGrid::new(opts.grid_n);
    let (a, b) = rayleigh_pencil(profile, alpha, &coarse);
    let spectrum = dense_spectrum(&a, &b)?;
    let threshold = instability_threshold(noise_floor(alpha, &coarse)?);
    let max_imag = spectrum.iter().fold(f64::NEG_INFINITY, |m, c| m.max(c.im));
    let candidates: Vec<C64> = spectrum.into_iter().filter(|c| c.im > threshold).collect();
    let pick = match seed {
        Some(s) => candidates
            .iter()
            .min_by(|x, y| (*x - s).norm().total_cmp(&(*y - s).norm())),
        None => candidates.iter().max_by(|x, y| x.im.total_cmp(&y.im)),
    };
    let Some(&start) = pick else {
        return Ok(RayleighOutcome::NoUnstableMode { threshold, max_imag });
    };

    let first = refine_on(profile, alpha, &coarse, start, opts.residual_tol)?;
    let fine_grid = ChebGrid::new(2 * opts.grid_n);
    let fine = refine_on(profile, alpha, &fine_grid, first.c, opts.residual_tol)?;
    let delta = (fine.c - first.c).norm();
    let kind = if fine.c.im > threshold {
        ModeKind::Unstable
    } else {
        ModeKind::Stable
    };
    if kind != ModeKind::Unstable {
        return Ok(RayleighOutcome::NoUnstableMode {
            threshold,
            max_imag: fine.c.im,
        });
    }
    Ok(RayleighOutcome::Unstable(EigenMode {
        alpha,
        c: fine.c,
        nodes: fine_grid.nodes().to_vec(),
        phi: pad(&fine_grid, &fine.phi),
        residual: fine.residual,
        grid_n: fine_grid.n(),
        refinement_delta: delta,
        resolved: delta < opts.cauchy_tol,
        kind,
    }))
}

/// Pointwise relative residual of the Rayleigh equation for real data on
/// a Chebyshev grid.
pub fn rayleigh_residual(profile: &ShearProfile, grid: &ChebGrid, alpha: f64, c: f64, phi: &[f64]) -> f64 {
    let u = profile.sample(grid, 0);
    let u2 = profile.sample(grid, 2);
    let d2 = grid.d2();
    let (mut rmax, mut scale) = (0.0_f64, 0.0_f64);
    for i in 1..grid.n() {
        let lap = (0..grid.len()).map(|j| d2[(i, j)] * phi[j]).sum::<f64>() - alpha * alpha * phi[i];
        let t1 = u2[i] * phi[i];
        let t2 = (u[i] - c) * lap;
        rmax = rmax.max((t1 - t2).abs());
        scale = scale.max(t1.abs() + t2.abs());
    }
    rmax / scale.max(f64::MIN_POSITIVE)
}

/// The neutral mode carried by the certificate: wavenumber
/// `sqrt(-lambda1)`, wave speed `U(y_i)` and the Sturm–Liouville
/// eigenfunction, checked against the Rayleigh equation.
pub fn neutral_mode(profile: &ShearProfile, cert: &InstabilityCertificate) -> Result<EigenMode> {
    let w = cert
        .mode
        .as_ref()
        .ok_or_else(|| Error::NoCertificate("profile has no negative eigenvalue".into()))?;
    let grid = ChebGrid::new(w.nodes.len() - 1);
    let residual = rayleigh_residual(profile, &grid, w.alpha, w.phase_speed, &w.phi);
    if residual > 1e-6 {
        return Err(Error::NotConverged {
            what: "neutral mode residual",
            coarse: residual,
            fine: 1e-6,
        });
    }
    let mut phi: Vec<C64> = w.phi.iter().map(|v| C64::new(*v, 0.0)).collect();
    normalize_peak(&mut phi);
    Ok(EigenMode {
        alpha: w.alpha,
        c: C64::new(w.phase_speed, 0.0),
        nodes: w.nodes.clone(),
        phi,
        residual,
        grid_n: cert.grid_n,
        refinement_delta: cert.refinement_delta,
        resolved: true,
        kind: ModeKind::Neutral,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOptions {
    /// Continuation step as a fraction of the neutral wavenumber.
    pub step_fraction: f64,
    pub max_steps: usize,
    /// Grid doublings tried before a wavenumber is declared stable. The
    /// critical layer thins as `Im c -> 0`, so weak modes near the neutral
    /// point only show up on finer grids.
    pub escalations: u32,
    pub rayleigh: RayleighOptions,
}

impl BranchOptions {
    pub fn for_profile(profile: &ShearProfile) -> Self {
        Self {
            step_fraction: 0.02,
            max_steps: 80,
            escalations: 1,
            rayleigh: RayleighOptions::for_profile(profile),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSample {
    pub alpha: f64,
    pub c: C64,
    pub residual: f64,
    pub refinement_delta: f64,
    pub resolved: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BranchEnd {
    /// `Im c` fell below the threshold inside `bracket`; `estimate` is the
    /// zero of a line through the two outermost resolved samples.
    Closed { estimate: f64, bracket: [f64; 2] },
    /// The march stopped (wavenumber near zero or step budget spent) with
    /// the mode still unstable.
    Open { alpha: f64, imag: f64 },
}

impl BranchEnd {
    pub fn is_closed(&self) -> bool {
        matches!(self, Self::Closed { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchCurve {
    pub alpha_n: f64,
    /// Unstable samples in increasing `alpha`.
    pub samples: Vec<BranchSample>,
    pub lower: BranchEnd,
    pub upper: BranchEnd,
    pub threshold: f64,
}

impl BranchCurve {
    pub fn max_growth(&self) -> Option<&BranchSample> {
        self.samples
            .iter()
            .max_by(|a, b| (a.alpha * a.c.im).total_cmp(&(b.alpha * b.c.im)))
    }
}

enum MarchStop {
    Stable(f64),
    Open,
}

/// Follows the unstable branch from the neutral wavenumber in both
/// directions until `Im c` drops below threshold or the march runs out.
pub fn continue_branch(
    profile: &ShearProfile,
    cert: &InstabilityCertificate,
    opts: &BranchOptions,
) -> Result<BranchCurve> {
    let w = cert
        .mode
        .as_ref()
        .ok_or_else(|| Error::NoCertificate("profile has no negative eigenvalue".into()))?;
    let alpha_n = w.alpha;
    let h0 = opts.step_fraction * alpha_n;
    let threshold = instability_threshold(noise_floor(alpha_n, &ChebGrid::new(opts.rayleigh.grid_n))?);

    let mut samples = Vec::new();
    let mut stops = Vec::new();
    for dir in [-1.0, 1.0] {
        let mut alpha = alpha_n;
        let mut seed: Option<C64> = None;
        let mut h = h0;
        let mut steps = 0;
        let stop = loop {
            if steps == opts.max_steps {
                break MarchStop::Open;
            }
            let next = alpha + dir * h;
            if next <= 0.5 * h0 {
                break MarchStop::Open;
            }
            let mut outcome = solve_rayleigh(profile, next, seed, &opts.rayleigh);
            for k in 1..=opts.escalations {
                if !matches!(outcome, Ok(RayleighOutcome::NoUnstableMode { .. })) {
                    break;
                }
                let finer = RayleighOptions {
                    grid_n: opts.rayleigh.grid_n << k,
                    ..opts.rayleigh
                };
                outcome = solve_rayleigh(profile, next, seed, &finer);
            }
            match outcome {
                Ok(RayleighOutcome::Unstable(m)) => {
                    samples.push(BranchSample {
                        alpha: next,
                        c: m.c,
                        residual: m.residual,
                        refinement_delta: m.refinement_delta,
                        resolved: m.resolved,
                    });
                    alpha = next;
                    seed = Some(m.c);
                    h = h0;
                    steps += 1;
                }
                Ok(RayleighOutcome::NoUnstableMode { .. }) => break MarchStop::Stable(next),
                Err(Error::NewtonFailed { .. }) if h > h0 / 32.0 => h *= 0.5,
                Err(e) => return Err(e),
            }
        };
        stops.push(stop);
    }
    samples.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));

    let resolved: Vec<&BranchSample> = samples.iter().filter(|s| s.resolved).collect();
    let end = |stop: &MarchStop, upper: bool| -> BranchEnd {
        match *stop {
            MarchStop::Open => {
                let s = if upper { samples.last() } else { samples.first() };
                s.map_or(
                    BranchEnd::Open { alpha: alpha_n, imag: 0.0 },
                    |s| BranchEnd::Open { alpha: s.alpha, imag: s.c.im },
                )
            }
            MarchStop::Stable(at) => {
                let inner = if upper {
                    samples.last().map_or(alpha_n, |s| s.alpha)
                } else {
                    samples.first().map_or(alpha_n, |s| s.alpha)
                };
                let bracket = if upper { [inner, at] } else { [at, inner] };
                let pair = if upper {
                    resolved.len().checked_sub(2).map(|k| (resolved[k], resolved[k + 1]))
                } else if resolved.len() >= 2 {
                    Some((resolved[0], resolved[1]))
                } else {
                    None
                };
                let estimate = pair
                    .filter(|(a, b)| a.c.im != b.c.im)
                    .map(|(a, b)| a.alpha - a.c.im * (b.alpha - a.alpha) / (b.c.im - a.c.im))
                    .unwrap_or(0.5 * (bracket[0] + bracket[1]));
                BranchEnd::Closed { estimate, bracket }
            }
        }
    };
    let lower = end(&stops[0], false);
    let upper = end(&stops[1], true);
    Ok(BranchCurve {
        alpha_n,
        samples,
        lower,
        upper,
        threshold,
    })
}
