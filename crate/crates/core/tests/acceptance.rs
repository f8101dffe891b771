//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs with its own harness so that every criterion is reported even when
//! an earlier one fails; the process exits nonzero if any failed.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use common::fd_oracle::{fd_eigenvalue_extrapolated, oscillatory_potential};
use common::fields::{curl, div, random_field};
use common::heat::heat_step;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use shearspec_core::catseye::*;
use shearspec_core::orrsommerfeld::*;
use shearspec_core::profiles::*;
use shearspec_core::rayleigh::*;
use shearspec_core::shear3d::*;
use shearspec_core::spectral::ChebGrid;
use shearspec_core::sturm::*;
use shearspec_core::C64;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

const AMPLITUDES: [f64; 3] = [0.045, 0.06, 0.075];

fn u1() -> ShearProfile {
    ShearProfile::oscillatory(1, 0.06).unwrap()
}

fn alpha0() -> f64 {
    0.5 * certify_instability(&u1()).unwrap().mode.unwrap().alpha
}

fn c0() -> C64 {
    let p = u1();
    solve_rayleigh(&p, alpha0(), None, &RayleighOptions::for_profile(&p))
        .unwrap()
        .mode()
        .unwrap()
        .c
}

fn sl_certificate() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        for a in AMPLITUDES {
            let p = ShearProfile::oscillatory(n, a).map_err(|e| e.to_string())?;
            let cert = certify_instability(&p).map_err(|e| e.to_string())?;
            let m = cert.mode.ok_or(format!("no negative eigenvalue for n={n} A={a}"))?;
            let bound = lambda1_bound(n, amplitude_window(a).delta).map_err(|e| e.to_string())?;
            check!(m.lambda1 < 0.0 && m.lambda1 <= bound, "n={n} A={a}: lambda1 {} vs bound {bound}", m.lambda1);
            let fd = fd_eigenvalue_extrapolated(&oscillatory_potential(n, a, m.inflection), 4096, 0);
            let rel = (m.lambda1 - fd).abs() / fd.abs();
            check!(rel < 1e-6, "n={n} A={a}: collocation {} vs FD {fd}", m.lambda1);
            worst = worst.max(rel);
        }
    }
    Ok(format!("12 cases, worst collocation/FD gap {worst:.1e}"))
}

fn spectral_gap() -> Outcome {
    let mut worst = f64::INFINITY;
    for n in 1..=4 {
        for a in AMPLITUDES {
            let p = ShearProfile::oscillatory(n, a).map_err(|e| e.to_string())?;
            let cert = certify_instability(&p).map_err(|e| e.to_string())?;
            let l1 = cert.mode.as_ref().unwrap().lambda1;
            for y in p.inflection_points(1e-13) {
                let s = solve_sl(&build_q(&p, y, default_grid(&p)).unwrap(), 2).map_err(|e| e.to_string())?;
                let l2 = s.eigenvalues[1];
                check!(l2 >= -1e-8 * l1.abs(), "n={n} A={a} y={y}: lambda2 = {l2}");
                worst = worst.min(l2 / l1.abs());
            }
        }
    }
    Ok(format!("smallest lambda2/|lambda1| = {worst:.3}"))
}

fn neutral_anchor() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        let p = ShearProfile::oscillatory(n, 0.06).unwrap();
        let cert = certify_instability(&p).map_err(|e| e.to_string())?;
        let m = neutral_mode(&p, &cert).map_err(|e| e.to_string())?;
        check!(m.c == C64::new(0.5, 0.0), "n={n}: c = {}", m.c);
        check!(m.residual < 1e-6, "n={n}: residual {:.2e}", m.residual);
        worst = worst.max(m.residual);
    }
    Ok(format!("worst Rayleigh residual {worst:.1e}"))
}

fn inviscid_branch() -> Outcome {
    let p = u1();
    let cert = certify_instability(&p).map_err(|e| e.to_string())?;
    let a1 = cert.mode.as_ref().unwrap().alpha;
    let b = continue_branch(&p, &cert, &BranchOptions::for_profile(&p)).map_err(|e| e.to_string())?;
    check!(!b.samples.is_empty(), "no unstable samples");
    check!(b.samples.iter().all(|s| s.c.im > b.threshold), "sample below threshold inside the branch");
    // admissible endpoints: sqrt(-lambda) over every negative eigenvalue of every L_i
    let mut roots = Vec::new();
    for y in p.inflection_points(1e-13) {
        let s = solve_sl(&build_q(&p, y, default_grid(&p)).unwrap(), 4).map_err(|e| e.to_string())?;
        roots.extend(s.eigenvalues.iter().filter(|l| **l < 0.0).map(|l| (-l).sqrt()));
    }
    let near = |a: f64| roots.iter().any(|r| (a - r).abs() <= 0.02 * r);
    let end = |e: &BranchEnd, side: &str| -> Result<f64, String> {
        match e {
            BranchEnd::Closed { estimate, .. } => Ok(*estimate),
            BranchEnd::Open { alpha, imag } => Err(format!(
                "{side} end does not close: Im c = {imag:.4} still above threshold at alpha = {alpha:.4}"
            )),
        }
    };
    let hi = end(&b.upper, "upper")?;
    let lo = end(&b.lower, "lower")?;
    check!(lo < a1 && a1 < hi, "alpha_1 = {a1} not inside ({lo}, {hi})");
    check!(near(lo) && near(hi), "endpoints ({lo}, {hi}) not within 2% of any of {roots:?}");
    Ok(format!("band ({lo:.4}, {hi:.4}) around alpha_1 = {a1:.4}"))
}

fn couette_control() -> Outcome {
    let mut top = f64::NEG_INFINITY;
    for alpha in [0.5, 1.0, 2.0] {
        for r in [1e3, 1e4, 1e5] {
            let g = control_growth_rate(alpha, r, &OsOptions::default()).map_err(|e| e.to_string())?;
            check!(g < 0.0, "alpha={alpha} R={r}: max Re lambda = {g}");
            top = top.max(g);
        }
        let grid = ChebGrid::new(128);
        let thr = instability_threshold(noise_floor(alpha, &grid).map_err(|e| e.to_string())?);
        let spec = rayleigh_spectrum(&ShearProfile::Linear, alpha, &grid).map_err(|e| e.to_string())?;
        for c in spec {
            check!(
                c.im.abs() <= thr && c.re >= -thr && c.re <= 1.0 + thr,
                "alpha={alpha}: inviscid eigenvalue {c} off [0, 1] (threshold {thr:.1e})"
            );
        }
    }
    Ok(format!("largest viscous Re lambda {top:.3e}; inviscid spectra real in [0, 1]"))
}

fn viscous_limit() -> Outcome {
    let a0 = alpha0();
    let tr = track_inviscid_limit(&u1(), a0, c0(), &[1e4, 1e5, 1e6, 1e7], &OsOptions::default())
        .map_err(|e| e.to_string())?;
    check!(tr.points.len() == 4, "mode lost at R = {:?}", tr.lost_at);
    for p in &tr.points {
        if p.reynolds >= 1e5 {
            check!(p.c.im > 0.0, "R={}: Im c = {}", p.reynolds, p.c.im);
        }
    }
    for w in tr.points.windows(2) {
        check!(w[1].defect < w[0].defect, "defect does not decrease at R = {}", w[1].reynolds);
    }
    let slope = tr.slope.ok_or("no slope")?;
    check!(slope > -1.0 && slope < -0.25, "slope {slope}");
    Ok(format!("defect slope {slope:.3}"))
}

fn cats_eye() -> Outcome {
    let p = u1();
    let cert = certify_instability(&p).map_err(|e| e.to_string())?;
    let f = build_f(&p).map_err(|e| e.to_string())?;
    let g = ChebGrid::new(128);
    let psi: Vec<f64> = g.nodes().iter().map(|&y| psi_star_rel(1, 0.06, y)).collect();
    let psi_yy = g.differentiate(&g.differentiate(&psi));
    let rec = psi
        .iter()
        .zip(&psi_yy)
        .map(|(s, d)| (d - f.value(*s).unwrap()).abs())
        .fold(0.0, f64::max);
    check!(rec < 1e-6, "f reconstruction residual {rec:.2e}");

    let lead = leading_order_wave(&p, &cert, 1e-3).map_err(|e| e.to_string())?;
    let cps = critical_points(&lead);
    let saddles: Vec<_> = cps.iter().filter(|c| c.kind == CriticalKind::Saddle).collect();
    let centres: Vec<_> = cps.iter().filter(|c| c.kind == CriticalKind::Center).collect();
    check!(saddles.len() == 1 && centres.len() == 1, "critical points {cps:?}");
    check!(saddles[0].xi.abs() < 1e-9 && (saddles[0].y - 0.5).abs() < 1e-9, "saddle at {:?}", saddles[0]);
    check!((centres[0].xi - PI).abs() < 1e-9 && (centres[0].y - 0.5).abs() < 1e-9, "centre at {:?}", centres[0]);

    let opts = WaveOptions::for_profile(&p);
    let defect = |beta: f64| -> Result<f64, String> {
        let w = newton_branch(&p, &cert, beta, &opts).map_err(|e| e.to_string())?;
        Ok(sup_distance(&w, &leading_order_wave(&p, &cert, beta).map_err(|e| e.to_string())?))
    };
    let ratio = defect(1e-3)? / defect(5e-4)?;
    check!(ratio >= 1.8, "defect ratio {ratio}");

    let kernel = newton_branch(&p, &cert, 0.0, &opts).map_err(|e| e.to_string())?.alpha_sq;
    let mut gaps = Vec::new();
    for beta in [1e-2, 1e-3, 1e-4] {
        gaps.push((newton_branch(&p, &cert, beta, &opts).map_err(|e| e.to_string())?.alpha_sq - kernel).abs());
    }
    check!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "alpha^2 gaps {gaps:?}");
    Ok(format!("defect ratio {ratio:.2}, alpha^2 gaps {:.1e} {:.1e} {:.1e}", gaps[0], gaps[1], gaps[2]))
}

fn persistence() -> Outcome {
    let opts = Shear3DOptions::default();
    let (a0, c0) = (alpha0(), c0());
    let grid = opts.grid().map_err(|e| e.to_string())?;
    let g = |y: f64, z: f64| (PI * y).sin() * (2.0 * PI * z).cos();

    let flat = Shear3DProfile::z_independent(grid.clone(), &u1()).map_err(|e| e.to_string())?;
    let spec = solve_3d_modes(&flat, a0, &opts).map_err(|e| e.to_string())?;
    let top = spec.most_unstable().ok_or("no unstable 3D mode at eps = 0")?;
    let d0 = (top.c - c0).norm();
    check!(d0 < opts.two_grid_tol, "eps = 0: c = {} vs c0 = {c0}, gap {d0:.2e}", top.c);
    let mut inv = top.residuals.invariants_max();

    let mut defects = Vec::new();
    for eps in [1e-3, 1e-2] {
        let prof = Shear3DProfile::perturbed(grid.clone(), &u1(), eps, g).map_err(|e| e.to_string())?;
        let m = track_3d_mode(&prof, a0, c0, &opts).map_err(|e| e.to_string())?;
        check!(m.c.im > 0.0, "eps = {eps}: Im c = {}", m.c.im);
        check!(m.refinement_delta < opts.two_grid_tol, "eps = {eps}: two-grid delta {:.2e}", m.refinement_delta);
        inv = inv.max(m.residuals.invariants_max());
        defects.push((m.c - c0).norm());
    }
    check!(defects[0] < defects[1], "defects {defects:?} not increasing");
    check!(inv < 1e-8, "invariant residual {inv:.2e}");
    Ok(format!(
        "eps=0 gap {d0:.1e}; defects {:.2e} < {:.2e}; invariants {inv:.1e}",
        defects[0], defects[1]
    ))
}

fn div_curl_round_trip() -> Outcome {
    let g = StripGrid::new(40, 8, 1.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cmax = |f: &nalgebra::DMatrix<C64>| f.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    let (mut dc, mut fe): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let (v, w) = random_field(&g, &mut rng);
        let (f1, f2) = (div(&g, &v, &w), curl(&g, &v, &w));
        let r = div_curl_reconstruct(&g, &f1, &f2).map_err(|e| e.to_string())?;
        let scale = cmax(&f1).max(cmax(&f2));
        dc = dc.max(cmax(&(div(&g, &r.v, &r.w) - &f1)) / scale);
        dc = dc.max(cmax(&(curl(&g, &r.v, &r.w) - &f2)) / scale);
        let size = cmax(&v).max(cmax(&w));
        fe = fe.max(cmax(&(&r.v - &v)).max(cmax(&(&r.w - &w))) / size);
    }
    check!(dc < 1e-8, "div/curl mismatch {dc:.2e}");
    check!(fe < 1e-6, "field mismatch {fe:.2e}");
    Ok(format!("div/curl {dc:.1e}, field {fe:.1e}"))
}

fn drift_exactness() -> Outcome {
    let p = u1();
    let d = p.drift(DriftParams { epsilon: 1e-4, t: 1.0 }).map_err(|e| e.to_string())?;
    let (y, reference) = heat_step(|y| p.eval(y, 0).unwrap(), 1e-4, 1.0, 48, 400);
    let err = y
        .iter()
        .zip(&reference)
        .map(|(&y, r)| (d.eval(y, 0).unwrap() - r).abs())
        .fold(0.0, f64::max);
    check!(err < 1e-10, "max-norm gap {err:.2e}");
    Ok(format!("max-norm gap {err:.1e}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Sturm-Liouville instability certificate", sl_certificate),
        ("spectral gap lambda2", spectral_gap),
        ("neutral-mode anchor", neutral_anchor),
        ("inviscid unstable branch", inviscid_branch),
        ("Couette control", couette_control),
        ("viscous instability and inviscid limit", viscous_limit),
        ("cat's-eye bifurcation", cats_eye),
        ("3D reduction and persistence", persistence),
        ("div-curl round trip", div_curl_round_trip),
        ("drift exactness", drift_exactness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(msg) => println!("criterion {:>2} PASS {name} ({secs:.1} s): {msg}", k + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name} ({secs:.1} s): {msg}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
