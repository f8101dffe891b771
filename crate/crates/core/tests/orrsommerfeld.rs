use shearspec_core::orrsommerfeld::*;
use shearspec_core::profiles::ShearProfile;
use shearspec_core::spectral::ChebGrid;
use shearspec_core::C64;

const ALPHA0: f64 = 2.980695_21;
const C0: C64 = C64::new(0.5, 0.087_807_995_08);

fn u1() -> ShearProfile {
    ShearProfile::oscillatory(1, 0.06).unwrap()
}

fn couette(alpha: f64, reynolds: f64) -> OsSpectrum {
    solve_os(
        &OsProblem {
            profile: ShearProfile::Linear,
            alpha,
            reynolds,
        },
        &OsOptions::default(),
    )
    .unwrap()
}

#[test]
fn couette_is_stable() {
    for (alpha, r) in [(0.5, 1e3), (2.0, 1e5)] {
        let s = couette(alpha, r);
        assert!(!s.modes.is_empty());
        assert!(s.modes[0].c.im < 0.0, "alpha {alpha} R {r}: {}", s.modes[0].c);
        assert!(s.most_unstable.is_none());
    }
}

#[test]
fn couette_decay_rate_scales_like_inverse_reynolds() {
    // max Re(lambda) R stays below a fixed negative constant
    let scaled: Vec<f64> = [1e3, 1e4]
        .iter()
        .map(|&r| couette(1.0, r).max_growth_rate().unwrap() * r)
        .collect();
    let c = -scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(c > 0.0, "{scaled:?}");
}

#[test]
fn retained_modes_satisfy_clamped_walls_and_agree_between_grids() {
    let s = solve_os(
        &OsProblem {
            profile: u1(),
            alpha: ALPHA0,
            reynolds: 1e4,
        },
        &OsOptions::default(),
    )
    .unwrap();
    let grid = ChebGrid::new(s.grid_n);
    for m in &s.modes {
        assert!(m.refinement_delta < 1e-6 * m.c.norm().max(1.0));
        let peak = m.phi.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        let re: Vec<f64> = m.phi.iter().map(|z| z.re).collect();
        let im: Vec<f64> = m.phi.iter().map(|z| z.im).collect();
        let (dr, di) = (grid.differentiate(&re), grid.differentiate(&im));
        let last = grid.n();
        for k in [0, last] {
            assert!(m.phi[k].norm() < 1e-10 * peak);
            assert!(dr[k].hypot(di[k]) < 1e-10 * peak * (last * last) as f64, "phi' at node {k}");
        }
    }
    let top = &s.modes[s.most_unstable.expect("unstable mode at R = 1e4")];
    assert!((top.c - C0).norm() < 5e-3, "{}", top.c);
    assert!(!s.warnings.is_empty(), "N = 200 is below 4 sqrt(alpha R)");
}

#[test]
fn viscous_mode_tends_to_inviscid_mode() {
    let tr = track_inviscid_limit(&u1(), ALPHA0, C0, &[1e4, 1e5, 1e6, 1e7], &OsOptions::default()).unwrap();
    assert_eq!(tr.points.len(), 4);
    assert!(tr.lost_at.is_none());
    for w in tr.points.windows(2) {
        assert!(w[1].defect < w[0].defect);
    }
    for p in &tr.points {
        assert!(p.c.im > 0.0);
        assert!(p.resolved);
    }
    assert_eq!(tr.converging, Some(true));
    let slope = tr.slope.unwrap();
    assert!(slope > -1.0 && slope < -0.25, "slope {slope}");
}

#[test]
fn spectrum_at_large_reynolds_contains_inviscid_mode() {
    let s = solve_os(
        &OsProblem {
            profile: u1(),
            alpha: ALPHA0,
            reynolds: 1e7,
        },
        &OsOptions::default(),
    )
    .unwrap();
    let top = &s.modes[s.most_unstable.unwrap()];
    assert!((top.c - C0).norm() < 1e-2, "{}", top.c);
}

#[test]
fn single_point_schedule_makes_no_monotonicity_claim() {
    let tr = track_inviscid_limit(&u1(), ALPHA0, C0, &[1e5], &OsOptions::default()).unwrap();
    assert_eq!(tr.points.len(), 1);
    assert_eq!(tr.converging, None);
    assert_eq!(tr.slope, None);
}

#[test]
fn decreasing_schedule_is_rejected() {
    assert!(track_inviscid_limit(&u1(), ALPHA0, C0, &[1e5, 1e4], &OsOptions::default()).is_err());
}

#[test]
fn growth_rates_are_positive_and_control_is_negative() {
    let rows = growth_rate_vs_n(&[1, 2], 0.06, 1e6, &OsOptions::default()).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(r.growth_rate > 0.0, "{r:?}");
        assert!(r.growth_rate <= r.inviscid_growth_rate.unwrap() * 1.01);
    }
    assert!(growth_rate_vs_n(&[], 0.06, 1e6, &OsOptions::default()).unwrap().is_empty());
    let control = growth_rate_vs_n(&[1], 0.0, 1e4, &OsOptions::default()).unwrap();
    assert!(control[0].growth_rate < 0.0);
    assert!(control[0].alpha_n.is_none());
}

#[test]
fn higher_sobolev_norms_grow_faster_with_reynolds() {
    let t = boundary_layer_diagnostic(&u1(), ALPHA0, C0, &[1e5, 1e6], &[0.0, 1.0, 2.0], &OsOptions::default()).unwrap();
    assert_eq!(t.rows.len(), 2);
    let l2: Vec<f64> = t.rows.iter().map(|r| r.norms[0].1).collect();
    assert!((l2[0] / l2[1] - 1.0).abs() < 0.1, "{l2:?}");
    let e: Vec<f64> = t.exponents.iter().map(|p| p.1).collect();
    assert!(e[2] > e[1] && e[1] > e[0] - 1e-3, "{e:?}");
}

#[test]
fn single_reynolds_number_gives_norms_only() {
    let t = boundary_layer_diagnostic(&u1(), ALPHA0, C0, &[1e5], &[0.0, 1.5], &OsOptions::default()).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.exponents.is_empty());
    let m = refine_os_mode(
        &OsProblem {
            profile: u1(),
            alpha: ALPHA0,
            reynolds: 1e5,
        },
        C0,
        &OsOptions::default(),
    )
    .unwrap();
    let norms = mode_sobolev_norms(&m, &[0.0, 1.5]).unwrap();
    assert!((norms[1].1 / t.rows[0].norms[1].1 - 1.0).abs() < 1e-8);
}

#[test]
fn sobolev_norm_of_sine() {
    let g = ChebGrid::new(64);
    let phi: Vec<C64> = g
        .nodes()
        .iter()
        .map(|&y| C64::new((std::f64::consts::PI * y).sin(), 0.0))
        .collect();
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((sobolev_norm(&g, &phi, 0.0) - 0.5_f64.sqrt()).abs() < 1e-12);
    let h1 = (0.5 * (1.0 + pi2)).sqrt();
    assert!((sobolev_norm(&g, &phi, 1.0) - h1).abs() < 1e-10);
}
