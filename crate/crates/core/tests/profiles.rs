mod common;

use common::heat::heat_step;
use proptest::prelude::*;
use shearspec_core::profiles::*;
use shearspec_core::Error;
use std::f64::consts::PI;

fn u(n: u32, a: f64) -> ShearProfile {
    ShearProfile::oscillatory(n, a).unwrap()
}

#[test]
fn point_values() {
    assert_eq!(u(1, 0.06).eval(0.5, 0).unwrap(), 0.5);
    assert!((u(1, 0.06).eval(0.0, 1).unwrap() - 1.753_982).abs() < 1e-6);
    assert!((u(2, 0.06).eval(1.0, 0).unwrap() - 1.0).abs() < 1e-15);
    assert!(matches!(u(1, 0.06).eval(1.5, 0), Err(Error::OutOfDomain(_))));
    assert!(u(1, 0.06).eval(0.3, 4).is_err());
}

#[test]
fn inflection_points_are_zeros_of_the_second_derivative() {
    assert!(ShearProfile::Linear.inflection_points(1e-12).is_empty());
    assert_eq!(u(1, 0.06).inflection_points(1e-12), vec![0.25, 0.5, 0.75]);
    let p2 = u(2, 0.06).inflection_points(1e-12);
    assert_eq!(p2.len(), 7);
    for (k, y) in p2.iter().enumerate() {
        assert!((y - (k + 1) as f64 / 8.0).abs() < 1e-15);
    }
}

#[test]
fn amplitude_window_examples() {
    let w = amplitude_window(0.06);
    assert!((w.delta - 0.246_018).abs() < 1e-6 && w.in_window);
    let w = amplitude_window(0.03);
    assert!((w.delta - 0.623_009).abs() < 1e-6 && !w.in_window);
    let w = amplitude_window(1.0 / (4.0 * PI));
    assert!(w.delta.abs() < 1e-15 && !w.in_window);
}

#[test]
fn drift_examples() {
    let p = u(1, 0.06);
    assert_eq!(p.drift(DriftParams { epsilon: 0.3, t: 0.0 }).unwrap(), p);
    let d = p.drift(DriftParams { epsilon: 1e-4, t: 1.0 }).unwrap();
    let rate = 1e-4 * (4.0 * PI).powi(2);
    assert!((rate - 157.914e-4).abs() < 1e-7);
    match d {
        ShearProfile::Oscillatory { amplitude, .. } => {
            assert!((amplitude - 0.06 * (-rate).exp()).abs() < 1e-16 && (amplitude - 0.06 * (-0.015_791_4_f64).exp()).abs() < 1e-8)
        }
        _ => panic!("kind changed"),
    }
    let eps = 1e-3;
    let t = 40.0 / (eps * (4.0 * PI).powi(2));
    let far = p.drift(DriftParams { epsilon: eps, t }).unwrap();
    let dev = (0..=1000)
        .map(|i| i as f64 / 1000.0)
        .map(|y| (far.eval(y, 0).unwrap() - y).abs())
        .fold(0.0, f64::max);
    assert!(dev < 1e-12, "{dev}");
    let tab = ShearProfile::tabulated(vec![0.0, 0.5, 1.0]).unwrap();
    assert!(tab.drift(DriftParams { epsilon: 1.0, t: 1.0 }).is_err());
    assert!(p.drift(DriftParams { epsilon: -1.0, t: 1.0 }).is_err());
}

#[test]
fn drift_matches_time_stepping() {
    let p = u(1, 0.06);
    let d = p.drift(DriftParams { epsilon: 1e-4, t: 1.0 }).unwrap();
    let (y, reference) = heat_step(|y| p.eval(y, 0).unwrap(), 1e-4, 1.0, 48, 400);
    let err = y
        .iter()
        .zip(&reference)
        .map(|(&y, r)| (d.eval(y, 0).unwrap() - r).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn sine_series_drift_matches_time_stepping() {
    let p = ShearProfile::sine_series(vec![0.02, 0.0, -0.01, 0.005]).unwrap();
    let d = p.drift(DriftParams { epsilon: 1e-2, t: 0.5 }).unwrap();
    let (y, reference) = heat_step(|y| p.eval(y, 0).unwrap(), 1e-2, 0.5, 32, 2000);
    let err = y
        .iter()
        .zip(&reference)
        .map(|(&y, r)| (d.eval(y, 0).unwrap() - r).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn tabulated_rejects_bad_walls() {
    assert!(ShearProfile::tabulated(vec![0.1, 0.5, 1.0]).is_err());
    assert!(ShearProfile::tabulated(vec![0.0, 1.0]).is_err());
}

proptest! {
    #[test]
    fn derivative_matches_central_difference(n in 1u32..5, a in 0.0f64..0.079, y in 0.001f64..0.999) {
        let p = u(n, a);
        let h = 1e-5;
        for order in 0..3 {
            let fd = (p.eval(y + h, order).unwrap() - p.eval(y - h, order).unwrap()) / (2.0 * h);
            let exact = p.eval(y, order + 1).unwrap();
            let scale = 1.0 + p.eval(y, order + 2).map(f64::abs).unwrap_or(0.0).max(exact.abs());
            prop_assert!((fd - exact).abs() < 1e-6 * scale, "order {}: {} vs {}", order, fd, exact);
        }
    }

    #[test]
    fn oscillatory_symmetry(n in 1u32..5, a in 0.0f64..0.079, y in 0.0f64..1.0) {
        let p = u(n, a);
        prop_assert!((p.eval(1.0 - y, 0).unwrap() + p.eval(y, 0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn monotone_in_the_window(n in 1u32..5, a in 0.0398f64..0.0795) {
        let p = u(n, a);
        let delta = amplitude_window(a).delta;
        prop_assert!((p.min_slope(8000 * n as usize) - delta).abs() < 1e-10);
        prop_assert!(delta > 0.0);
    }

    #[test]
    fn drift_is_a_semigroup(a in 0.0f64..0.079, eps in 0.0f64..1e-2, t1 in 0.0f64..3.0, t2 in 0.0f64..3.0) {
        let p = ShearProfile::sine_series(vec![a, -a, 0.5 * a]).unwrap();
        let two = p.drift(DriftParams { epsilon: eps, t: t1 }).unwrap().drift(DriftParams { epsilon: eps, t: t2 }).unwrap();
        let one = p.drift(DriftParams { epsilon: eps, t: t1 + t2 }).unwrap();
        match (two, one) {
            (ShearProfile::SineSeries { coeffs: c2 }, ShearProfile::SineSeries { coeffs: c1 }) => {
                for (x, y) in c2.iter().zip(&c1) {
                    prop_assert!((x - y).abs() < 1e-14);
                }
            }
            _ => prop_assert!(false),
        }
    }
}
