mod common;

use common::fields::{curl, div, random_field};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shearspec_core::profiles::ShearProfile;
use shearspec_core::shear3d::*;
use shearspec_core::{Error, C64};
use std::f64::consts::PI;

const I: C64 = C64::new(0.0, 1.0);

/// Inviscid eigenvalue of `U_1` (A = 0.06) at half its neutral wavenumber.
const C0: C64 = C64::new(0.5, 0.0878080);

fn u1() -> ShearProfile {
    ShearProfile::oscillatory(1, 0.06).unwrap()
}

fn alpha0() -> f64 {
    2.980_695_21
}

fn g_default(y: f64, z: f64) -> f64 {
    (PI * y).sin() * (2.0 * PI * z).cos()
}

fn cmax(f: &DMatrix<C64>) -> f64 {
    f.iter().fold(0.0, |m, z| m.max(z.norm()))
}

#[test]
fn div_curl_round_trip_on_random_fields() {
    let g = StripGrid::new(40, 8, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let (v, w) = random_field(&g, &mut rng);
        let (f1, f2) = (div(&g, &v, &w), curl(&g, &v, &w));
        let r = div_curl_reconstruct(&g, &f1, &f2).unwrap();
        let scale = cmax(&f1).max(cmax(&f2));
        assert!(cmax(&(div(&g, &r.v, &r.w) - &f1)) < 1e-8 * scale);
        assert!(cmax(&(curl(&g, &r.v, &r.w) - &f2)) < 1e-8 * scale);
        let size = cmax(&v).max(cmax(&w));
        assert!(cmax(&(&r.v - &v)) < 1e-6 * size);
        assert!(cmax(&(&r.w - &w)) < 1e-6 * size);
        assert!(r.constant.is_finite() && r.constant > 0.0);
    }
}

#[test]
fn zero_data_gives_zero_field() {
    let g = StripGrid::new(16, 4, 1.0).unwrap();
    let z = DMatrix::zeros(17, 4);
    let r = div_curl_reconstruct(&g, &z, &z).unwrap();
    assert_eq!(cmax(&r.v), 0.0);
    assert_eq!(cmax(&r.w), 0.0);
    assert_eq!(r.constant, 0.0);
}

#[test]
fn irrotational_field_from_a_divergence() {
    let g = StripGrid::new(32, 8, 1.0).unwrap();
    let f1 = DMatrix::from_fn(33, 8, |i, j| C64::from((2.0 * PI * g.z()[j]).cos() * (PI * g.y()[i]).sin()));
    let f2 = DMatrix::zeros(33, 8);
    let r = div_curl_reconstruct(&g, &f1, &f2).unwrap();
    assert!(cmax(&curl(&g, &r.v, &r.w)) < 1e-8);
    assert!(cmax(&(div(&g, &r.v, &r.w) - &f1)) < 1e-8);
    assert!(cmax(&r.v.rows(0, 1).into_owned()) < 1e-13);
    assert!(cmax(&r.v.rows(32, 1).into_owned()) < 1e-13);
    assert!(r.constant > 0.0 && r.constant < 10.0, "{}", r.constant);
}

#[test]
fn data_with_nonzero_mean_is_rejected() {
    let g = StripGrid::new(16, 4, 1.0).unwrap();
    let one = DMatrix::from_element(17, 4, C64::from(1.0));
    let zero = DMatrix::zeros(17, 4);
    assert!(matches!(div_curl_reconstruct(&g, &one, &zero), Err(Error::InvalidInput(_))));
    assert!(matches!(div_curl_reconstruct(&g, &zero, &one), Err(Error::InvalidInput(_))));
}

#[test]
fn projector_is_idempotent_and_kills_constants() {
    let g = StripGrid::new(24, 4, 1.0).unwrap();
    let q = projector(&g);
    assert!(cmax(&(&q * &q - &q)) < 1e-13);
    let one = DVector::from_element(25, C64::from(1.0));
    assert!((&q * one).camax() < 1e-13);
}

#[test]
fn constant_flow_gives_scalar_f() {
    let g = StripGrid::new(16, 8, 1.0).unwrap();
    let p = Shear3DProfile::from_fn(g, |_, _| 0.7).unwrap();
    let ak = assemble_ak(&p, 1.5).unwrap();
    assert_eq!(ak.f_part.band, 0);
    let f = ak.f_part.to_dense();
    let expect = DMatrix::identity(f.nrows(), f.ncols()) * (-I * 1.5 * 0.7);
    assert!(cmax(&(f - expect)) < 1e-13);
}

fn smooth_input(g: &StripGrid, rng: &mut ChaCha8Rng) -> (Vec<DVector<C64>>, Vec<DVector<C64>>) {
    let n1 = g.ny() + 1;
    let mut make = || {
        let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        DVector::from_fn(n1, |i, _| {
            let y = g.y()[i];
            C64::new(a * (PI * y).sin() + 0.3 * (3.0 * PI * y).cos(), b * y * (1.0 - y))
        })
    };
    let u = (0..g.nk()).map(|_| make()).collect();
    let o = (0..g.nk()).map(|_| make()).collect();
    (u, o)
}

#[test]
fn vorticity_row_of_k_reduces_to_the_2d_formula() {
    let g = StripGrid::new(48, 8, 1.0).unwrap();
    let base = u1();
    let p = Shear3DProfile::z_independent(g.clone(), &base).unwrap();
    let a0 = alpha0();
    let ak = assemble_ak(&p, a0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (u, o) = smooth_input(&g, &mut rng);
    let n1 = g.ny() + 1;
    let mut x = DVector::zeros(2 * n1 * g.nk());
    for q in 0..g.nk() {
        x.rows_mut(2 * n1 * q, n1).copy_from(&u[q]);
        x.rows_mut(2 * n1 * q + n1, n1).copy_from(&o[q]);
    }
    let kx = ak.k_part.mul(&x);
    let (_, w) = ak.velocity(&u, &o);
    let du = base.sample(g.cheb(), 1);
    let mut err: f64 = 0.0;
    let mut size: f64 = 0.0;
    for q in 0..g.nk() {
        for i in 1..g.ny() {
            let expect = -I * a0 * du[i] * w[q][i];
            err = err.max((kx[2 * n1 * q + n1 + i] - expect).norm());
            size = size.max(expect.norm());
        }
    }
    assert!(err < 1e-9 * size, "{err} vs {size}");
}

#[test]
fn k_singular_values_converge_and_decay() {
    // Leading pair (the k = +-1 blocks) grows slowly with resolution; the
    // rest of the spectrum converges index by index.
    let base = u1();
    let sv = |ny: usize| {
        let g = StripGrid::new(ny, 4, 1.0).unwrap();
        let p = Shear3DProfile::perturbed(g, &base, 0.1, g_default).unwrap();
        let k = assemble_ak(&p, alpha0()).unwrap().k_part.to_dense();
        let n1 = ny + 1;
        let keep: Vec<usize> = (0..k.nrows())
            .filter(|r| {
                let i = r % (2 * n1);
                i != n1 && i != 2 * n1 - 1
            })
            .collect();
        let mut s: Vec<f64> = k.select_rows(keep.iter()).singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    };
    let (s32, s48) = (sv(32), sv(48));
    for j in [3, 6, 10, 20, 40] {
        assert!((s32[j] - s48[j]).abs() < 0.05 * s48[j], "index {j}: {} vs {}", s32[j], s48[j]);
    }
    assert!(s48[10] < s48[3] && s48[20] < s48[10] && s48[40] < s48[20] && s48[80] < s48[40]);
    assert!(s48[80] < 0.05 * s48[3]);
}

#[test]
fn f_part_spectrum_lies_on_the_imaginary_range_of_u() {
    let g = StripGrid::new(16, 8, 1.0).unwrap();
    let p = Shear3DProfile::perturbed(g, &u1(), 0.05, g_default).unwrap();
    let a0 = alpha0();
    let f = assemble_ak(&p, a0).unwrap().f_part.to_dense();
    assert!(cmax(&(&f + f.adjoint())) < 1e-13);
    let (lo, hi) = p.values.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let lam = nalgebra::linalg::Schur::try_new(f, 1e-14, 10_000).expect("schur").eigenvalues().unwrap();
    for l in lam.iter() {
        assert!(l.re.abs() < 1e-10);
        let s = -l.im / a0;
        assert!(s > lo - 1e-8 && s < hi + 1e-8, "{s} outside [{lo}, {hi}]");
    }
}

#[test]
fn z_independent_flow_recovers_the_2d_mode() {
    let opts = Shear3DOptions {
        ny: 128,
        nz: 8,
        ..Default::default()
    };
    let p = Shear3DProfile::z_independent(opts.grid().unwrap(), &u1()).unwrap();
    let s = solve_3d_modes(&p, alpha0(), &opts).unwrap();
    let m = s.most_unstable().expect("unstable mode");
    assert!((m.c - C0).norm() < 1e-6, "{}", m.c);
    assert!(m.refinement_delta < opts.two_grid_tol);
    assert!(m.residuals.invariants_max() < 1e-8, "{:?}", m.residuals);
    assert!(m.tail < 1e-5, "{}", m.tail);
}

#[test]
fn linear_shear_has_no_growing_modes() {
    let opts = Shear3DOptions {
        ny: 64,
        nz: 8,
        ..Default::default()
    };
    let p = Shear3DProfile::z_independent(opts.grid().unwrap(), &ShearProfile::Linear).unwrap();
    let s = solve_3d_modes(&p, 2.0, &opts).unwrap();
    assert!(s.modes.is_empty());
}

#[test]
fn perturbed_mode_satisfies_the_equations() {
    let opts = Shear3DOptions {
        ny: 192,
        nz: 8,
        ..Default::default()
    };
    let p = Shear3DProfile::perturbed(opts.grid().unwrap(), &u1(), 1e-2, g_default).unwrap();
    let m = track_3d_mode(&p, alpha0(), C0, &opts).unwrap();
    assert!(m.c.im > 0.0);
    assert!(m.residuals.invariants_max() < 1e-8, "{:?}", m.residuals);
    assert!(m.residuals.equations_max() < 1e-6, "{:?}", m.residuals);
    assert!(m.refinement_delta < opts.two_grid_tol);
    // Fourier content of u decays geometrically away from k = 0
    let g = opts.grid().unwrap();
    let amp: Vec<f64> = g.to_modes(&m.u).iter().map(|v| v.camax()).collect();
    let k0 = g.kmax();
    for k in 0..k0 {
        assert!(amp[k0 + k + 1] < 0.5 * amp[k0 + k], "{amp:?}");
        assert!(amp[k0 - k - 1] < 0.5 * amp[k0 - k], "{amp:?}");
    }
    assert!(amp[0] < 2e-3 * amp[k0]);
}

#[test]
fn persistence_defect_grows_with_the_perturbation() {
    let opts = Shear3DOptions {
        ny: 96,
        nz: 8,
        ..Default::default()
    };
    let t = persistence_sweep(&u1(), &g_default, &[0.0, 1e-3, 1e-2], alpha0(), &opts).unwrap();
    assert!(t.increasing);
    assert!(t.rows.iter().all(|r| !r.lost && r.c.unwrap().im > 0.0));
    assert!(t.rows[0].defect.unwrap() < 1e-6);
    // second order in eps: the reduced problem is even in eps g
    let ratio = t.rows[2].defect.unwrap() / t.rows[1].defect.unwrap();
    assert!(ratio > 50.0 && ratio < 200.0, "{ratio}");
    assert_eq!(t.rows[0].w14, 0.0);
    assert!((t.rows[2].w14 / t.rows[1].w14 - 10.0).abs() < 1e-9);
}

/// Composite Simpson in both directions on a uniform grid.
fn simpson_w14(g: impl Fn(f64, f64) -> (f64, f64, f64), m: usize) -> f64 {
    let h = 1.0 / m as f64;
    let wt = |i: usize| if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
    let mut s = 0.0;
    for i in 0..=m {
        for j in 0..=m {
            let (v, gy, gz) = g(i as f64 * h, j as f64 * h);
            let grad = gy * gy + gz * gz;
            s += wt(i) * wt(j) * (v.powi(4) + grad * grad);
        }
    }
    (s * h * h / 9.0).powf(0.25)
}

#[test]
fn w14_norm_matches_simpson_oracle() {
    let g = StripGrid::new(48, 16, 1.0).unwrap();
    let vals = DMatrix::from_fn(49, 16, |i, j| g_default(g.y()[i], g.z()[j]));
    let oracle = simpson_w14(
        |y, z| {
            let (sy, cy, sz, cz) = ((PI * y).sin(), (PI * y).cos(), (2.0 * PI * z).sin(), (2.0 * PI * z).cos());
            (sy * cz, PI * cy * cz, -2.0 * PI * sy * sz)
        },
        400,
    );
    let got = w14_norm(&g, &vals);
    assert!((got - oracle).abs() < 1e-8 * oracle, "{got} vs {oracle}");
}

#[test]
fn direct_velocity_formulation_agrees() {
    let eps = 1e-2;
    let coarse = StripGrid::new(64, 8, 1.0).unwrap();
    let pc = Shear3DProfile::perturbed(coarse, &u1(), eps, g_default).unwrap();
    let direct = direct_eigenvalue(&pc, alpha0(), C0).unwrap();
    let opts = Shear3DOptions {
        ny: 96,
        nz: 8,
        two_grid: false,
        ..Default::default()
    };
    let pf = Shear3DProfile::perturbed(opts.grid().unwrap(), &u1(), eps, g_default).unwrap();
    let tracked = track_3d_mode(&pf, alpha0(), C0, &opts).unwrap();
    assert!((direct - tracked.c).norm() < 1e-5, "{direct} vs {}", tracked.c);
}

#[test]
fn perturbation_must_vanish_on_the_walls() {
    let g = StripGrid::new(16, 4, 1.0).unwrap();
    let bad = Shear3DProfile::perturbed(g, &u1(), 1e-2, |_, z| (2.0 * PI * z).cos());
    assert!(matches!(bad, Err(Error::InvalidProfile(_))));
}

#[test]
fn grid_validation() {
    assert!(StripGrid::new(16, 5, 1.0).is_err());
    assert!(StripGrid::new(4, 4, 1.0).is_err());
    assert!(StripGrid::new(16, 4, 0.0).is_err());
    assert!(assemble_ak(&Shear3DProfile::z_independent(StripGrid::new(16, 4, 1.0).unwrap(), &u1()).unwrap(), 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn f_is_skew_adjoint(amp in 0.0f64..0.2, kz in 1u32..3, ly in 1u32..4) {
        let g = StripGrid::new(12, 8, 1.0).unwrap();
        let p = Shear3DProfile::perturbed(g, &u1(), amp, |y, z| {
            (ly as f64 * PI * y).sin() * (2.0 * PI * kz as f64 * z).cos()
        }).unwrap();
        let f = assemble_ak(&p, 1.0).unwrap().f_part.to_dense();
        prop_assert!(cmax(&(&f + f.adjoint())) < 1e-13);
    }

    #[test]
    fn reconstruction_is_linear(seed in 0u64..1000, s in -3.0f64..3.0) {
        let g = StripGrid::new(16, 4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v1, w1) = random_field(&g, &mut rng);
        let (v2, w2) = random_field(&g, &mut rng);
        let data = |v: &DMatrix<C64>, w: &DMatrix<C64>| (div(&g, v, w), curl(&g, v, w));
        let (a1, b1) = data(&v1, &w1);
        let (a2, b2) = data(&v2, &w2);
        let r1 = div_curl_reconstruct(&g, &a1, &b1).unwrap();
        let r2 = div_curl_reconstruct(&g, &a2, &b2).unwrap();
        let rs = div_curl_reconstruct(&g, &(&a1 + &a2 * C64::from(s)), &(&b1 + &b2 * C64::from(s))).unwrap();
        let scale = 1.0 + cmax(&r1.v).max(cmax(&r2.v)) * (1.0 + s.abs());
        prop_assert!(cmax(&(&rs.v - &r1.v - &r2.v * C64::from(s))) < 1e-10 * scale);
        prop_assert!(cmax(&(&rs.w - &r1.w - &r2.w * C64::from(s))) < 1e-10 * scale);
    }

    #[test]
    fn projector_idempotent_on_any_grid(ny in 8usize..40) {
        let g = StripGrid::new(ny, 4, 1.0).unwrap();
        let q = projector(&g);
        prop_assert!(cmax(&(&q * &q - &q)) < 1e-12);
    }
}
