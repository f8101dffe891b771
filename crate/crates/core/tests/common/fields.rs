use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use shearspec_core::shear3d::StripGrid;
use shearspec_core::C64;
use std::f64::consts::PI;

const I: C64 = C64::new(0.0, 1.0);

pub fn div(g: &StripGrid, v: &DMatrix<C64>, w: &DMatrix<C64>) -> DMatrix<C64> {
    g.dy(v) + g.dz(w)
}

pub fn curl(g: &StripGrid, v: &DMatrix<C64>, w: &DMatrix<C64>) -> DMatrix<C64> {
    g.dy(w) - g.dz(v)
}

/// A smooth admissible field: `v` vanishes on the walls and the
/// z-average of `w` vanishes on both walls.
pub fn random_field(g: &StripGrid, rng: &mut ChaCha8Rng) -> (DMatrix<C64>, DMatrix<C64>) {
    let kmax = g.kmax() as i64;
    let mut terms = Vec::new();
    for k in -kmax..=kmax {
        for l in 1..=4 {
            let a = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let b = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            terms.push((k, l, a, b));
        }
    }
    let lz = g.lz();
    let field = |pick_w: bool| {
        DMatrix::from_fn(g.ny() + 1, g.nz(), |i, j| {
            let (y, z) = (g.y()[i], g.z()[j]);
            terms
                .iter()
                .map(|&(k, l, a, b)| {
                    let e = (I * (2.0 * PI * k as f64 * z / lz)).exp();
                    let lf = l as f64;
                    if !pick_w {
                        a * (lf * PI * y).sin() * e
                    } else if k == 0 {
                        b * (lf * PI * y).sin()
                    } else {
                        b * (lf * PI * y).cos() * e
                    }
                })
                .sum()
        })
    };
    (field(false), field(true))
}
