//! Long-wave limit of the Rayleigh equation: as `alpha -> 0` the wave
//! speed solves `int_0^1 dy / (U - c)^2 = 0`. Composite Simpson plus
//! complex Newton, independent of the spectral solvers.

use shearspec_core::C64;

pub fn long_wave_speed(u: impl Fn(f64) -> f64, guess: C64) -> C64 {
    let m = 200_000;
    let h = 1.0 / m as f64;
    let samples: Vec<f64> = (0..=m).map(|j| u(j as f64 * h)).collect();
    let simpson = |f: &dyn Fn(f64) -> C64| {
        let mut s = f(samples[0]) + f(samples[m]);
        for (j, &uj) in samples.iter().enumerate().take(m).skip(1) {
            s += f(uj) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * (h / 3.0)
    };
    let mut c = guess;
    for _ in 0..50 {
        let f = simpson(&|uj| (C64::new(uj, 0.0) - c).powi(-2));
        let df = simpson(&|uj| (C64::new(uj, 0.0) - c).powi(-3) * 2.0);
        let step = f / df;
        c -= step;
        if step.norm() < 1e-14 {
            break;
        }
    }
    c
}
