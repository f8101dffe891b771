//! WebAssembly bindings for the browser demo in `www/`. Each export takes
//! plain numbers and returns a JSON string that the page draws directly.

use serde_json::{json, Value};
use shearspec_core::catseye::{critical_points, newton_branch, streamlines, CriticalKind, WaveOptions};
use shearspec_core::profiles::{amplitude_window, ShearProfile};
use shearspec_core::rayleigh::{continue_branch, BranchOptions};
use shearspec_core::sturm::{build_q, certify_instability, solve_sl};
use wasm_bindgen::prelude::*;

const SAMPLES: usize = 200;

fn profile(n: u32, amplitude: f64) -> Result<ShearProfile, String> {
    ShearProfile::oscillatory(n, amplitude).map_err(|e| e.to_string())
}

/// Base profile, its curvature, and the ground state of the
/// Sturm-Liouville problem at the central inflection point.
pub fn profile_and_eigenfunction(n: u32, amplitude: f64) -> Result<Value, String> {
    let p = profile(n, amplitude)?;
    let w = amplitude_window(amplitude);
    let ys: Vec<f64> = (0..=SAMPLES).map(|i| i as f64 / SAMPLES as f64).collect();
    let u: Vec<f64> = ys.iter().map(|&y| p.eval(y, 0)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let u2: Vec<f64> = ys.iter().map(|&y| p.eval(y, 2)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut out = json!({
        "n": n, "amplitude": amplitude, "delta": w.delta, "in_window": w.in_window,
        "y": ys, "u": u, "u2": u2, "eigen": Value::Null,
    });
    // outside the window the profile may stop being monotone; show it anyway
    if let Ok(cert) = certify_instability(&p) {
        if let Some(m) = cert.mode {
            let s = solve_sl(&build_q(&p, m.inflection, cert.grid_n).map_err(|e| e.to_string())?, 2)
                .map_err(|e| e.to_string())?;
            out["eigen"] = json!({
                "inflection": m.inflection, "lambda1": m.lambda1, "lambda2": s.eigenvalues[1],
                "alpha_n": m.alpha, "bound": cert.bound, "y": m.nodes, "phi": m.phi,
                "grid_n": cert.grid_n, "refinement_delta": cert.refinement_delta,
            });
        }
    }
    Ok(out)
}

/// Unstable Rayleigh branch `alpha -> c(alpha)` below the neutral wavenumber.
pub fn branch(n: u32, amplitude: f64, step_fraction: f64) -> Result<Value, String> {
    let p = profile(n, amplitude)?;
    let cert = certify_instability(&p).map_err(|e| e.to_string())?;
    let opts = BranchOptions {
        step_fraction,
        escalations: 0,
        ..BranchOptions::for_profile(&p)
    };
    let curve = continue_branch(&p, &cert, &opts).map_err(|e| e.to_string())?;
    Ok(json!({
        "alpha_n": curve.alpha_n,
        "alpha": curve.samples.iter().map(|s| s.alpha).collect::<Vec<_>>(),
        "c_re": curve.samples.iter().map(|s| s.c.re).collect::<Vec<_>>(),
        "c_im": curve.samples.iter().map(|s| s.c.im).collect::<Vec<_>>(),
        "lower_closed": curve.lower.is_closed(),
        "upper_closed": curve.upper.is_closed(),
    }))
}

/// Streamlines of the travelling wave of amplitude `beta`, with the
/// separatrix levels through the saddles included.
pub fn cats_eye(n: u32, amplitude: f64, beta: f64, levels: usize) -> Result<Value, String> {
    let p = profile(n, amplitude)?;
    let cert = certify_instability(&p).map_err(|e| e.to_string())?;
    let w = newton_branch(&p, &cert, beta, &WaveOptions::for_profile(&p)).map_err(|e| e.to_string())?;
    let field = w.sample(64, 64);
    let (lo, hi) = field
        .values
        .iter()
        .flatten()
        .fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
    let cps = critical_points(&w);
    let mut lv: Vec<f64> = (1..=levels).map(|i| lo + (hi - lo) * i as f64 / (levels + 1) as f64).collect();
    let separatrix: Vec<f64> = cps.iter().filter(|c| c.kind == CriticalKind::Saddle).map(|c| c.value).collect();
    lv.extend(&separatrix);
    let lines = streamlines(&w, &lv);
    Ok(json!({
        "beta": beta,
        "period": w.period(),
        "alpha_sq": w.alpha_sq,
        "residual": w.residual,
        "separatrix": separatrix,
        "lines": lines.iter().map(|l| json!({"level": l.level, "closed": l.closed, "points": l.points})).collect::<Vec<_>>(),
    }))
}

fn export(r: Result<Value, String>) -> Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = profileAndEigenfunction)]
pub fn profile_and_eigenfunction_js(n: u32, amplitude: f64) -> Result<String, JsValue> {
    export(profile_and_eigenfunction(n, amplitude))
}

#[wasm_bindgen(js_name = rayleighBranch)]
pub fn branch_js(n: u32, amplitude: f64, step_fraction: f64) -> Result<String, JsValue> {
    export(branch(n, amplitude, step_fraction))
}

#[wasm_bindgen(js_name = catsEye)]
pub fn cats_eye_js(n: u32, amplitude: f64, beta: f64, levels: usize) -> Result<String, JsValue> {
    export(cats_eye(n, amplitude, beta, levels))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenfunction_for_default_profile() {
        let v = profile_and_eigenfunction(1, 0.06).unwrap();
        assert_eq!(v["y"].as_array().unwrap().len(), SAMPLES + 1);
        assert!(v["eigen"]["lambda1"].as_f64().unwrap() < 0.0);
        let none = profile_and_eigenfunction(1, 0.2).unwrap();
        assert!(none["eigen"].is_null());
        assert_eq!(none["in_window"], false);
    }

    #[test]
    fn branch_is_unstable_below_neutral() {
        let v = branch(1, 0.06, 0.1).unwrap();
        let an = v["alpha_n"].as_f64().unwrap();
        let alpha = v["alpha"].as_array().unwrap();
        assert!(!alpha.is_empty());
        assert!(alpha.iter().all(|a| a.as_f64().unwrap() < an));
        assert!(v["c_im"].as_array().unwrap().iter().all(|c| c.as_f64().unwrap() > 0.0));
    }

    #[test]
    fn cats_eye_has_closed_streamlines() {
        let v = cats_eye(1, 0.06, 1e-3, 6).unwrap();
        let lines = v["lines"].as_array().unwrap();
        assert!(lines.iter().any(|l| l["closed"] == true));
        assert!(!v["separatrix"].as_array().unwrap().is_empty());
    }
}
