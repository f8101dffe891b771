//! One pipeline per subcommand, each turning a resolved config into a
//! [`Product`].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde_json::{json, Value};
use shearspec_core::catseye::*;
use shearspec_core::orrsommerfeld::*;
use shearspec_core::profiles::{amplitude_window, DriftParams, ShearProfile};
use shearspec_core::rayleigh::*;
use shearspec_core::shear3d::*;
use shearspec_core::sturm::*;
use shearspec_core::{Error, Result, C64};

use crate::config::RunConfig;
use crate::output::{csv_table, svg_plot, Cell, Series};
use crate::record::Product;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NO_INSTABILITY: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } | Error::NewtonFailed { .. } | Error::Eigensolver(_) => EXIT_NOT_CONVERGED,
        Error::NoCertificate(_) => EXIT_NO_INSTABILITY,
        _ => EXIT_CONFIG,
    }
}

fn c(z: C64) -> Value {
    json!({"re": z.re, "im": z.im})
}

struct Builder {
    payload: Value,
    provenance: Value,
    summary: BTreeMap<String, f64>,
    warnings: Vec<String>,
    files: BTreeMap<String, String>,
    exit_code: i32,
}

impl Builder {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            payload: json!({}),
            provenance: json!({}),
            summary: BTreeMap::new(),
            warnings: cfg.warnings.clone(),
            files: BTreeMap::new(),
            exit_code: EXIT_OK,
        }
    }

    fn finish(self) -> Product {
        Product {
            payload: self.payload,
            provenance: self.provenance,
            summary: self.summary,
            warnings: self.warnings,
            files: self.files,
            exit_code: self.exit_code,
        }
    }
}

fn half_neutral_alpha(profile: &ShearProfile) -> Result<f64> {
    let cert = certify_instability(profile)?;
    cert.mode
        .map(|m| 0.5 * m.alpha)
        .ok_or_else(|| Error::NoCertificate("no negative Sturm-Liouville eigenvalue; give alpha explicitly".into()))
}

fn profile_json(p: &ShearProfile) -> Value {
    let mut v = serde_json::to_value(p).expect("profile serializes");
    if let ShearProfile::Oscillatory { amplitude, .. } = p {
        let w = amplitude_window(*amplitude);
        v["delta"] = json!(w.delta);
        v["in_window"] = json!(w.in_window);
    }
    v
}

pub fn run(cfg: &RunConfig) -> Result<Product> {
    use crate::config::Command::*;
    match cfg.command {
        Sturm => sturm(cfg),
        Rayleigh => rayleigh(cfg),
        Os => os(cfg),
        Catseye => catseye(cfg),
        Shear3d => shear3d(cfg),
        Drift => drift(cfg),
        Sweep => unreachable!("sweep is driven by the runner"),
    }
}

fn sturm(cfg: &RunConfig) -> Result<Product> {
    let p = &cfg.profile;
    let mut b = Builder::new(cfg);
    let n_grid = cfg.grid.unwrap_or_else(|| default_grid(p));
    let cert = match certify_instability_on(p, n_grid) {
        Ok(c) => Some(c),
        Err(e @ Error::NonMonotone(_)) => {
            b.warnings.push(format!("sturm: no certificate, criterion inapplicable: {e}"));
            None
        }
        Err(e) => return Err(e),
    };
    let mut witnesses = Vec::new();
    let mut rows = Vec::new();
    let mut spectrum = None;
    if let Some(cert) = &cert {
        for w in &cert.witnesses {
            let s = solve_sl(&build_q(p, w.y, n_grid)?, 2)?;
            witnesses.push(json!({
                "y": w.y, "lambda1": s.eigenvalues[0], "lambda2": s.eigenvalues[1],
                "grid_n": s.grid_n, "refinement_delta": s.refinement_delta,
            }));
            rows.push(vec![
                Cell::from(w.y),
                s.eigenvalues[0].into(),
                s.eigenvalues[1].into(),
                s.grid_n.into(),
                s.refinement_delta.into(),
            ]);
        }
        b.files.insert(
            "sturm_witnesses.csv".into(),
            csv_table(&["y", "lambda1", "lambda2", "grid_n", "refinement_delta"], rows),
        );
        if let Some(m) = &cert.mode {
            b.summary.insert("lambda1".into(), m.lambda1);
            b.summary.insert("alpha_n".into(), m.alpha);
            let prob = build_q(p, m.inflection, n_grid)?;
            let k = cfg.modes.min(n_grid - 1);
            let s = solve_sl(&prob, k)?;
            let mut header = vec!["y".to_string()];
            header.extend((1..=k).map(|j| format!("phi_{j}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows = s.nodes.iter().enumerate().map(|(i, y)| {
                let mut row = vec![Cell::from(*y)];
                row.extend(s.eigenfunctions.iter().map(|f| Cell::from(f[i])));
                row
            });
            b.files.insert("sturm_eigenfunctions.csv".into(), csv_table(&header, rows));
            let series: Vec<Series> = s
                .eigenfunctions
                .iter()
                .enumerate()
                .map(|(j, f)| Series::new(format!("phi_{}", j + 1), s.nodes.iter().zip(f).map(|(y, v)| [*y, *v]).collect()))
                .collect();
            b.files.insert(
                "sturm_eigenfunctions.svg".into(),
                svg_plot(
                    &format!("eigenfunctions at y = {}, lambda1 = {:.6}", m.inflection, m.lambda1),
                    "y",
                    "phi",
                    &series,
                ),
            );
            spectrum = Some(s);
        }
        if let Some(bound) = cert.bound {
            b.summary.insert("bound".into(), bound);
        }
    }
    // quotient of the plateau test function about y = 1/2
    let quotient = match p {
        ShearProfile::Oscillatory { n, .. } if cert.is_some() => {
            let q = rayleigh_quotient(&build_q(p, 0.5, n_grid)?, &plateau_test_function(*n))?;
            b.summary.insert("quotient_testfn".into(), q);
            Some(q)
        }
        _ => None,
    };
    b.payload = json!({
        "profile": profile_json(p),
        "lambda": spectrum.as_ref().map(|s| &s.eigenvalues),
        "alpha_n": cert.as_ref().and_then(|c| c.mode.as_ref()).map(|m| m.alpha),
        "bound": cert.as_ref().and_then(|c| c.bound),
        "quotient_testfn": quotient,
        "eigen_grid_n": spectrum.as_ref().map(|s| s.grid_n),
        "eigen_refinement_delta": spectrum.as_ref().map(|s| s.refinement_delta),
        "certificate": cert.as_ref().map(|c| json!({
            "unstable": c.unstable,
            "lambda1": c.mode.as_ref().map(|m| m.lambda1),
            "inflection": c.mode.as_ref().map(|m| m.inflection),
            "phase_speed": c.mode.as_ref().map(|m| m.phase_speed),
            "alpha_n": c.mode.as_ref().map(|m| m.alpha),
            "bound": c.bound,
            "grid_n": c.grid_n,
            "refinement_delta": c.refinement_delta,
            "witnesses": witnesses,
        })),
    });
    b.provenance = json!({
        "grid_n": n_grid,
        "refinement_delta": cert.as_ref().map(|c| c.refinement_delta),
    });
    Ok(b.finish())
}

fn rayleigh_options(cfg: &RunConfig) -> RayleighOptions {
    let mut o = RayleighOptions::for_profile(&cfg.profile);
    if let Some(g) = cfg.grid {
        o.grid_n = g;
    }
    o.cauchy_tol = cfg.cauchy_tol;
    o
}

fn mode_json(m: &EigenMode) -> Value {
    json!({
        "alpha": m.alpha, "c": c(m.c), "growth_rate": m.growth_rate(), "residual": m.residual,
        "grid_n": m.grid_n, "refinement_delta": m.refinement_delta, "resolved": m.resolved,
    })
}

fn mode_csv(m: &EigenMode) -> String {
    csv_table(
        &["y", "phi_re", "phi_im"],
        m.nodes.iter().zip(&m.phi).map(|(y, f)| vec![Cell::from(*y), f.re.into(), f.im.into()]),
    )
}

fn rayleigh(cfg: &RunConfig) -> Result<Product> {
    let p = &cfg.profile;
    let mut b = Builder::new(cfg);
    let alpha = match cfg.alpha {
        Some(a) => a,
        None => half_neutral_alpha(p)?,
    };
    let opts = rayleigh_options(cfg);
    let out = solve_rayleigh(p, alpha, None, &opts)?;
    let mode = match &out {
        RayleighOutcome::Unstable(m) => {
            b.summary.insert("c_re".into(), m.c.re);
            b.summary.insert("c_im".into(), m.c.im);
            b.files.insert("rayleigh_mode.csv".into(), mode_csv(m));
            let series = vec![
                Series::new("Re phi", m.nodes.iter().zip(&m.phi).map(|(y, f)| [*y, f.re]).collect()),
                Series::new("Im phi", m.nodes.iter().zip(&m.phi).map(|(y, f)| [*y, f.im]).collect()),
            ];
            b.files.insert(
                "rayleigh_mode.svg".into(),
                svg_plot(&format!("alpha = {alpha:.6}, c = {:.8} + {:.8}i", m.c.re, m.c.im), "y", "phi", &series),
            );
            mode_json(m)
        }
        RayleighOutcome::NoUnstableMode { threshold, max_imag } => {
            b.exit_code = EXIT_NO_INSTABILITY;
            b.warnings.push(format!(
                "rayleigh: no unstable mode at alpha = {alpha} (max Im c = {max_imag:.3e}, threshold {threshold:.3e})"
            ));
            Value::Null
        }
    };
    let mut branch = Value::Null;
    if cfg.branch {
        let cert = certify_instability(p)?;
        let curve = continue_branch(
            p,
            &cert,
            &BranchOptions {
                rayleigh: opts,
                ..BranchOptions::for_profile(p)
            },
        )?;
        let rows = curve.samples.iter().map(|s| {
            vec![
                Cell::from(s.alpha),
                s.c.re.into(),
                s.c.im.into(),
                s.residual.into(),
                s.refinement_delta.into(),
                s.resolved.into(),
            ]
        });
        b.files.insert(
            "rayleigh_branch.csv".into(),
            csv_table(&["alpha", "Re_c", "Im_c", "residual", "refinement_delta", "resolved"], rows),
        );
        let best = curve
            .samples
            .iter()
            .map(|s| (s.alpha * s.c.im, s))
            .max_by(|x, y| x.0.total_cmp(&y.0));
        if let Some((g, _)) = best {
            b.summary.insert("max_growth_rate".into(), g);
        }
        let pts = curve.samples.iter().map(|s| [s.alpha, s.c.im]).collect();
        b.files.insert(
            "rayleigh_branch.svg".into(),
            svg_plot("unstable branch", "alpha", "Im c", &[Series::new("Im c", pts)]),
        );
        branch = json!({
            "alpha_n": curve.alpha_n,
            "endpoints": {"lower": curve.lower, "upper": curve.upper},
            "max_growth_rate": best.map(|(g, _)| g),
            "max_growth_alpha": best.map(|(_, s)| s.alpha),
            "threshold": curve.threshold,
            "samples": curve.samples,
            "grid_n": opts.grid_n,
        });
    }
    b.payload = json!({"profile": profile_json(p), "alpha": alpha, "mode": mode, "branch": branch});
    b.provenance = json!({"grid_n": opts.grid_n, "fine_grid_n": 2 * opts.grid_n, "cauchy_tol": opts.cauchy_tol});
    Ok(b.finish())
}

fn os(cfg: &RunConfig) -> Result<Product> {
    let p = &cfg.profile;
    let mut b = Builder::new(cfg);
    let alpha = match cfg.alpha {
        Some(a) => a,
        None => half_neutral_alpha(p)?,
    };
    let opts = OsOptions {
        grid_n: cfg.grid.unwrap_or(OsOptions::default().grid_n),
        agree_tol: cfg.agree_tol,
        ..OsOptions::default()
    };
    let mut spectra = Vec::new();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    let mut top = f64::NEG_INFINITY;
    for &r in &cfg.reynolds {
        let s = solve_os(
            &OsProblem {
                profile: p.clone(),
                alpha,
                reynolds: r,
            },
            &opts,
        )?;
        let mut modes = s.modes.clone();
        modes.sort_by(|x, y| y.c.im.total_cmp(&x.c.im).then(x.c.re.total_cmp(&y.c.re)));
        let max_im = modes.iter().map(|m| m.c.im).fold(f64::NEG_INFINITY, f64::max);
        top = top.max(max_im);
        for m in &modes {
            rows.push(vec![
                Cell::from(r),
                m.c.re.into(),
                m.c.im.into(),
                m.residual.into(),
                true.into(),
                m.grid_n.into(),
                m.refinement_delta.into(),
            ]);
        }
        for d in &s.discarded {
            let (residual, delta) = match d.reason {
                shearspec_core::orrsommerfeld::DiscardReason::Residual { residual } => (residual, f64::NAN),
                shearspec_core::orrsommerfeld::DiscardReason::GridDisagreement { delta } => (f64::NAN, delta),
                shearspec_core::orrsommerfeld::DiscardReason::UnresolvedTail { .. } => (f64::NAN, f64::NAN),
            };
            rows.push(vec![
                Cell::from(r),
                d.c.re.into(),
                d.c.im.into(),
                residual.into(),
                false.into(),
                s.grid_n.into(),
                delta.into(),
            ]);
        }
        // a small cross per eigenvalue
        let mut pts = Vec::new();
        for m in &modes {
            let d = 0.004;
            pts.extend([[m.c.re - d, m.c.im], [m.c.re + d, m.c.im], [f64::NAN, 0.0]]);
            pts.extend([[m.c.re, m.c.im - d], [m.c.re, m.c.im + d], [f64::NAN, 0.0]]);
        }
        series.push(Series::new(format!("R = {r:e}"), pts));
        b.warnings.extend(s.warnings.iter().map(|w| format!("os (R = {r:e}): {w}")));
        spectra.push(json!({
            "reynolds": r,
            "grid_n": s.grid_n,
            "max_im_c": if modes.is_empty() { Value::Null } else { json!(max_im) },
            "max_growth_rate": s.max_growth_rate(),
            "threshold": s.threshold,
            "noise_floor": s.noise_floor,
            "most_unstable": s.most_unstable.map(|k| mode_json(&s.modes[k])),
            "modes": modes.iter().map(mode_json).collect::<Vec<_>>(),
            "discarded": s.discarded.len(),
        }));
    }
    if top.is_finite() {
        b.summary.insert("max_im_c".into(), top);
    }
    b.files.insert(
        "os_spectrum.csv".into(),
        csv_table(
            &["reynolds", "Re_c", "Im_c", "residual", "retained_flag", "grid_n", "refinement_delta"],
            rows,
        ),
    );
    b.files.insert("os_spectrum.svg".into(), svg_plot(&format!("alpha = {alpha}"), "Re c", "Im c", &series));
    let mut track = Value::Null;
    if let Some(schedule) = &cfg.track {
        let ray = solve_rayleigh(p, alpha, None, &rayleigh_options(cfg))?;
        let c0 = ray
            .mode()
            .ok_or_else(|| Error::NoCertificate(format!("no inviscid unstable mode at alpha = {alpha} to track")))?
            .c;
        let tr = track_inviscid_limit(p, alpha, c0, schedule, &opts)?;
        let rows = tr.points.iter().map(|q| {
            vec![
                Cell::from(q.reynolds),
                q.c.re.into(),
                q.c.im.into(),
                q.defect.into(),
                q.refinement_delta.into(),
                q.resolved.into(),
            ]
        });
        b.files.insert(
            "os_track.csv".into(),
            csv_table(&["reynolds", "Re_c", "Im_c", "defect", "refinement_delta", "resolved"], rows),
        );
        b.files.insert(
            "os_track.json".into(),
            serde_json::to_string_pretty(&tr).expect("track serializes"),
        );
        if let Some(s) = tr.slope {
            b.summary.insert("defect_slope".into(), s);
        }
        if tr.lost_at.is_some() {
            b.exit_code = EXIT_NO_INSTABILITY;
        }
        track = serde_json::to_value(&tr).expect("track serializes");
    }
    b.payload = json!({"profile": profile_json(p), "alpha": alpha, "spectra": spectra, "track": track});
    b.provenance = json!({"grid_n": opts.grid_n, "check_grid_n": opts.grid_n * 3 / 2, "agree_tol": opts.agree_tol});
    Ok(b.finish())
}

fn catseye(cfg: &RunConfig) -> Result<Product> {
    let p = &cfg.profile;
    let mut b = Builder::new(cfg);
    let cert = certify_instability(p)?;
    if !cert.unstable {
        return Err(Error::NoCertificate("no neutral mode to bifurcate from".into()));
    }
    let mut opts = WaveOptions::for_profile(p);
    if let Some(g) = cfg.grid {
        opts.ny = g;
    }
    let kernel = newton_branch(p, &cert, 0.0, &opts)?.alpha_sq;
    let mut waves = Vec::new();
    for (k, &beta) in cfg.beta.iter().enumerate() {
        let lead = leading_order_wave(p, &cert, beta)?;
        let newton = if cfg.newton { Some(newton_branch(p, &cert, beta, &opts)?) } else { None };
        let w = newton.as_ref().unwrap_or(&lead);
        let cps = critical_points(w);
        let field = w.sample(DEFAULT_CONTOUR_GRID.0, DEFAULT_CONTOUR_GRID.1);
        let (lo, hi) = field
            .values
            .iter()
            .flatten()
            .fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        let mut levels: Vec<f64> = (1..=cfg.levels)
            .map(|i| lo + (hi - lo) * i as f64 / (cfg.levels + 1) as f64)
            .collect();
        levels.extend(cps.iter().filter(|c| c.kind == CriticalKind::Saddle).map(|c| c.value));
        levels.sort_by(f64::total_cmp);
        let lines = streamlines_on(&field, &levels);

        let suffix = if cfg.beta.len() == 1 { String::new() } else { format!("_{k}") };
        let mut rows = Vec::new();
        let mut series = Vec::new();
        for (id, l) in lines.iter().enumerate() {
            for q in &l.points {
                rows.push(vec![Cell::from(l.level), id.into(), q[0].into(), q[1].into()]);
            }
            series.push(Series::new(format!("{:.4e}", l.level), l.points.clone()));
        }
        b.files.insert(
            format!("catseye_contours{suffix}.csv"),
            csv_table(&["level", "segment_id", "xi", "y"], rows),
        );
        b.files.insert(
            format!("catseye_streamlines{suffix}.svg"),
            svg_plot(&format!("streamlines, beta = {beta:e}"), "xi", "y", &series),
        );
        // coarser grid for the field dump
        let coarse = w.sample(128, 64);
        let field_rows = coarse.xi.iter().enumerate().flat_map(|(j, xi)| {
            let vals = &coarse.values[j];
            coarse.y.iter().zip(vals).map(move |(y, v)| vec![Cell::from(*xi), Cell::from(*y), Cell::from(*v)])
        });
        b.files.insert(
            format!("catseye_field{suffix}.csv"),
            csv_table(&["xi", "y", "psi_rel"], field_rows.collect::<Vec<_>>()),
        );
        b.files.insert(
            format!("catseye_critical_points{suffix}.json"),
            serde_json::to_string_pretty(&cps).expect("points serialize"),
        );
        let distance = newton.as_ref().map(|nw| sup_distance(nw, &lead));
        waves.push(json!({
            "beta": beta,
            "order": serde_json::to_value(w.order).expect("order serializes"),
            "alpha_sq": w.alpha_sq,
            "alpha_sq_gap": w.alpha_sq - kernel,
            "residual": w.residual,
            "iterations": w.iterations,
            "distance_to_leading_order": distance,
            "critical_points": serde_json::to_value(&cps).expect("points serialize"),
            "streamlines": lines.len(),
            "grid": {"modes": opts.modes, "ny": opts.ny, "contour": DEFAULT_CONTOUR_GRID},
        }));
        if k == 0 {
            b.summary.insert("alpha_sq".into(), w.alpha_sq);
            if let Some(d) = distance {
                b.summary.insert("distance_to_leading_order".into(), d);
            }
        }
    }
    b.payload = json!({"profile": profile_json(p), "newton": cfg.newton, "alpha_n_sq": kernel, "waves": waves});
    b.provenance = json!({
        "modes": opts.modes, "ny": opts.ny, "contour_grid": DEFAULT_CONTOUR_GRID,
        "certificate_grid_n": cert.grid_n, "certificate_refinement_delta": cert.refinement_delta,
    });
    Ok(b.finish())
}

fn shear3d(cfg: &RunConfig) -> Result<Product> {
    let base = &cfg.profile;
    let mut b = Builder::new(cfg);
    let alpha0 = match cfg.alpha {
        Some(a) => a,
        None => half_neutral_alpha(base)?,
    };
    let opts = Shear3DOptions {
        ny: cfg.ny,
        nz: cfg.nz,
        lz: cfg.lz,
        tol: cfg.tol,
        two_grid: true,
        two_grid_tol: cfg.two_grid_tol,
    };
    let (l, k, lz) = (cfg.gshape.l as f64, cfg.gshape.k as f64, cfg.lz);
    let g = move |y: f64, z: f64| (l * PI * y).sin() * (2.0 * PI * k * z / lz).cos();
    let table = persistence_sweep(base, &g, &cfg.eps, alpha0, &opts)?;
    let mut rows = Vec::new();
    let mut out_rows = Vec::new();
    for (r, m) in table.rows.iter().zip(&table.modes) {
        rows.push(vec![
            Cell::from(r.eps),
            r.c.map_or(f64::NAN, |z| z.re).into(),
            r.c.map_or(f64::NAN, |z| z.im).into(),
            r.defect.unwrap_or(f64::NAN).into(),
            r.lost.into(),
            r.w14.into(),
            r.refinement_delta.into(),
            r.residual.into(),
        ]);
        out_rows.push(json!({
            "eps": r.eps,
            "c": r.c.map(c),
            "defect": r.defect,
            "lost": r.lost,
            "eps_w14": r.w14,
            "refinement_delta": if r.lost { Value::Null } else { json!(r.refinement_delta) },
            "equation_residual": if r.lost { Value::Null } else { json!(r.residual) },
            "residuals": m.as_ref().map(|m| serde_json::to_value(m.residuals).expect("residuals serialize")),
            "tail": m.as_ref().map(|m| m.tail),
            "grid": {"ny": opts.ny, "nz": opts.nz},
        }));
        if let Some(m) = m {
            let mut field_rows = Vec::new();
            for (i, y) in m.y.iter().enumerate() {
                for (j, z) in m.z.iter().enumerate() {
                    let mut row = vec![Cell::from(*y), Cell::from(*z)];
                    for f in [&m.u, &m.v, &m.w, &m.p, &m.omega] {
                        row.push(f[(i, j)].re.into());
                        row.push(f[(i, j)].im.into());
                    }
                    field_rows.push(row);
                }
            }
            b.files.insert(
                format!("shear3d_mode_eps_{:e}.csv", r.eps),
                csv_table(
                    &["y", "z", "u_re", "u_im", "v_re", "v_im", "w_re", "w_im", "p_re", "p_im", "omega_re", "omega_im"],
                    field_rows,
                ),
            );
        }
    }
    b.files.insert(
        "shear3d_sweep.csv".into(),
        csv_table(
            &["eps", "c_re", "c_im", "defect", "lost", "eps_w14", "refinement_delta", "residual"],
            rows,
        ),
    );
    let pts: Vec<[f64; 2]> = table
        .rows
        .iter()
        .filter_map(|r| r.defect.map(|d| [r.eps, d]))
        .collect();
    b.files.insert(
        "shear3d_defect.svg".into(),
        svg_plot("persistence of the 2D mode", "eps", "|c(eps) - c0|", &[Series::new("defect", pts)]),
    );
    if table.rows.iter().any(|r| r.lost) {
        b.exit_code = EXIT_NO_INSTABILITY;
        b.warnings.push("shear3d: instability lost for at least one eps".into());
    }
    if let Some(r) = table.rows.iter().rev().find(|r| !r.lost) {
        b.summary.insert("defect".into(), r.defect.unwrap_or(f64::NAN));
        b.summary.insert("c_im".into(), r.c.map_or(f64::NAN, |z| z.im));
    }
    b.payload = json!({
        "profile": profile_json(base),
        "alpha0": alpha0,
        "c0": c(table.c0),
        "gshape": cfg.gshape,
        "rows": out_rows,
        "increasing": table.increasing,
    });
    b.provenance = json!({
        "ny": opts.ny, "nz": opts.nz, "lz": opts.lz, "fine_ny": opts.ny * 3 / 2,
        "two_grid_tol": opts.two_grid_tol, "tol": opts.tol,
    });
    Ok(b.finish())
}

fn drift(cfg: &RunConfig) -> Result<Product> {
    let p = &cfg.profile;
    let mut b = Builder::new(cfg);
    let params = DriftParams {
        epsilon: cfg.eps[0],
        t: cfg.t,
    };
    let d = p.drift(params)?;
    let samples = 200;
    let ys: Vec<f64> = (0..=samples).map(|i| i as f64 / samples as f64).collect();
    let before: Vec<f64> = ys.iter().map(|&y| p.eval(y, 0)).collect::<Result<_>>()?;
    let after: Vec<f64> = ys.iter().map(|&y| d.eval(y, 0)).collect::<Result<_>>()?;
    let dev = ys.iter().zip(&after).map(|(y, u)| (u - y).abs()).fold(0.0, f64::max);
    b.summary.insert("max_deviation_from_linear".into(), dev);
    b.files.insert(
        "drift_profile.csv".into(),
        csv_table(
            &["y", "u_initial", "u_drifted"],
            ys.iter().zip(before.iter().zip(&after)).map(|(y, (u0, u1))| vec![Cell::from(*y), (*u0).into(), (*u1).into()]),
        ),
    );
    b.files.insert(
        "drift_profile.svg".into(),
        svg_plot(
            &format!("drift, eps = {:e}, t = {}", params.epsilon, params.t),
            "y",
            "U - y",
            &[
                Series::new("initial", ys.iter().zip(&before).map(|(y, u)| [*y, u - y]).collect()),
                Series::new("drifted", ys.iter().zip(&after).map(|(y, u)| [*y, u - y]).collect()),
            ],
        ),
    );
    b.payload = json!({
        "profile": profile_json(p),
        "epsilon": params.epsilon,
        "t": params.t,
        "drifted": profile_json(&d),
        "max_deviation_from_linear": dev,
    });
    b.provenance = json!({"exact": true, "samples": samples + 1});
    Ok(b.finish())
}
