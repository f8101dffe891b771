//! Run configuration: a flat `key = value` file merged with command-line
//! flags (flags win), resolved into typed settings with defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use shearspec_core::profiles::{amplitude_window, ShearProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Sturm,
    Rayleigh,
    Os,
    Catseye,
    Shear3d,
    Drift,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Sturm => "sturm",
            Self::Rayleigh => "rayleigh",
            Self::Os => "os",
            Self::Catseye => "catseye",
            Self::Shear3d => "shear3d",
            Self::Drift => "drift",
            Self::Sweep => "sweep",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "sturm" => Self::Sturm,
            "rayleigh" => Self::Rayleigh,
            "os" => Self::Os,
            "catseye" => Self::Catseye,
            "shear3d" => Self::Shear3d,
            "drift" => Self::Drift,
            "sweep" => Self::Sweep,
            _ => return None,
        })
    }
}

/// Every key accepted in a config file or as a flag.
pub const KEYS: &[&str] = &[
    "kind", "n", "A", "coeffs", "alpha", "R", "beta", "eps", "t", "grid", "ny", "nz", "lz", "tol",
    "two_grid_tol", "cauchy_tol", "agree_tol", "gshape", "branch", "track", "levels", "modes", "newton",
    "task", "param", "values", "out", "cache",
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> Res<T> {
    Err(ConfigError(msg.into()))
}

pub fn read_file(path: &Path) -> Res<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_text(&text)
}

pub fn parse_text(text: &str) -> Res<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(format!("line {}: expected key = value", k + 1));
        };
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return err(format!("line {}: unknown key '{key}'", k + 1));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

/// Perturbation shape `sin(l pi y) cos(2 pi k z / L_z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GShape {
    pub l: u32,
    pub k: u32,
}

impl GShape {
    fn parse(s: &str) -> Res<Self> {
        if s == "default" {
            return Ok(Self { l: 1, k: 1 });
        }
        let parts: Vec<&str> = s.split(':').collect();
        if let ["sin", l, k] = parts.as_slice() {
            if let (Ok(l), Ok(k)) = (l.parse::<u32>(), k.parse::<u32>()) {
                if l >= 1 {
                    return Ok(Self { l, k });
                }
            }
        }
        err(format!("gshape must be 'default' or 'sin:<l>:<k>' with l >= 1, got '{s}'"))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub task: Command,
    pub param: String,
    pub values: Vec<String>,
}

/// Resolved settings. Everything except `out` and `cache` enters the
/// input hash.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub profile: ShearProfile,
    pub alpha: Option<f64>,
    pub reynolds: Vec<f64>,
    pub beta: Vec<f64>,
    pub eps: Vec<f64>,
    pub t: f64,
    pub grid: Option<usize>,
    pub ny: usize,
    pub nz: usize,
    pub lz: f64,
    pub tol: f64,
    pub two_grid_tol: f64,
    pub cauchy_tol: f64,
    pub agree_tol: f64,
    pub gshape: GShape,
    pub branch: bool,
    /// Reynolds schedule for following the inviscid mode.
    pub track: Option<Vec<f64>>,
    pub levels: usize,
    /// Sturm-Liouville eigenpairs to report.
    pub modes: usize,
    /// Newton-corrected wave instead of the leading-order one.
    pub newton: bool,
    pub sweep: Option<SweepSpec>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub cache: bool,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Res<T> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse '{v}'")))
}

fn list(key: &str, v: &str) -> Res<Vec<f64>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(key, s)).collect()
}

fn boolean(key: &str, v: &str) -> Res<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => err(format!("{key}: expected true or false, got '{v}'")),
    }
}

fn positive(key: &str, x: f64) -> Res<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        err(format!("{key} must be positive, got {x}"))
    }
}

impl RunConfig {
    pub fn resolve(command: Command, kv: &BTreeMap<String, String>) -> Res<Self> {
        let get = |k: &str| kv.get(k).map(String::as_str);
        let mut warnings = Vec::new();

        let kind = get("kind").unwrap_or(if get("coeffs").is_some() { "sine-series" } else { "oscillatory" });
        let profile = match kind {
            "linear" => ShearProfile::Linear,
            "oscillatory" => {
                let n: u32 = get("n").map(|v| num("n", v)).transpose()?.unwrap_or(1);
                let a: f64 = get("A").map(|v| num("A", v)).transpose()?.unwrap_or(0.06);
                if n == 0 {
                    return err("n must be at least 1");
                }
                if !(a >= 0.0 && a.is_finite()) {
                    return err(format!("A must be non-negative, got {a}"));
                }
                let w = amplitude_window(a);
                if a > 0.0 && !w.in_window {
                    warnings.push(format!(
                        "A = {a} lies outside (1/(8 pi), 1/(4 pi)); delta = {:.6}, in_window = false",
                        w.delta
                    ));
                }
                ShearProfile::oscillatory(n, a).map_err(|e| ConfigError(e.to_string()))?
            }
            "sine-series" => {
                let c = list("coeffs", get("coeffs").unwrap_or(""))?;
                if c.is_empty() {
                    return err("sine-series profile needs coeffs");
                }
                ShearProfile::sine_series(c).map_err(|e| ConfigError(e.to_string()))?
            }
            other => return err(format!("unknown profile kind '{other}'")),
        };

        let alpha = get("alpha").map(|v| num("alpha", v)).transpose()?;
        if let Some(a) = alpha {
            positive("alpha", a)?;
        }
        let reynolds = match get("R") {
            Some(v) => list("R", v)?,
            None => vec![1e4],
        };
        for &r in &reynolds {
            positive("R", r)?;
        }
        let beta = match get("beta") {
            Some(v) => list("beta", v)?,
            None => vec![1e-3],
        };
        if beta.iter().any(|b| !(*b >= 0.0)) {
            return err("beta must be non-negative");
        }
        let eps = match get("eps") {
            Some(v) => list("eps", v)?,
            None if command == Command::Drift => vec![1e-4],
            None => vec![1e-3, 1e-2],
        };
        if eps.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
            return err("eps must be non-negative");
        }
        if command == Command::Drift && eps.len() != 1 {
            return err("drift takes a single eps (the inverse Reynolds number)");
        }
        let t: f64 = get("t").map(|v| num("t", v)).transpose()?.unwrap_or(1.0);
        if !(t >= 0.0 && t.is_finite()) {
            return err(format!("t must be non-negative, got {t}"));
        }
        let grid: Option<usize> = get("grid").map(|v| num("grid", v)).transpose()?;
        if let Some(g) = grid {
            if g < 16 {
                return err(format!("grid must be at least 16, got {g}"));
            }
        }
        let ny: usize = get("ny").map(|v| num("ny", v)).transpose()?.unwrap_or(128);
        let nz: usize = get("nz").map(|v| num("nz", v)).transpose()?.unwrap_or(16);
        if ny < 8 {
            return err(format!("ny must be at least 8, got {ny}"));
        }
        if nz < 4 || nz % 2 != 0 {
            return err(format!("nz must be even and at least 4, got {nz}"));
        }
        let lz = positive("lz", get("lz").map(|v| num("lz", v)).transpose()?.unwrap_or(1.0))?;
        let tol = positive("tol", get("tol").map(|v| num("tol", v)).transpose()?.unwrap_or(1e-12))?;
        let two_grid_tol = positive(
            "two_grid_tol",
            get("two_grid_tol").map(|v| num("two_grid_tol", v)).transpose()?.unwrap_or(1e-6),
        )?;
        let cauchy_tol = positive(
            "cauchy_tol",
            get("cauchy_tol").map(|v| num("cauchy_tol", v)).transpose()?.unwrap_or(1e-6),
        )?;
        let agree_tol = positive(
            "agree_tol",
            get("agree_tol").map(|v| num("agree_tol", v)).transpose()?.unwrap_or(1e-6),
        )?;
        let gshape = GShape::parse(get("gshape").unwrap_or("default"))?;
        let branch = get("branch").map(|v| boolean("branch", v)).transpose()?.unwrap_or(false);
        let track = get("track").map(|v| list("track", v)).transpose()?;
        if let Some(t) = &track {
            if t.is_empty() || t.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                return err("track needs positive Reynolds numbers");
            }
        }
        let levels: usize = get("levels").map(|v| num("levels", v)).transpose()?.unwrap_or(12);
        let modes: usize = get("modes").map(|v| num("modes", v)).transpose()?.unwrap_or(4);
        if modes == 0 {
            return err("modes must be at least 1");
        }
        let newton = get("newton").map(|v| boolean("newton", v)).transpose()?.unwrap_or(false);
        let cache = get("cache").map(|v| boolean("cache", v)).transpose()?.unwrap_or(true);
        let out = PathBuf::from(get("out").unwrap_or("shearspec-out"));

        let sweep = if command == Command::Sweep {
            let task = get("task").ok_or(ConfigError("sweep needs task".into()))?;
            let task = Command::parse(task)
                .filter(|c| *c != Command::Sweep)
                .ok_or_else(|| ConfigError(format!("sweep task must be a solver subcommand, got '{task}'")))?;
            let param = get("param").ok_or(ConfigError("sweep needs param".into()))?.replace('-', "_");
            if !KEYS.contains(&param.as_str()) || ["task", "param", "values", "out", "cache"].contains(&param.as_str()) {
                return err(format!("sweep cannot vary '{param}'"));
            }
            let values: Vec<String> = get("values")
                .ok_or(ConfigError("sweep needs values".into()))?
                .split(';')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if values.is_empty() {
                return err("sweep needs at least one value");
            }
            // validate every point up front
            for v in &values {
                let mut p = kv.clone();
                p.insert(param.clone(), v.clone());
                Self::resolve(task, &p)?;
            }
            Some(SweepSpec { task, param, values })
        } else {
            None
        };

        Ok(Self {
            command,
            profile,
            alpha,
            reynolds,
            beta,
            eps,
            t,
            grid,
            ny,
            nz,
            lz,
            tol,
            two_grid_tol,
            cauchy_tol,
            agree_tol,
            gshape,
            branch,
            track,
            levels,
            modes,
            newton,
            sweep,
            out,
            cache,
            warnings,
        })
    }

    /// Canonical serialization of the hashed subset.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn file_format() {
        let m = parse_text("# comment\nA = 0.05\n\nn=2 # trailing\n").unwrap();
        assert_eq!(m["A"], "0.05");
        assert_eq!(m["n"], "2");
        assert!(parse_text("bogus = 1").is_err());
        assert!(parse_text("no equals sign").is_err());
    }

    #[test]
    fn defaults_and_validation() {
        let c = RunConfig::resolve(Command::Sturm, &kv(&[])).unwrap();
        assert_eq!(c.profile, ShearProfile::oscillatory(1, 0.06).unwrap());
        assert!(c.warnings.is_empty());
        let w = RunConfig::resolve(Command::Sturm, &kv(&[("A", "0.2")])).unwrap();
        assert_eq!(w.warnings.len(), 1);
        assert!(RunConfig::resolve(Command::Sturm, &kv(&[("tol", "-1")])).is_err());
        assert!(RunConfig::resolve(Command::Shear3d, &kv(&[("nz", "5")])).is_err());
        assert!(RunConfig::resolve(Command::Drift, &kv(&[("eps", "1e-4,1e-3")])).is_err());
        assert!(RunConfig::resolve(Command::Sweep, &kv(&[("task", "sweep"), ("param", "A"), ("values", "1")])).is_err());
    }

    #[test]
    fn canonical_form_tracks_tolerances_only() {
        let a = RunConfig::resolve(Command::Os, &kv(&[("out", "x")])).unwrap();
        let b = RunConfig::resolve(Command::Os, &kv(&[("out", "y"), ("cache", "false")])).unwrap();
        let c = RunConfig::resolve(Command::Os, &kv(&[("agree_tol", "1e-7")])).unwrap();
        assert_eq!(a.canonical(), b.canonical());
        assert_ne!(a.canonical(), c.canonical());
    }
}
