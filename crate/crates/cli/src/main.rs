mod commands;
mod config;
mod output;
mod record;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use config::{Command, RunConfig};
use output::{csv_table, Cell};
use record::{input_hash, now, Cache, ResultRecord, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "shearspec", version, about = "Stability of plane shear flows in a channel")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Sturm-Liouville instability certificate.
    Sturm(Params),
    /// Inviscid normal mode, optionally the whole unstable branch.
    Rayleigh(Params),
    /// Orr-Sommerfeld spectrum at one or more Reynolds numbers.
    Os(Params),
    /// Cat's-eye travelling waves and their streamlines.
    Catseye(Params),
    /// Persistence of the growing mode under z-dependent perturbations.
    Shear3d(Params),
    /// Diffusive drift of the base profile.
    Drift(Params),
    /// Run another subcommand over a list of parameter values.
    Sweep(Params),
}

/// Every flag is also a config-file key; flags override the file.
#[derive(Args, Default)]
struct Params {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Profile kind: oscillatory, linear or sine-series.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    n: Option<String>,
    /// Oscillation amplitude.
    #[arg(long = "A")]
    a: Option<String>,
    /// Sine-series coefficients, comma separated.
    #[arg(long)]
    coeffs: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Reynolds numbers, comma separated.
    #[arg(long = "R")]
    r: Option<String>,
    /// Wave amplitudes, comma separated.
    #[arg(long)]
    beta: Option<String>,
    /// Perturbation sizes (or the inverse Reynolds number for drift).
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    t: Option<String>,
    /// Chebyshev grid size override.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    ny: Option<String>,
    #[arg(long)]
    nz: Option<String>,
    #[arg(long)]
    lz: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    two_grid_tol: Option<String>,
    #[arg(long)]
    cauchy_tol: Option<String>,
    #[arg(long)]
    agree_tol: Option<String>,
    /// `default` or `sin:<l>:<k>`.
    #[arg(long)]
    gshape: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    branch: Option<String>,
    /// Reynolds numbers along which to follow the inviscid mode.
    #[arg(long)]
    track: Option<String>,
    /// Number of uniform streamline levels.
    #[arg(long)]
    levels: Option<String>,
    /// Number of Sturm-Liouville eigenpairs.
    #[arg(long)]
    modes: Option<String>,
    /// Newton-corrected travelling wave.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    newton: Option<String>,
    /// Subcommand run by `sweep`.
    #[arg(long)]
    task: Option<String>,
    /// Key varied by `sweep`.
    #[arg(long)]
    param: Option<String>,
    /// Values for `sweep`, separated by ';'.
    #[arg(long)]
    values: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    cache: Option<String>,
}

impl Params {
    fn overrides(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("kind", &self.kind),
            ("n", &self.n),
            ("A", &self.a),
            ("coeffs", &self.coeffs),
            ("alpha", &self.alpha),
            ("R", &self.r),
            ("beta", &self.beta),
            ("eps", &self.eps),
            ("t", &self.t),
            ("grid", &self.grid),
            ("ny", &self.ny),
            ("nz", &self.nz),
            ("lz", &self.lz),
            ("tol", &self.tol),
            ("two_grid_tol", &self.two_grid_tol),
            ("cauchy_tol", &self.cauchy_tol),
            ("agree_tol", &self.agree_tol),
            ("gshape", &self.gshape),
            ("branch", &self.branch),
            ("track", &self.track),
            ("levels", &self.levels),
            ("modes", &self.modes),
            ("newton", &self.newton),
            ("task", &self.task),
            ("param", &self.param),
            ("values", &self.values),
            ("out", &self.out),
            ("cache", &self.cache),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

struct Failure {
    code: i32,
    message: String,
}

/// Runs one pipeline through the cache. Errors are never cached.
fn execute(cfg: &RunConfig) -> Result<ResultRecord, Failure> {
    let started = now();
    let key = input_hash(cfg);
    let cache = Cache::locate(&cfg.out);
    let cached = if cfg.cache { cache.lookup(&key) } else { None };
    let (product, status) = match cached {
        Some(p) => (p, "hit"),
        None => {
            let p = commands::run(cfg).map_err(|e| Failure {
                code: commands::exit_code(&e),
                message: e.to_string(),
            })?;
            if cfg.cache {
                if let Err(e) = cache.store(&key, &p) {
                    log::warn!("could not write cache entry: {e}");
                }
                (p, "miss")
            } else {
                (p, "disabled")
            }
        }
    };
    if let Err(e) = write_files(&cfg.out, &product.files) {
        log::warn!("could not write output files: {e}");
    }
    Ok(ResultRecord {
        schema_version: SCHEMA_VERSION,
        command: cfg.command.name().to_string(),
        input_hash: key,
        started,
        finished: now(),
        cache: status.to_string(),
        config: serde_json::from_str(&cfg.canonical()).expect("canonical config is json"),
        payload: product.payload,
        provenance: product.provenance,
        summary: product.summary,
        warnings: product.warnings,
        files: product.files.keys().cloned().collect(),
        exit_code: product.exit_code,
    })
}

fn write_files(dir: &Path, files: &BTreeMap<String, String>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

fn write_record(dir: &Path, rec: &ResultRecord) -> std::io::Result<String> {
    let text = serde_json::to_string_pretty(rec).expect("record serializes");
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{}.json", rec.command)), &text)?;
    Ok(text)
}

fn sweep(cfg: &RunConfig, kv: &BTreeMap<String, String>) -> Result<ResultRecord, Failure> {
    let spec = cfg.sweep.as_ref().expect("sweep spec resolved");
    let started = now();
    let points: Vec<RunConfig> = spec
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut p = kv.clone();
            p.insert(spec.param.clone(), v.clone());
            let mut c = RunConfig::resolve(spec.task, &p).map_err(|e| Failure { code: 2, message: e.to_string() })?;
            c.out = cfg.out.join(format!("point_{i}"));
            Ok(c)
        })
        .collect::<Result<_, Failure>>()?;

    // par_iter keeps input order in the collected results
    let results: Vec<Result<ResultRecord, Failure>> = points
        .par_iter()
        .map(|c| {
            let r = execute(c)?;
            if let Err(e) = write_record(&c.out, &r) {
                log::warn!("could not write record: {e}");
            }
            Ok(r)
        })
        .collect();

    let mut keys: Vec<String> = results
        .iter()
        .flatten()
        .flat_map(|r| r.summary.keys().cloned())
        .collect();
    keys.sort();
    keys.dedup();
    let mut header = vec!["index", spec.param.as_str(), "exit_code"];
    header.extend(keys.iter().map(String::as_str));
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut code = 0;
    for (i, (v, r)) in spec.values.iter().zip(&results).enumerate() {
        let mut row = vec![Cell::from(i), Cell::from(v.as_str())];
        match r {
            Ok(rec) => {
                code = code.max(rec.exit_code);
                row.push(Cell::from(rec.exit_code as usize));
                for k in &keys {
                    row.push(rec.summary.get(k).map_or(Cell::from(""), |x| Cell::from(*x)));
                }
                warnings.extend(rec.warnings.iter().map(|w| format!("point {i}: {w}")));
                entries.push(json!({
                    "index": i, "value": v, "exit_code": rec.exit_code, "cache": rec.cache,
                    "input_hash": rec.input_hash, "summary": rec.summary, "provenance": rec.provenance,
                }));
            }
            Err(f) => {
                code = code.max(f.code);
                row.push(Cell::from(f.code as usize));
                row.extend(keys.iter().map(|_| Cell::from("")));
                warnings.push(format!("point {i}: {}", f.message));
                entries.push(json!({"index": i, "value": v, "exit_code": f.code, "error": f.message}));
            }
        }
        rows.push(row);
    }
    let table = csv_table(&header, rows);
    if let Err(e) = write_files(&cfg.out, &BTreeMap::from([("sweep.csv".to_string(), table)])) {
        log::warn!("could not write sweep table: {e}");
    }
    Ok(ResultRecord {
        schema_version: SCHEMA_VERSION,
        command: "sweep".into(),
        input_hash: input_hash(cfg),
        started,
        finished: now(),
        cache: "none".into(),
        config: serde_json::from_str(&cfg.canonical()).expect("canonical config is json"),
        payload: json!({"task": spec.task.name(), "param": spec.param, "points": entries}),
        provenance: json!({"points": spec.values.len()}),
        summary: BTreeMap::new(),
        warnings,
        files: vec!["sweep.csv".into()],
        exit_code: code,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, params) = match cli.command {
        Sub::Sturm(p) => (Command::Sturm, p),
        Sub::Rayleigh(p) => (Command::Rayleigh, p),
        Sub::Os(p) => (Command::Os, p),
        Sub::Catseye(p) => (Command::Catseye, p),
        Sub::Shear3d(p) => (Command::Shear3d, p),
        Sub::Drift(p) => (Command::Drift, p),
        Sub::Sweep(p) => (Command::Sweep, p),
    };
    let mut kv = match &params.config {
        Some(path) => match config::read_file(path) {
            Ok(kv) => kv,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => BTreeMap::new(),
    };
    kv.extend(params.overrides());
    let cfg = match RunConfig::resolve(command, &kv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    let result = if command == Command::Sweep {
        sweep(&cfg, &kv)
    } else {
        execute(&cfg)
    };
    match result {
        Ok(rec) => {
            match write_record(&cfg.out, &rec) {
                Ok(text) => println!("{text}"),
                Err(e) => {
                    log::warn!("could not write record: {e}");
                    println!("{}", serde_json::to_string_pretty(&rec).expect("record serializes"));
                }
            }
            ExitCode::from(rec.exit_code as u8)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
