//! Batch front end: argument parsing, run configs and the six subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lab::{default_window, transition_report, Mode, ScanConfig};
use crate::model::{ModelSpec, Regime, SpectralModel};
use crate::oracle::{convergence_scan, sides};
use crate::synth::{ma_coefficients, Innovations, Law, Synthesizer};
use crate::theory::{self, Branch, Side};

pub const OUT_ENV: &str = "ANISCALE_OUT";
pub const DEFAULT_OUT: &str = "aniscale-out";
pub const DEFAULT_GAMMAS: [f64; 8] = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];
pub const DEFAULT_LAMBDAS: [f64; 4] = [64.0, 128.0, 256.0, 512.0];

#[derive(Parser, Debug)]
#[command(
    name = "aniscale",
    version,
    about = "Anisotropic scaling limits of lattice random fields: theory, exact covariances and simulation",
    after_help = "Exit codes: 0 ok, 2 configuration error, 3 numerical non-convergence, 4 excluded parameter case.\n\
                  The ANISCALE_OUT environment variable overrides --out."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Print γ₀, the Hurst pairs, the H(γ) curve and κ± as JSON.
    Predict,
    /// κ± closed forms and quadrature values side by side.
    Kappa,
    /// Exact finite-λ covariances against the limit covariance, as CSV.
    Oracle,
    /// Simulate lattice fields and write them as binary files with JSON sidecars.
    Synth,
    /// γ × λ variance scan with exponent fits and kink detection.
    Scan,
    /// Summarize the scan results found in the output directory.
    Report,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// TOML file with a [model] table and an optional [run] table.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Model regime: lrd, nd, lrnd1, lrnd2, hyperbolic.
    #[arg(long, global = true)]
    pub regime: Option<Regime>,
    /// Radial exponents υ₁ υ₂.
    #[arg(long, global = true, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    pub upsilon: Option<Vec<f64>>,
    /// LRND exponent μ of the vanishing angular factor.
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    /// LRND amplitude ℓ of the vanishing angular factor.
    #[arg(long, global = true)]
    pub ell: Option<f64>,
    /// γ values: comma list `0.5,1,2` or range `start:stop:step`.
    #[arg(long, global = true, value_name = "LIST")]
    pub gamma_grid: Option<String>,
    /// λ values: comma list or range `start:stop:step`.
    #[arg(long, global = true, value_name = "LIST")]
    pub lambda_grid: Option<String>,
    /// Monte Carlo replicas (synth: number of fields).
    #[arg(long, global = true)]
    pub replicas: Option<usize>,
    /// Innovation law: gaussian, rademacher, centered-uniform.
    #[arg(long, global = true)]
    pub law: Option<Law>,
    /// Base seed; replica r uses the stream (seed, r).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Variance source for scans.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<RunMode>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Relative quadrature tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Oracle,
    Mc,
    Both,
}

/// `[run]` table of a config file; every field optional.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub gammas: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub x: Option<Vec<[f64; 2]>>,
    pub pairs: Option<Vec<[[f64; 2]; 2]>>,
    pub replicas: Option<usize>,
    pub law: Option<Law>,
    pub seed: Option<u64>,
    pub mode: Option<RunMode>,
    pub tol: Option<f64>,
    pub h_tol: Option<f64>,
    pub window: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: Option<ModelSpec>,
    #[serde(default)]
    run: RunSection,
}

/// Fully resolved run settings.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub model: Option<ModelSpec>,
    pub gammas: Option<Vec<f64>>,
    pub lambdas: Vec<f64>,
    pub x: Vec<[f64; 2]>,
    pub pairs: Option<Vec<[[f64; 2]; 2]>>,
    pub replicas: Option<usize>,
    pub law: Law,
    pub seed: u64,
    pub mode: RunMode,
    pub tol: f64,
    pub h_tol: f64,
    pub window: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("run config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse grid `{text}`"));
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let out = match parts.as_slice() {
        [a, b, c] => {
            let (a, b, c): (f64, f64, f64) = (
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
                c.parse().map_err(|_| bad())?,
            );
            if !(c > 0.0) || b < a {
                return Err(bad());
            }
            let n = ((b - a) / c + 1e-9).floor() as usize;
            (0..=n).map(|i| a + c * i as f64).collect()
        }
        [_] => text
            .split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?,
        _ => return Err(bad()),
    };
    if out.is_empty() || out.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(out)
}

/// Merges config file, flags and environment; flags win over the file and
/// `ANISCALE_OUT` wins over `--out`.
pub fn resolve(flags: &Flags, env_out: Option<String>) -> Result<RunConfig> {
    let file: ConfigFile = match &flags.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => ConfigFile::default(),
    };
    let mut model = match (file.model, flags.regime, &flags.upsilon) {
        (_, Some(r), Some(u)) => Some(ModelSpec::new(r, u[0], u[1])),
        (Some(mut m), r, u) => {
            if let Some(r) = r {
                m.regime = r;
            }
            if let Some(u) = u {
                m.upsilon1 = u[0];
                m.upsilon2 = u[1];
            }
            Some(m)
        }
        (None, None, None) => None,
        (None, _, _) => {
            return Err(Error::Config(
                "a model needs both --regime and --upsilon, or a [model] table".into(),
            ))
        }
    };
    if let Some(m) = model.as_mut() {
        if flags.mu.is_some() {
            m.mu = flags.mu;
        }
        if flags.ell.is_some() {
            m.ell = flags.ell;
        }
        if m.regime.is_lrnd() && m.ell.is_none() {
            m.ell = Some(1.0);
        }
    }
    let run = file.run;
    let grid = |flag: &Option<String>, file: Option<Vec<f64>>| -> Result<Option<Vec<f64>>> {
        match flag {
            Some(t) => parse_grid(t).map(Some),
            None => Ok(file),
        }
    };
    let gammas = grid(&flags.gamma_grid, run.gammas)?;
    let lambdas =
        grid(&flags.lambda_grid, run.lambdas)?.unwrap_or_else(|| DEFAULT_LAMBDAS.to_vec());
    let tol = flags.tol.or(run.tol).unwrap_or(1e-6);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Config(format!(
            "--tol must lie in (0, 1), got {tol}"
        )));
    }
    let out = env_out
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .or_else(|| flags.out.clone())
        .or(run.out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    Ok(RunConfig {
        model,
        gammas,
        lambdas,
        x: run.x.unwrap_or_else(|| vec![[1.0, 1.0]]),
        pairs: run.pairs,
        replicas: flags.replicas.or(run.replicas),
        law: flags.law.or(run.law).unwrap_or(Law::Gaussian),
        seed: flags.seed.or(run.seed).unwrap_or(0),
        mode: flags.mode.or(run.mode).unwrap_or(RunMode::Oracle),
        tol,
        h_tol: run.h_tol.unwrap_or(0.1),
        window: run.window,
        out,
    })
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    config_hash: String,
    config: &'a RunConfig,
    result: T,
}

fn envelope<T: Serialize>(command: &str, cfg: &RunConfig, result: T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Envelope {
        command,
        config_hash: cfg.hash(),
        config: cfg,
        result,
    })?)
}

fn with_hash(cfg: &RunConfig, csv: String) -> String {
    format!("# config_hash: {}\n{csv}", cfg.hash())
}

fn write_out(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    std::fs::write(&p, text)?;
    Ok(p)
}

/// Runs one subcommand; returns the text for stdout.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<String> {
    if command == Command::Report {
        return cmd_report(cfg);
    }
    let model = cfg
        .model
        .as_ref()
        .ok_or_else(|| {
            Error::Config("a model needs --regime and --upsilon, or a [model] table".into())
        })?
        .build()?;
    theory::check_supported(&model)?;
    match command {
        Command::Predict => cmd_predict(&model, cfg),
        Command::Kappa => cmd_kappa(&model, cfg),
        Command::Oracle => cmd_oracle(&model, cfg),
        Command::Synth => cmd_synth(&model, cfg),
        Command::Scan => cmd_scan(&model, cfg),
        Command::Report => unreachable!(),
    }
}

pub fn cmd_predict(model: &SpectralModel, cfg: &RunConfig) -> Result<String> {
    let gammas = cfg
        .gammas
        .clone()
        .unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
    let p = theory::predict(model, &gammas)?;
    let json = envelope("predict", cfg, &p)?;
    if cfg.out.as_os_str() != DEFAULT_OUT {
        write_out(&cfg.out, "predict.json", &json)?;
    }
    Ok(json)
}

#[derive(Serialize)]
struct KappaRow {
    gamma: f64,
    side: Option<Side>,
    note: Option<String>,
    value: Option<theory::KappaValue>,
    delta: Option<f64>,
}

pub fn cmd_kappa(model: &SpectralModel, cfg: &RunConfig) -> Result<String> {
    let pivot = theory::gamma0(model).unwrap_or_else(|| theory::crossover(model));
    let gammas = cfg
        .gammas
        .clone()
        .unwrap_or_else(|| vec![2.0 * pivot, 0.5 * pivot]);
    let mut rows = Vec::new();
    for g in gammas {
        let side = match theory::branch(model, g) {
            Branch::Plus => Side::Plus,
            Branch::Minus => Side::Minus,
            Branch::Balanced => {
                rows.push(KappaRow {
                    gamma: g,
                    side: None,
                    note: Some(
                        "well-balanced point: the limit is not a fractional Brownian sheet".into(),
                    ),
                    value: None,
                    delta: None,
                });
                continue;
            }
        };
        let k = theory::kappa_detail(model, g, side, true, cfg.tol)?;
        rows.push(KappaRow {
            gamma: g,
            side: Some(side),
            note: None,
            delta: k.delta(),
            value: Some(k),
        });
    }
    let json = envelope("kappa", cfg, &rows)?;
    if cfg.out.as_os_str() != DEFAULT_OUT {
        write_out(&cfg.out, "kappa.json", &json)?;
    }
    Ok(json)
}

pub fn cmd_oracle(model: &SpectralModel, cfg: &RunConfig) -> Result<String> {
    let gamma = match &cfg.gammas {
        Some(g) if g.len() == 1 => g[0],
        Some(_) => return Err(Error::Config("oracle takes a single γ".into())),
        None => 1.0,
    };
    let pairs: Vec<([f64; 2], [f64; 2])> = match &cfg.pairs {
        Some(p) => p.iter().map(|[x, y]| (*x, *y)).collect(),
        None => cfg.x.iter().map(|x| (*x, *x)).collect(),
    };
    let report = convergence_scan(model, gamma, &cfg.lambdas, &pairs, cfg.tol)?;
    let path = write_out(
        &cfg.out,
        "convergence.csv",
        &with_hash(cfg, report.to_csv()?),
    )?;
    write_out(
        &cfg.out,
        "convergence.json",
        &envelope("oracle", cfg, &report)?,
    )?;
    Ok(format!(
        "wrote {}\ntop-octave change {}\n",
        path.display(),
        report
            .top_octave_change
            .map_or("n/a".to_string(), |c| format!("{c:.3e}"))
    ))
}

pub fn cmd_synth(model: &SpectralModel, cfg: &RunConfig) -> Result<String> {
    let lambda = cfg.lambdas[0];
    let gamma = cfg.gammas.as_ref().map_or(1.0, |g| g[0]);
    let n = sides(lambda, gamma, cfg.x[0]);
    if n.contains(&0) {
        return Err(Error::Config(format!(
            "lattice sides {n:?} must be positive"
        )));
    }
    let window = cfg.window.unwrap_or_else(|| default_window(n[0].max(n[1])));
    let coeffs = Arc::new(ma_coefficients(model, window)?);
    let syn = Synthesizer::new(coeffs.clone(), n[0] as usize, n[1] as usize)?;
    std::fs::create_dir_all(&cfg.out)?;
    let replicas = cfg.replicas.unwrap_or(1);
    for r in 0..replicas as u64 {
        syn.field(&Innovations::new(cfg.law, cfg.seed, r))
            .write_binary(&cfg.out, &format!("field_r{r:05}"))?;
    }
    #[derive(Serialize)]
    struct Manifest {
        sides: [u64; 2],
        replicas: usize,
        window: usize,
        l2_mass_captured: f64,
    }
    let m = Manifest {
        sides: n,
        replicas,
        window,
        l2_mass_captured: coeffs.l2_mass_captured(),
    };
    write_out(&cfg.out, "synth.json", &envelope("synth", cfg, &m)?)?;
    Ok(format!(
        "wrote {replicas} field(s) of {}×{} to {}\n",
        n[0],
        n[1],
        cfg.out.display()
    ))
}

fn scan_config(cfg: &RunConfig, mode: Mode) -> Result<ScanConfig> {
    let gammas = cfg
        .gammas
        .clone()
        .unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
    let mut s = ScanConfig::new(gammas, cfg.lambdas.clone());
    s.mode = mode;
    s.replicas = cfg.replicas.unwrap_or(s.replicas);
    s.law = cfg.law;
    s.seed = cfg.seed;
    s.x = cfg.x[0];
    s.tol = cfg.tol;
    s.h_tol = cfg.h_tol;
    s.window = cfg.window;
    Ok(s)
}

pub fn cmd_scan(model: &SpectralModel, cfg: &RunConfig) -> Result<String> {
    let modes: &[(Mode, &str)] = match cfg.mode {
        RunMode::Oracle => &[(Mode::Oracle, "scan")],
        RunMode::Mc => &[(Mode::Mc, "scan")],
        RunMode::Both => &[(Mode::Oracle, "scan_oracle"), (Mode::Mc, "scan_mc")],
    };
    let mut text = String::new();
    for (mode, stem) in modes {
        let report = transition_report(model, &scan_config(cfg, *mode)?)?;
        report.write(&cfg.out, stem)?;
        let csv = cfg.out.join(format!("{stem}.csv"));
        std::fs::write(&csv, with_hash(cfg, report.to_csv()?))?;
        std::fs::write(
            cfg.out.join(format!("{stem}.json")),
            envelope("scan", cfg, &report)?,
        )?;
        text.push_str(&format!(
            "{stem}: {} ({})\n",
            report.transition_verdict,
            if report.pass { "pass" } else { "fail" }
        ));
    }
    Ok(text)
}

/// Reads every `scan*.json` in the output directory and tabulates it.
pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(&cfg.out)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", cfg.out.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("scan"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no scan results in {}; run `aniscale scan` first",
            cfg.out.display()
        )));
    }
    let mut out = String::new();
    for f in files {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&f)?)?;
        let r = &v["result"];
        out.push_str(&format!(
            "{}  regime {}  model {}\n",
            f.display(),
            r["regime"].as_str().unwrap_or("?"),
            r["model_hash"].as_str().unwrap_or("?")
        ));
        out.push_str("   gamma      H_fit   ±half     H_theory  pass\n");
        for fit in r["fits"].as_array().into_iter().flatten() {
            out.push_str(&format!(
                "  {:7.4}  {:8.5}  {:7.5}  {:8.5}  {}\n",
                fit["gamma"].as_f64().unwrap_or(f64::NAN),
                fit["fit"]["H"].as_f64().unwrap_or(f64::NAN),
                fit["fit"]["half_width"].as_f64().unwrap_or(f64::NAN),
                fit["theory_h"].as_f64().unwrap_or(f64::NAN),
                fit["pass"].as_bool().unwrap_or(false),
            ));
        }
        out.push_str(&format!(
            "  {}\n  overall: {}\n",
            r["transition_verdict"].as_str().unwrap_or(""),
            if r["pass"].as_bool() == Some(true) {
                "pass"
            } else {
                "fail"
            }
        ));
    }
    write_out(&cfg.out, "report.txt", &out)?;
    Ok(out)
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = (|| {
        let cfg = resolve(&cli.flags, std::env::var(OUT_ENV).ok())?;
        let threads = cli.flags.threads.unwrap_or(0);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| execute(cli.command, &cfg))
    })();
    match result {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
