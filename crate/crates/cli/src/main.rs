//! `cone-lab`: sampling, moments, estimates and identity checks from a run
//! configuration.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 a
//! mathematical identity failed, 3 numerical (quadrature) failure. Errors are
//! printed to stderr as `ERROR <code>: <message>`.

mod config;

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use conelab::estimators::{estimate_functional, FunctionalKind};
use conelab::intensity::{self, lambda_mass, lambda_moment, MomentDomain};
use conelab::oracle::{exact_suite, EXACT_TOLERANCE};
use conelab::suite::{mc_csv_line, mc_suite, suite_csv, MC_CSV_HEADER};
use conelab::{Error, FunctionSpec, SampleBatch};
use serde_json::json;

use crate::config::{parse_vector, RunConfig};

#[derive(Parser)]
#[command(name = "cone-lab", version, about = "Harmonic analysis for random vector-valued discrete measures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; defaults to `[output] csv`, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw Poisson configurations; writes a batch CSV and a JSON-lines manifest.
    Sample {
        #[command(flatten)]
        io: ConfigArg,
        /// Number of configurations (defaults to `run.n_samples`).
        #[arg(long)]
        n: Option<usize>,
        /// Manifest path; defaults to `[output] manifest`.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Also write the sampled speeds |v| as a one-column CSV.
        #[arg(long)]
        speeds: Option<PathBuf>,
    },
    /// Tabulate λ masses, λ moments and the σ mass.
    Moments {
        #[command(flatten)]
        io: ConfigArg,
        /// Highest moment order.
        #[arg(long, default_value_t = 2)]
        max_order: u32,
    },
    /// Monte Carlo estimate of one functional against its closed form.
    Estimate {
        #[command(flatten)]
        io: ConfigArg,
        /// laplace | campbell | bogoliubov | cone_laplace
        #[arg(long)]
        kind: String,
        /// Test function; defaults to `[functions] <kind>`, then `psi`/`phi`.
        #[arg(long)]
        function: Option<String>,
        /// Direction h for cone_laplace, comma separated (default e_1).
        #[arg(long)]
        h: Option<String>,
        /// Sample sizes; repeat for a convergence table.
        #[arg(long = "n-samples")]
        n_samples: Vec<usize>,
    },
    /// Exact finite-ground-set checks of the Minlos and Bernoulli identities.
    VerifyExact {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        instances: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full Monte Carlo identity suite against closed forms.
    VerifyMc {
        #[command(flatten)]
        io: ConfigArg,
    },
}

enum Failure {
    Config(String),
    Verification(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Verification(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::QuadratureFailure { .. } | Error::DivergentMoment(_) => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load(io: &ConfigArg) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(&io.config)?;
    cfg.apply_env()?;
    Ok(cfg)
}

fn output_path(explicit: &Option<PathBuf>, cfg: Option<&RunConfig>, key: &str) -> Option<PathBuf> {
    explicit
        .clone()
        .or_else(|| cfg.and_then(|c| c.output.get(key).cloned()))
}

fn emit(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Failure::Config(format!("cannot write to stdout: {e}")))
        }
    }
}

fn sample(io: &ConfigArg, n: Option<usize>, manifest: &Option<PathBuf>, speeds: &Option<PathBuf>) -> CmdResult {
    let cfg = load(io)?;
    let n = n.unwrap_or(cfg.run.n_samples);
    let batch = SampleBatch::generate(&cfg.sigma, n, cfg.run.seed, cfg.run.chunks)?;
    let out = output_path(&io.out, Some(&cfg), "csv");
    emit(out.as_deref(), &batch.to_csv())?;

    if let Some(path) = speeds {
        let mut text = String::from("speed\n");
        for gamma in &batch.configs {
            for p in gamma.iter() {
                writeln!(text, "{}", p.speed()).unwrap();
            }
        }
        emit(Some(path), &text)?;
    }

    if let Some(path) = output_path(manifest, Some(&cfg), "manifest") {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let s = &cfg.sigma;
        let record = json!({
            "timestamp": timestamp,
            "command": "sample",
            "seed": cfg.run.seed,
            "chunks": cfg.run.chunks,
            "sigma": {
                "d": s.d(),
                "alpha": s.law.alpha(),
                "beta": s.law.beta(),
                "eps": s.marks.eps(),
                "rmax": s.marks.rmax(),
                "one_sided": s.marks.is_one_sided(),
                "box_lower": s.window.lower(),
                "box_upper": s.window.upper(),
                "mass": batch.sigma.sigma_mass()?,
            },
            "counts": {
                "configurations": batch.configs.len(),
                "points": batch.total_points(),
            },
            "output": out.as_ref().map(|p| p.display().to_string()),
        });
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Failure::Config(format!("cannot open {}: {e}", path.display())))?;
        writeln!(file, "{record}")
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn moments(io: &ConfigArg, max_order: u32) -> CmdResult {
    let cfg = load(io)?;
    let s = &cfg.sigma;
    let mut text = String::from("quantity,n,domain,value\n");
    writeln!(text, "lambda_mass,0,annulus,{}", lambda_mass(&s.law, &s.marks)?).unwrap();
    for n in 1..=max_order {
        let v = lambda_moment(&s.law, n, MomentDomain::Annulus(s.marks))?;
        writeln!(text, "lambda_moment,{n},annulus,{v}").unwrap();
    }
    for n in 1..=max_order {
        let v = lambda_moment(&s.law, n, MomentDomain::Full)?;
        writeln!(text, "lambda_moment,{n},full,{v}").unwrap();
    }
    writeln!(text, "sigma_mass,0,window,{}", intensity::sigma_mass(s)?).unwrap();
    emit(output_path(&io.out, Some(&cfg), "csv").as_deref(), &text)
}

fn estimate(
    io: &ConfigArg,
    kind: &str,
    function: &Option<String>,
    h: &Option<String>,
    n_samples: &[usize],
) -> CmdResult {
    let cfg = load(io)?;
    let kind: FunctionalKind = kind.parse()?;
    let fallback = match kind {
        FunctionalKind::Laplace | FunctionalKind::Campbell => "psi",
        FunctionalKind::Bogoliubov | FunctionalKind::ConeLaplace => "phi",
    };
    let text = function
        .clone()
        .or_else(|| cfg.functions.get(kind.name()).cloned())
        .or_else(|| cfg.functions.get(fallback).cloned())
        .ok_or_else(|| {
            Failure::Config(format!("no test function: pass --function or set `{fallback}` in [functions]"))
        })?;
    let f: FunctionSpec = text.parse()?;
    let h = match h.clone().or_else(|| cfg.functions.get("h").cloned()) {
        Some(raw) => parse_vector(&raw, "h")?,
        None => {
            let mut e = vec![0.0; cfg.sigma.d()];
            e[0] = 1.0;
            e
        }
    };
    let h = (kind == FunctionalKind::ConeLaplace).then_some(h);

    let sizes = if n_samples.is_empty() {
        vec![cfg.run.n_samples]
    } else {
        n_samples.to_vec()
    };
    if sizes.contains(&0) {
        return Err(Failure::Config("n-samples must be at least 1".into()));
    }
    let mut out = format!("{MC_CSV_HEADER}\n");
    for n in sizes {
        let settings = cfg.run.mc().with_samples(n);
        let r = estimate_functional(kind, &f, h.as_deref(), &cfg.sigma, &settings)?;
        writeln!(out, "{}", mc_csv_line(kind.name(), "functional", &r, settings.seed)).unwrap();
    }
    emit(output_path(&io.out, Some(&cfg), "csv").as_deref(), &out)
}

fn verify_exact(seed: u64, instances: usize, out: &Option<PathBuf>) -> CmdResult {
    let rows = exact_suite(seed, instances)?;
    let mut text = String::from("identity,instance_seed,lhs,rhs,abs_diff,pass\n");
    for r in &rows {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            r.identity.name(),
            r.instance_seed,
            r.check.lhs,
            r.check.rhs,
            r.check.abs_diff,
            r.pass
        )
        .unwrap();
    }
    emit(out.as_deref(), &text)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(Failure::Verification(format!(
            "{failed} of {} exact checks exceed {EXACT_TOLERANCE:e}",
            rows.len()
        )));
    }
    Ok(())
}

fn verify_mc(io: &ConfigArg) -> CmdResult {
    let cfg = load(io)?;
    let rows = mc_suite(&cfg.sigma, &cfg.run.mc(), cfg.run.n_max)?;
    emit(output_path(&io.out, Some(&cfg), "csv").as_deref(), &suite_csv(&rows))?;
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.verdict.passed())
        .map(|r| r.quantity.as_str())
        .collect();
    if !failed.is_empty() {
        return Err(Failure::Verification(format!(
            "Monte Carlo checks failed: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    // usage errors are configuration errors; clap's default code 2 is
    // reserved for identity failures
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Sample {
            io,
            n,
            manifest,
            speeds,
        } => sample(io, *n, manifest, speeds),
        Command::Moments { io, max_order } => moments(io, *max_order),
        Command::Estimate {
            io,
            kind,
            function,
            h,
            n_samples,
        } => estimate(io, kind, function, h, n_samples),
        Command::VerifyExact {
            seed,
            instances,
            out,
        } => verify_exact(*seed, *instances, out),
        Command::VerifyMc { io } => verify_mc(io),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ERROR {}: {}", f.code(), f.message());
            ExitCode::from(f.code())
        }
    }
}
