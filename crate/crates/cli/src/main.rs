//! `cpcm`: change-point estimation for Weibull series with copula Markov
//! dependence.
//!
//! Exit codes: 0 on success, 1 when estimation or I/O fails, 2 for usage
//! errors. Diagnostics go to stderr as `key=value` lines. Without `--out`
//! the report is printed to stdout, which then carries nothing else.
//!
//! Option values are taken from flags first, then from `CPCM_*`
//! environment variables, then from built-in defaults.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::builder::TypedValueParser as _;
use clap::{error::ErrorKind, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use cpcm_core::bootstrap::{self, BootstrapConfig, TauWindow};
use cpcm_core::data::{self, CsvColumns, Format, Report};
use cpcm_core::likelihood::{ChangePoint, ModelParams};
use cpcm_core::optimizer::{profile_fit, NewtonConfig, ProfileConfig};
use cpcm_core::selection::{self, Candidate, DEFAULT_AIC_PARAMS};
use cpcm_core::simulate::{self, PRESET_NAMES};
use cpcm_core::CopulaFamily;

#[derive(Parser, Debug)]
#[command(name = "cpcm", version, about = "Single change-point estimation for Weibull series with Clayton/Joe copula dependence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the change-point model by profile likelihood.
    Fit(FitArgs),
    /// Simulate a series from the change-point model.
    Simulate(SimulateArgs),
    /// Run a Monte Carlo study preset.
    Bench(BenchArgs),
    /// Parametric bootstrap confidence intervals.
    Bootstrap(BootstrapArgs),
    /// Waiting times between threshold exceedances.
    Interarrival(InterarrivalArgs),
    /// Compare copula families by AIC.
    Compare(CompareArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Copula {
    Clayton,
    Joe,
}

impl From<Copula> for CopulaFamily {
    fn from(c: Copula) -> Self {
        match c {
            Copula::Clayton => CopulaFamily::Clayton,
            Copula::Joe => CopulaFamily::Joe,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
    Md,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Json => Format::Json,
            OutFormat::Csv => Format::Csv,
            OutFormat::Md => Format::Md,
        }
    }
}

#[derive(Args, Debug)]
struct Output {
    /// Write the report here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format. Defaults to the extension of --out.
    #[arg(long, value_enum, env = "CPCM_FORMAT")]
    format: Option<OutFormat>,
}

impl Output {
    fn format(&self, fallback: Format) -> Format {
        match (self.format, &self.out) {
            (Some(f), _) => f.into(),
            (None, Some(p)) if p.extension().is_some() => Format::from_path(p),
            _ => fallback,
        }
    }

    fn emit<R: Report + ?Sized>(&self, report: &R, fallback: Format) -> Result<()> {
        let fmt = self.format(fallback);
        match &self.out {
            Some(p) => data::write_report(report, p, fmt).with_context(|| format!("writing {}", p.display()))?,
            None => print!("{}", report.render(fmt)?),
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct Input {
    /// CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Column holding the row labels.
    #[arg(long, default_value = data::DEFAULT_LABEL_COLUMN, env = "CPCM_DATE_COLUMN")]
    date_column: String,
    /// Column holding the observations.
    #[arg(long, default_value = data::DEFAULT_VALUE_COLUMN, env = "CPCM_VALUE_COLUMN")]
    value_column: String,
}

impl Input {
    fn read(&self) -> Result<data::RawSeries> {
        let cols = CsvColumns {
            label: self.date_column.clone(),
            value: self.value_column.clone(),
        };
        data::read_csv_with(&self.input, &cols).with_context(|| format!("reading {}", self.input.display()))
    }
}

#[derive(Args, Debug)]
struct FitOptions {
    /// Smallest change point tried (default 3).
    #[arg(long)]
    tau_min: Option<usize>,
    /// Largest change point tried (default T-3).
    #[arg(long)]
    tau_max: Option<usize>,
    /// Newton step tolerance.
    #[arg(long, default_value_t = NewtonConfig::default().epsilon, env = "CPCM_EPSILON")]
    epsilon: f64,
    #[arg(long, default_value_t = NewtonConfig::default().max_iters, env = "CPCM_MAX_ITERS")]
    max_iters: usize,
    /// Allow Clayton dependence down to -0.99.
    #[arg(long)]
    allow_negative_clayton: bool,
}

impl FitOptions {
    fn profile_config(&self) -> ProfileConfig {
        ProfileConfig {
            newton: NewtonConfig {
                epsilon: self.epsilon,
                max_iters: self.max_iters,
                allow_negative_clayton: self.allow_negative_clayton,
                ..NewtonConfig::default()
            },
            tau_min: self.tau_min,
            tau_max: self.tau_max,
            ..ProfileConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, env = "CPCM_COPULA")]
    copula: Copula,
    /// Assumed junction dependence.
    #[arg(long, default_value_t = 2.0, env = "CPCM_ALPHA01")]
    alpha01: f64,
    #[command(flatten)]
    fit: FitOptions,
    /// Directory for profile.csv and series_annotated.csv. Defaults to the
    /// directory of --out; without either, they are not written.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value = "clayton", env = "CPCM_COPULA")]
    copula: Copula,
    #[arg(long, default_value_t = simulate::PRESET_GAMMA0.0)]
    k0: f64,
    #[arg(long, default_value_t = simulate::PRESET_GAMMA1.0)]
    k1: f64,
    #[arg(long, default_value_t = simulate::PRESET_GAMMA0.1)]
    l0: f64,
    #[arg(long, default_value_t = simulate::PRESET_GAMMA1.1)]
    l1: f64,
    #[arg(long, default_value_t = 2.0)]
    a0: f64,
    #[arg(long, default_value_t = 2.0)]
    a1: f64,
    #[arg(long, default_value_t = 2.0)]
    a01: f64,
    #[arg(long, default_value_t = 125)]
    tau: usize,
    /// Series length, at least 7.
    #[arg(long = "T", visible_alias = "len", default_value_t = 250,
          value_parser = clap::value_parser!(u64).range(7..).map(|v| v as usize))]
    len: usize,
    #[arg(long, default_value_t = 0, env = "CPCM_SEED")]
    seed: u64,
    /// Write the series here (atomically) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: String,
    /// Overrides the preset's replication count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    replications: Option<usize>,
    /// Worker threads; the report does not depend on it.
    #[arg(long, env = "CPCM_WORKERS", value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    workers: Option<usize>,
    /// Offsets every study seed of the preset.
    #[arg(long, default_value_t = 0, env = "CPCM_SEED")]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct BootstrapArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, env = "CPCM_COPULA")]
    copula: Copula,
    #[arg(long, default_value_t = 2.0, env = "CPCM_ALPHA01")]
    alpha01: f64,
    /// Bootstrap replications.
    #[arg(long = "B", visible_alias = "replications", default_value_t = 1000,
          value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    b: usize,
    /// Confidence level in (0, 1).
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    level: f64,
    #[arg(long, default_value_t = 0, env = "CPCM_SEED")]
    seed: u64,
    #[arg(long, env = "CPCM_WORKERS", value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    workers: Option<usize>,
    /// Refits attempted per replication before it counts as failed.
    #[arg(long, default_value_t = 3)]
    max_retries: usize,
    /// Anchor the change-point window at the smallest replicate.
    #[arg(long)]
    anchored_tau_window: bool,
    #[command(flatten)]
    fit: FitOptions,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct InterarrivalArgs {
    #[command(flatten)]
    input: Input,
    /// Rows with value strictly above this count as exceedances.
    #[arg(long, default_value_t = data::DEFAULT_THRESHOLD, env = "CPCM_THRESHOLD")]
    threshold: f64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    input: Input,
    /// Comma separated `family:alpha01` list.
    #[arg(long, default_value = "clayton:2,joe:2", value_parser = parse_candidates)]
    candidates: CandidateList,
    /// Parameter count used in the AIC.
    #[arg(long, default_value_t = DEFAULT_AIC_PARAMS,
          value_parser = clap::value_parser!(u64).range(1..).map(|v| v as usize))]
    aic_params: usize,
    #[command(flatten)]
    fit: FitOptions,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Debug)]
struct CandidateList(Vec<Candidate>);

fn parse_candidates(s: &str) -> Result<CandidateList, String> {
    selection::parse_candidates(s).map(CandidateList).map_err(|e| e.to_string())
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("level must lie strictly between 0 and 1, got {v}"))
    }
}

/// Prints one `key=value` diagnostics line, quoting values with spaces.
fn log(pairs: &[(&str, String)]) {
    let line: Vec<String> = pairs
        .iter()
        .map(|(k, v)| {
            if v.is_empty() || v.contains([' ', '=', '"']) {
                format!("{k}={v:?}")
            } else {
                format!("{k}={v}")
            }
        })
        .collect();
    eprintln!("{}", line.join(" "));
}

fn usage_error(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(ErrorKind::ValueValidation, msg).exit()
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let start = Instant::now();
    let series = a.input.read()?.to_series()?;
    let family = a.copula.into();
    let fit = profile_fit(&series, family, a.alpha01, &a.fit.profile_config())?;
    a.output.emit(&fit, Format::Json)?;
    let plot_dir = a
        .plot_dir
        .clone()
        .or_else(|| a.output.out.as_deref().map(|p| p.parent().unwrap_or(Path::new("")).to_path_buf()));
    if let Some(dir) = plot_dir {
        let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
        data::write_atomic(dir.join("profile.csv"), data::profile_csv(&fit)?.as_bytes())?;
        data::write_atomic(dir.join("series_annotated.csv"), data::annotated_series_csv(&series, fit.tau)?.as_bytes())?;
    }
    log(&[
        ("event", "fit".into()),
        ("copula", family.to_string()),
        ("n", fit.n.to_string()),
        ("tau", fit.tau.to_string()),
        ("loglik", fit.loglik.to_string()),
        ("aic", fit.aic.to_string()),
        ("converged", fit.converged.to_string()),
        ("secs", format!("{:.3}", start.elapsed().as_secs_f64())),
    ]);
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let family: CopulaFamily = a.copula.into();
    let truth = ModelParams::from_tuples(family, (a.k0, a.l0), (a.k1, a.l1), (a.a0, a.a1, a.a01))
        .unwrap_or_else(|e| usage_error(e));
    let cp = ChangePoint::new(a.tau, a.len).unwrap_or_else(|e| usage_error(e));
    let series = simulate::gen_series(&truth, cp, a.len, a.seed)?;
    let raw = data::RawSeries::from_values(series.values());
    let mut w = String::from("date,value\n");
    for r in &raw.rows {
        w.push_str(&format!("{},{}\n", r.label, r.value));
    }
    match &a.out {
        Some(p) => data::write_atomic(p, w.as_bytes())?,
        None => print!("{w}"),
    }
    log(&[
        ("event", "simulate".into()),
        ("copula", family.to_string()),
        ("len", a.len.to_string()),
        ("tau", a.tau.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    Ok(())
}

fn run_bench(a: &BenchArgs) -> Result<()> {
    let mut configs = simulate::preset(&a.preset)?;
    for c in &mut configs {
        if let Some(r) = a.replications {
            c.replications = r;
        }
        c.seed = c.seed.wrapping_add(a.seed);
        c.workers = a.workers;
    }
    let mut reports = Vec::with_capacity(configs.len());
    for (cfg, result) in configs.iter().zip(simulate::study_grid(&configs)) {
        let r = result.with_context(|| format!("study {}", cfg.name))?;
        let tau = r.row("tau").expect("tau row");
        log(&[
            ("event", "study".into()),
            ("name", r.name.clone()),
            ("failures", r.failures.to_string()),
            ("tau_mean", tau.mean.to_string()),
            ("tau_rmse", tau.rmse.to_string()),
            ("secs", format!("{:.3}", r.wall_clock.as_secs_f64())),
        ]);
        reports.push(r);
    }
    a.output.emit(&reports, Format::Json)
}

fn run_bootstrap(a: &BootstrapArgs) -> Result<()> {
    let start = Instant::now();
    let series = a.input.read()?.to_series()?;
    let family = a.copula.into();
    let fit_cfg = a.fit.profile_config();
    let fit = profile_fit(&series, family, a.alpha01, &fit_cfg)?;
    let cfg = BootstrapConfig {
        replications: a.b,
        level: a.level,
        seed: a.seed,
        max_retries_per_rep: a.max_retries,
        tau_window: if a.anchored_tau_window { TauWindow::AnchoredAtMin } else { TauWindow::Shortest },
        fit: fit_cfg,
        workers: a.workers,
    };
    let result = bootstrap::parametric_bootstrap(&series, &fit, &cfg)?;
    a.output.emit(&result, Format::Json)?;
    log(&[
        ("event", "bootstrap".into()),
        ("copula", family.to_string()),
        ("tau", fit.tau.to_string()),
        ("tau_lo", result.tau_interval.lo.to_string()),
        ("tau_hi", result.tau_interval.hi.to_string()),
        ("replications", a.b.to_string()),
        ("failures", result.failures.to_string()),
        ("secs", format!("{:.3}", start.elapsed().as_secs_f64())),
    ]);
    Ok(())
}

fn run_interarrival(a: &InterarrivalArgs) -> Result<()> {
    let raw = a.input.read()?;
    let ia = data::interarrival(&raw, a.threshold)?;
    a.output.emit(&ia, Format::Csv)?;
    log(&[
        ("event", "interarrival".into()),
        ("rows", ia.total_rows.to_string()),
        ("events", ia.events.len().to_string()),
        ("trailing", ia.trailing.to_string()),
        ("threshold", a.threshold.to_string()),
    ]);
    Ok(())
}

fn run_compare(a: &CompareArgs) -> Result<()> {
    let series = a.input.read()?.to_series()?;
    let cmp = selection::compare(&series, &a.candidates.0, &a.fit.profile_config(), a.aic_params)?;
    a.output.emit(&cmp, Format::Json)?;
    for o in &cmp.outcomes {
        log(&[
            ("event", "candidate".into()),
            ("candidate", o.candidate.to_string()),
            ("aic", o.aic.map_or(String::new(), |x| x.to_string())),
            ("error", o.error.clone().unwrap_or_default()),
        ]);
    }
    log(&[("event", "compare".into()), ("winner", cmp.winner().candidate.to_string())]);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Bench(a) => run_bench(a),
        Command::Bootstrap(a) => run_bootstrap(a),
        Command::Interarrival(a) => run_interarrival(a),
        Command::Compare(a) => run_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log(&[("event", "error".into()), ("error", format!("{e:#}"))]);
            ExitCode::from(1)
        }
    }
}
