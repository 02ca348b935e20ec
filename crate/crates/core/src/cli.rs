//! The `modinf` command line.
//!
//! Every command reads one configuration file (see [`crate::config`]) and
//! writes CSV files into the output directory. Exit codes: 0 success,
//! 1 usage or configuration error, 2 numerical non-convergence (the CSV
//! files are still written).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::background::{rho_t, BackgroundError, BackgroundSpec};
use crate::config::{Config, ConfigError, Section};
use crate::ldp::{
    attainable_bounds_dp, attainable_bounds_oracle, hybrid_ldp_estimate, quantize, schilder_refine,
    truncated_upper_bounds, AttainableInterval, LdpError, PsiSpec, RateFunctionModel, RealSet, SchilderOptions,
    DEFAULT_ORACLE_BUDGET,
};
use crate::modulation::{phi, phi_profile, Modulation, ModulationError};
use crate::paths::{PathError, StateSpace, StepPath};
use crate::queue::{
    chi_square_homogeneity, empirical_pmf, simulate_replicas, tv_distance, QueueError, SimMode,
};
use crate::rng::StreamFactory;

#[derive(Debug, Parser)]
#[command(name = "modinf", version, about = "Modulated infinite-server queue experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed for all random streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Directory for CSV output.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Require an explicit seed (also enabled by the CI environment variable).
    #[arg(long, global = true)]
    pub ci: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Evaluate φ_t on a path file.
    Phi,
    /// Simulate the queue and record M(t) per replica.
    Simulate,
    /// Compare the direct and conditional simulators.
    VerifyMixture,
    /// Attainable interval by dynamic programming and enumeration.
    Attainable,
    /// Tabulate the rate function.
    Rate,
    /// Empirical decay rates over a schedule of n.
    LdpSlope,
    /// Discretized Schilder variational problem.
    Schilder,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ldp(#[from] LdpError),
    #[error(transparent)]
    Queue(#[from] QueueError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error(transparent)]
    Background(#[from] BackgroundError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Whether every numerical procedure met its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    NotConverged,
}

pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(Outcome::Converged) => 0,
        Ok(Outcome::NotConverged) => {
            eprintln!("warning: numerical procedure did not converge; results written anyway");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn ci_mode(cli: &Cli) -> bool {
    cli.ci || std::env::var_os("CI").is_some_and(|v| !v.is_empty() && v != "0" && v != "false")
}

fn seed(cli: &Cli) -> Result<u64, CliError> {
    match cli.seed {
        Some(s) => Ok(s),
        None if ci_mode(cli) => Err(CliError::Usage("--seed is required in CI mode".into())),
        None => {
            let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos());
            let s = now as u64;
            eprintln!("seed = {s}");
            Ok(s)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Usage("--config FILE is required".into()))?;
    let config = Config::load(path)?;
    let needs_seed = matches!(cli.command, Command::Simulate | Command::VerifyMixture | Command::LdpSlope);
    let streams = StreamFactory::new(if needs_seed { seed(cli)? } else { cli.seed.unwrap_or(0) });
    std::fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match cli.command {
        Command::Phi => cmd_phi(&config, &cli.out),
        Command::Simulate => cmd_simulate(&config, &cli.out, &streams),
        Command::VerifyMixture => cmd_verify(&config, &cli.out, &streams),
        Command::Attainable => cmd_attainable(&config, &cli.out),
        Command::Rate => cmd_rate(&config, &cli.out),
        Command::LdpSlope => cmd_ldp_slope(&config, &cli.out, &streams),
        Command::Schilder => cmd_schilder(&config, &cli.out),
    })
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

/// Writes a CSV file; `Display` of `f64` is the shortest exact round-trip form.
fn write_csv(dir: &Path, name: &str, header: &str, rows: &[String]) -> Result<(), CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut out = BufWriter::new(file);
    let mut body = String::with_capacity(rows.iter().map(|r| r.len() + 1).sum::<usize>() + header.len() + 1);
    body.push_str(header);
    body.push('\n');
    for r in rows {
        body.push_str(r);
        body.push('\n');
    }
    out.write_all(body.as_bytes()).and_then(|_| out.flush()).map_err(|e| io_err(&path, e))
}

fn cmd_phi(config: &Config, out: &Path) -> Result<Outcome, CliError> {
    let (modulation, t) = config.queue()?;
    let section = config.require("phi")?;
    let file = config.resolve(section.str("path")?);
    let text = std::fs::read_to_string(&file).map_err(|e| io_err(&file, e))?;
    let path = StepPath::read_csv(text.as_bytes(), modulation.space().clone()).map_err(|e| section.error("path", e))?;
    let grid = if section.has("grid") { section.floats("grid")? } else { vec![t] };
    let values = phi_profile(&path, &modulation, &grid)?;
    let rows: Vec<String> = grid.iter().zip(&values).map(|(s, v)| format!("{s},{v}")).collect();
    write_csv(out, "phi.csv", "t,phi", &rows)?;
    Ok(Outcome::Converged)
}

fn replicas_key(section: &Section, default: u64) -> Result<u64, CliError> {
    let r: u64 = section.parse_or("replicas", default)?;
    if r == 0 {
        return Err(section.error("replicas", "need at least one replica").into());
    }
    Ok(r)
}

fn cmd_simulate(config: &Config, out: &Path, streams: &StreamFactory) -> Result<Outcome, CliError> {
    let (modulation, t) = config.queue()?;
    let spec = config.background(&modulation)?;
    let section = config.optional("simulate");
    let mode = match section.raw("mode").map(|(v, _)| v).unwrap_or("direct") {
        "direct" => SimMode::Direct,
        "conditional" => SimMode::Conditional,
        other => return Err(section.error("mode", format!("unknown mode {other:?}")).into()),
    };
    let replicas = replicas_key(&section, 10_000)?;
    let results = simulate_replicas(&spec, &modulation, t, mode, replicas, streams)?;
    let rows: Vec<String> = results
        .iter()
        .enumerate()
        .map(|(i, r)| match r.phi_value {
            Some(g) => format!("{i},{},{g}", r.count),
            None => format!("{i},{},", r.count),
        })
        .collect();
    write_csv(out, "replicas.csv", "replica,count,phi_value", &rows)?;
    let counts: Vec<u64> = results.iter().map(|r| r.count).collect();
    let pmf = empirical_pmf(&counts)?;
    let rows: Vec<String> = pmf.iter().map(|(k, p)| format!("{k},{p}")).collect();
    write_csv(out, "pmf.csv", "count,frequency", &rows)?;
    Ok(Outcome::Converged)
}

fn cmd_verify(config: &Config, out: &Path, streams: &StreamFactory) -> Result<Outcome, CliError> {
    let (modulation, t) = config.queue()?;
    let spec = config.background(&modulation)?;
    let replicas = replicas_key(&config.optional("verify"), 100_000)?;
    let direct: Vec<u64> =
        simulate_replicas(&spec, &modulation, t, SimMode::Direct, replicas, streams)?.iter().map(|r| r.count).collect();
    let conditional: Vec<u64> = simulate_replicas(&spec, &modulation, t, SimMode::Conditional, replicas, streams)?
        .iter()
        .map(|r| r.count)
        .collect();
    let (pd, pc) = (empirical_pmf(&direct)?, empirical_pmf(&conditional)?);
    let tv = tv_distance(&pd, &pc);
    let chi = chi_square_homogeneity(&direct, &conditional)?;
    write_csv(
        out,
        "verify.csv",
        "replicas,tv_distance,chi_square,dof,p_value",
        &[format!("{replicas},{tv},{},{},{}", chi.statistic, chi.dof, chi.p_value)],
    )?;
    let mut keys: Vec<u64> = pd.iter().map(|(k, _)| k).chain(pc.iter().map(|(k, _)| k)).collect();
    keys.sort_unstable();
    keys.dedup();
    let rows: Vec<String> = keys.iter().map(|&k| format!("{k},{},{}", pd.get(k), pc.get(k))).collect();
    write_csv(out, "pmf.csv", "count,direct,conditional", &rows)?;
    Ok(Outcome::Converged)
}

struct DpSettings {
    m: usize,
    p: usize,
    tol: f64,
    refinements: usize,
}

fn dp_settings(section: &Section) -> Result<DpSettings, CliError> {
    let s = DpSettings {
        m: section.parse_or("m", 64)?,
        p: section.parse_or("p", 1025)?,
        tol: section.parse_or("tol", 1e-3)?,
        refinements: section.parse_or("refinements", 4)?,
    };
    if s.m < 2 || s.p < 2 {
        return Err(section.error("m", "need m, p >= 2").into());
    }
    Ok(s)
}

/// `R(t)` of the configured queue, with the rows describing how it was obtained.
fn attainable_interval(
    modulation: &Modulation,
    t: f64,
    section: &Section,
) -> Result<(AttainableInterval, Vec<String>, Vec<String>, Outcome), CliError> {
    let dp = dp_settings(section)?;
    let mut rows = Vec::new();
    let mut truncation = Vec::new();
    let mut outcome = Outcome::Converged;
    let interval = match modulation.space() {
        StateSpace::NonNegInt => {
            let k0: usize = section.parse_or("k0", 8)?;
            let doublings: usize = section.parse_or("doublings", 3)?;
            let report = truncated_upper_bounds(modulation, t, k0, doublings, dp.m, dp.p)?;
            for (k, a) in report.ks.iter().zip(&report.a_plus) {
                truncation.push(format!("{k},{a}"));
            }
            let (finite, _) = quantize(modulation, report.ks.last().copied().unwrap_or(k0) + 1)?;
            let r = attainable_bounds_dp(&finite, t, dp.m, dp.p, dp.tol, dp.refinements)?;
            push_dp_rows(&mut rows, &r);
            if !r.converged {
                outcome = Outcome::NotConverged;
            }
            let a_plus = if report.diverging { f64::INFINITY } else { r.interval.a_plus() };
            AttainableInterval::new(r.interval.a_minus(), a_plus)?
        }
        StateSpace::Real => return Err(LdpError::InfiniteStateSpace("the attainable interval").into()),
        _ => {
            let levels: usize = section.parse_or("levels", 21)?;
            let (finite, _) = quantize(modulation, levels)?;
            let r = attainable_bounds_dp(&finite, t, dp.m, dp.p, dp.tol, dp.refinements)?;
            push_dp_rows(&mut rows, &r);
            if !r.converged {
                outcome = Outcome::NotConverged;
            }
            if section.has("oracle_jumps") || section.has("oracle_grid") {
                let k: usize = section.parse_or("oracle_jumps", 3)?;
                let g: usize = section.parse_or("oracle_grid", 20)?;
                let o = attainable_bounds_oracle(&finite, t, k, g, DEFAULT_ORACLE_BUDGET)?;
                rows.push(format!("oracle,,,{k},{g},{},{},", o.a_minus(), o.a_plus()));
            }
            r.interval
        }
    };
    Ok((interval, rows, truncation, outcome))
}

fn push_dp_rows(rows: &mut Vec<String>, r: &crate::ldp::DpReport) {
    let n = r.levels.len();
    for (i, l) in r.levels.iter().enumerate() {
        let flag = if i + 1 == n { r.converged.to_string() } else { String::new() };
        rows.push(format!("dp,{},{},,,{},{},{flag}", l.m, l.p, l.min, l.max));
    }
    rows.push(format!("richardson,,,,,{},{},", r.richardson.0, r.richardson.1));
}

const ATTAINABLE_HEADER: &str = "method,time_steps,r_steps,max_jumps,jump_grid,a_minus,a_plus,converged";

fn cmd_attainable(config: &Config, out: &Path) -> Result<Outcome, CliError> {
    let (modulation, t) = config.queue()?;
    let section = config.optional("attainable");
    let (interval, mut rows, truncation, outcome) = attainable_interval(&modulation, t, &section)?;
    rows.push(format!("interval,,,,,{},{},", interval.a_minus(), interval.a_plus()));
    write_csv(out, "attainable.csv", ATTAINABLE_HEADER, &rows)?;
    if !truncation.is_empty() {
        write_csv(out, "truncation.csv", "k,a_plus", &truncation)?;
    }
    Ok(outcome)
}

fn auto_rho(config: &Config) -> Result<f64, CliError> {
    let (modulation, t) = config.queue()?;
    match config.background(&modulation)? {
        BackgroundSpec::TimeScaledCtmc { chain, .. } | BackgroundSpec::Ctmc(chain) => {
            Ok(rho_t(chain.generator(), &modulation, t)?)
        }
        _ => Err(CliError::Usage("rho = auto needs a (time-scaled) Markov chain background".into())),
    }
}

fn cmd_rate(config: &Config, out: &Path) -> Result<Outcome, CliError> {
    let section = config.require("rate")?;
    let points = section.floats("a")?;
    let resolution: usize = section.parse_or("resolution", 1000)?;
    let mut outcome = Outcome::Converged;
    let model = match section.str("regime")? {
        "unscaled" => {
            let bounds: Vec<f64> = section.list("interval")?;
            let [lo, hi] = bounds.as_slice() else {
                return Err(section.error("interval", "expected [a_minus, a_plus]").into());
            };
            RateFunctionModel::Unscaled(AttainableInterval::new(*lo, *hi).map_err(|e| section.error("interval", e))?)
        }
        "attainable" => {
            let (modulation, t) = config.queue()?;
            let (interval, _, _, o) = attainable_interval(&modulation, t, &config.optional("attainable"))?;
            outcome = o;
            RateFunctionModel::Unscaled(interval)
        }
        "degenerate" => {
            let rho = match section.str("rho")? {
                "auto" => auto_rho(config)?,
                _ => section.parse("rho")?,
            };
            RateFunctionModel::General(PsiSpec::Degenerate(rho))
        }
        "tabulated" => RateFunctionModel::General(
            PsiSpec::tabulated(section.floats("grid")?, section.floats("values")?).map_err(|e| section.error("values", e))?,
        ),
        "schilder" => {
            let (modulation, t) = config.queue()?;
            RateFunctionModel::General(PsiSpec::SchilderVariational {
                modulation,
                t,
                m: section.parse_or("m", 32)?,
                lo: section.parse("lo")?,
                hi: section.parse("hi")?,
                points: section.parse_or("points", 21)?,
            })
        }
        other => return Err(section.error("regime", format!("unknown regime {other:?}")).into()),
    };
    let values = model.tabulate(&points, resolution)?;
    let rows: Vec<String> = points.iter().zip(&values).map(|(a, v)| format!("{a},{v}")).collect();
    write_csv(out, "rate.csv", "a,I(a)", &rows)?;
    Ok(outcome)
}

fn parse_set(section: &Section) -> Result<RealSet, CliError> {
    let value = section.str("set")?;
    let words: Vec<&str> = value.split_whitespace().collect();
    let num = |s: &str| s.parse::<f64>().map_err(|e| section.error("set", format!("cannot parse {s:?}: {e}")));
    let set = match words.as_slice() {
        ["at-least", a] => RealSet::AtLeast(num(a)?),
        ["closed", a, b] => RealSet::Closed(num(a)?, num(b)?),
        _ => return Err(section.error("set", "expected `at-least <a>` or `closed <a> <b>`").into()),
    };
    set.validate().map_err(|e| section.error("set", e))?;
    Ok(set)
}

fn cmd_ldp_slope(config: &Config, out: &Path, streams: &StreamFactory) -> Result<Outcome, CliError> {
    let (modulation, t) = config.queue()?;
    let spec = config.background(&modulation)?;
    let section = config.require("ldp")?;
    let ns: Vec<u64> = section.list("n")?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(section.error("n", "need a non-empty list of positive n").into());
    }
    let set = parse_set(section)?;
    let replicas = replicas_key(section, 1000)?;
    let target = match section.raw("target").map(|(v, _)| v).unwrap_or("auto") {
        "none" => None,
        "auto" => match &spec {
            BackgroundSpec::TimeScaledCtmc { chain, .. } => {
                Some(set.inf_ell(rho_t(chain.generator(), &modulation, t)?)?)
            }
            BackgroundSpec::Deterministic(path) => Some(set.inf_ell(phi(path, &modulation, t)?)?),
            _ => None,
        },
        _ => Some(section.parse::<f64>("target")?),
    };
    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        let e = hybrid_ldp_estimate(&spec, &modulation, t, n, set, replicas, streams)?;
        let target = target.map_or(String::new(), |v| v.to_string());
        rows.push(format!("{n},{},{},{target}", e.log_p_hat, e.slope));
    }
    write_csv(out, "slope.csv", "n,p_hat_log,slope,target", &rows)?;
    Ok(Outcome::Converged)
}

fn cmd_schilder(config: &Config, out: &Path) -> Result<Outcome, CliError> {
    let (modulation, t) = config.queue()?;
    let section = config.require("schilder")?;
    let targets = section.floats("targets")?;
    let ms: Vec<usize> = if section.has("m") { section.list("m")? } else { vec![16, 32, 64] };
    if ms.is_empty() || ms.contains(&0) {
        return Err(section.error("m", "need a non-empty list of positive cell counts").into());
    }
    let opts = SchilderOptions::default();
    let mut outcome = Outcome::Converged;
    let mut rows = Vec::new();
    let mut path_rows = Vec::new();
    for &a in &targets {
        match schilder_refine(&modulation, t, a, &ms, &opts) {
            Ok(solutions) => {
                for s in &solutions {
                    rows.push(format!("{a},{},{},{}", s.m, s.value, s.residual));
                    let h = t / s.m as f64;
                    for (i, f) in s.path.iter().enumerate() {
                        path_rows.push(format!("{a},{},{},{f}", s.m, i as f64 * h));
                    }
                }
            }
            Err(LdpError::ConstraintViolation { residual, .. }) => {
                outcome = Outcome::NotConverged;
                rows.push(format!("{a},,inf,{residual}"));
            }
            Err(e) => return Err(e.into()),
        }
    }
    write_csv(out, "schilder.csv", "target,m,value,residual", &rows)?;
    write_csv(out, "schilder_paths.csv", "target,m,s,f", &path_rows)?;
    Ok(outcome)
}
