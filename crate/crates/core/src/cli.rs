//! Command-line front end. Every subcommand reads the experiment
//! configuration, writes its artifacts and the effective `config.toml` into
//! the output directory, and exits with 0 on success, 1 on a configuration
//! or usage error and 2 on a runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::arrivals::optimized_envelope;
use crate::bounds::{backlog_bound_series, delay_bound_series, overshoot_and_relaxation, ServiceSpec};
use crate::config::{ExperimentConfig, ScenarioKind, ServiceKind};
use crate::error::Error;
use crate::estimate::{
    burst_estimate, minimal_probe_estimate, rate_scan, validate_coverage, DeterministicSystem, PathRange, ProbeRunner,
    SimulatedSystem,
};
use crate::figures::{write_figures, DEFAULT_RHO};
use crate::formats::{
    write_bivariate_csv, write_bound_csv, write_distribution_csv, write_envelope_csv, write_estimate_json, write_file,
    write_paths_csv, write_quantile_csv, write_table_csv, PathRecord, Table,
};
use crate::markov::{backlog_distribution_series, backlog_quantile_series, MarkovConfig};
use crate::service::{nonstationary_service_curve, ServiceCurveParams};
use crate::sim::{self, ArrivalSpec, Scenario};
use crate::trace::ingest_trace;

#[derive(Debug, Parser)]
#[command(name = "nscurve", version, about = "Transient bounds, simulation and service-curve estimation for sleeping links")]
struct Cli {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Only log errors and print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo backlog quantiles of the configured scenario.
    Simulate,
    /// Backlog (and optionally delay) bounds with their envelope.
    Bound,
    /// Exact backlog quantiles of a link with a fixed wake-up latency.
    Markov,
    /// Service-curve estimation by active probing of the configured system.
    Estimate {
        #[command(subcommand)]
        method: Method,
    },
    /// Backlog series from a pair of packet traces.
    TraceBacklog,
    /// CSV data of all standard figures.
    Figures,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Method {
    /// Constant-rate probes over `estimate.rates`, combined by their Legendre envelope
    RateScan,
    /// Single burst at slot 0
    Burst,
    /// Burst estimate replayed as a probe, with its accuracy
    MinimalProbe,
}

enum Failure {
    Config(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.quiet { "error" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();

    match execute(&cli) {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cli: &Cli) -> Outcome {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref()).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out = out.clone();
    }
    let out = Output {
        dir: cfg.run.out.clone(),
        quiet: cli.quiet,
    };
    check_command(&cli.command, &cfg)?;
    std::fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
    out.text("config.toml", &cfg.to_toml())?;
    match cli.command {
        Command::Simulate => simulate(&cfg, &out),
        Command::Bound => bound(&cfg, &out),
        Command::Markov => markov(&cfg, &out),
        Command::Estimate { method } => estimate(&cfg, method, &out),
        Command::TraceBacklog => trace_backlog(&cfg, &out),
        Command::Figures => {
            for p in write_figures(&cfg, &out.dir)? {
                out.announce(&p);
            }
            Ok(())
        }
    }
}

/// Rejects configurations a subcommand cannot run, before anything is written.
fn check_command(cmd: &Command, cfg: &ExperimentConfig) -> Outcome {
    let s = &cfg.service;
    let fail = |msg: &str| Err(Failure::Config(msg.to_string()));
    let model_only = !matches!(cmd, Command::TraceBacklog);
    if model_only && cfg.run.kind == ScenarioKind::Trace {
        return fail("this command needs run.kind = \"model\"; traces are analyzed with `trace-backlog`");
    }
    match cmd {
        Command::Simulate if s.kind == ServiceKind::LatencyRate => {
            fail("`simulate` needs a sleep service (service.kind = \"random_sleep\" or \"deterministic_sleep\")")
        }
        Command::Markov if s.kind != ServiceKind::DeterministicSleep || s.rate != 1.0 || s.hops != 1 => {
            fail("`markov` needs service.kind = \"deterministic_sleep\" with rate = 1 and hops = 1")
        }
        Command::Bound if s.hops != 1 => fail("`bound` needs service.hops = 1"),
        Command::TraceBacklog => match (&cfg.trace.arrivals, cfg.trace.departures.len()) {
            (Some(_), 1) => Ok(()),
            (None, _) => fail("`trace-backlog` needs trace.arrivals"),
            (Some(_), n) => fail(&format!("`trace-backlog` needs exactly one departure trace, got {n}")),
        },
        _ => Ok(()),
    }
}

struct Output {
    dir: PathBuf,
    quiet: bool,
}

impl Output {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn announce(&self, path: &Path) {
        if !self.quiet {
            println!("wrote {}", path.display());
        }
    }

    fn write(&self, name: &str, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> crate::Result<()>) -> Outcome {
        let path = self.path(name);
        write_file(&path, f)?;
        self.announce(&path);
        Ok(())
    }

    fn text(&self, name: &str, text: &str) -> Outcome {
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(())
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Outcome {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            Ok(())
        })
    }
}

fn simulate(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let hops = cfg.hop_models().expect("checked");
    let sc = Scenario::new(
        cfg.grid(),
        ArrivalSpec::CompoundPoisson(cfg.arrival_model()),
        hops,
        cfg.run.n_paths,
        cfg.run.seed,
    )?;
    let q = sim::backlog_quantile_series(&sc, cfg.run.epsilon)?;
    out.write("quantiles.csv", |w| write_quantile_csv(w, &q))?;
    if cfg.run.write_paths {
        let records: Vec<PathRecord> = sim::run_scenario(&sc)?.into_iter().map(PathRecord::from).collect();
        out.write("paths.csv", |w| write_paths_csv(w, &records))?;
    }
    Ok(())
}

fn markov(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let mc = MarkovConfig::new(cfg.arrival_model(), cfg.service.latency);
    let h = cfg.grid.horizon;
    let q = backlog_quantile_series(&mc, h, cfg.run.epsilon)?;
    out.write("quantiles.csv", |w| write_quantile_csv(w, &q))?;
    if cfg.run.write_distribution {
        let dists = backlog_distribution_series(&mc, h)?;
        out.write("distribution.csv", |w| write_distribution_csv(w, &dists))?;
    }
    Ok(())
}

fn bound(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let arrivals = cfg.arrival_model();
    let h = cfg.grid.horizon;
    let eps = cfg.bound.epsilon;
    let function = cfg.service_function();
    let spec = match (&function, cfg.sleep_model()) {
        (Some(f), _) => ServiceSpec::Deterministic(f),
        (None, Some(model)) => ServiceSpec::Statistical {
            model,
            epsilon: cfg.service.epsilon,
            rho: cfg.service.rho,
        },
        (None, None) => unreachable!("every service kind has a function or a model"),
    };
    let backlog = backlog_bound_series(&arrivals, eps, spec, h)?;
    out.write("backlog_bound.csv", |w| write_bound_csv(w, &backlog))?;
    let env = optimized_envelope(&arrivals, eps, h)?;
    out.write("envelope.csv", |w| write_envelope_csv(w, &env, h))?;
    match overshoot_and_relaxation(&backlog.values, cfg.bound.band) {
        Ok(r) => out.json("relaxation.json", &r)?,
        Err(e) => log::warn!("no relaxation summary: {e}"),
    }
    if cfg.bound.delay {
        let delay = match (&function, spec) {
            (Some(f), _) => delay_bound_series(&arrivals, eps, f, 0.0)?,
            (None, ServiceSpec::Statistical { model, epsilon, rho }) => {
                let params = ServiceCurveParams::new(epsilon, rho.unwrap_or(DEFAULT_RHO))?;
                let curve = nonstationary_service_curve(&model, cfg.grid(), &params);
                out.write("service_curve.csv", |w| write_bivariate_csv(w, &curve))?;
                delay_bound_series(&arrivals, eps, &curve, epsilon)?
            }
            (None, ServiceSpec::Deterministic(_)) => unreachable!(),
        };
        out.write("delay_bound.csv", |w| write_bound_csv(w, &delay))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Validation {
    first_path: u64,
    paths: usize,
    coverage: f64,
}

fn estimate(cfg: &ExperimentConfig, method: Method, out: &Output) -> Outcome {
    match cfg.hop_models() {
        Some(hops) => {
            let sys = SimulatedSystem::new(cfg.grid(), hops, cfg.run.seed)?;
            run_estimate(&sys, cfg, cfg.run.n_paths, method, out)
        }
        // a deterministic system answers every probe identically
        None => {
            let sys = DeterministicSystem {
                service: cfg.service_function().expect("latency-rate service"),
            };
            run_estimate(&sys, cfg, 1, method, out)
        }
    }
}

fn run_estimate(sys: &impl ProbeRunner, cfg: &ExperimentConfig, n: usize, method: Method, out: &Output) -> Outcome {
    let est = &cfg.estimate;
    let first = PathRange::new(0, n)?;
    let bundle = match method {
        Method::RateScan => {
            let scan = rate_scan(sys, &est.rates, est.xi, est.t, first)?;
            let mut segments = Table::new(&["rate", "backlog_quantile"]);
            for s in &scan.segments {
                segments.push(vec![s.rate, s.backlog_quantile]);
            }
            out.write("segments.csv", |w| write_table_csv(w, &segments))?;
            scan.bundle
        }
        Method::Burst => burst_estimate(sys, est.epsilon, est.t, first, est.burst_cap)?.bundle,
        Method::MinimalProbe => {
            let burst = burst_estimate(sys, est.epsilon, est.t, first, est.burst_cap)?;
            out.write("burst.json", |w| write_estimate_json(w, &burst.bundle))?;
            let minimal =
                minimal_probe_estimate(sys, &burst.bundle, est.epsilon, PathRange::new(n as u64, n)?, est.trigger)?;
            if !out.quiet {
                println!("accuracy {}", minimal.accuracy.expect("minimal probing reports its accuracy"));
            }
            minimal
        }
    };
    out.write("estimate.json", |w| write_estimate_json(w, &bundle))?;
    if est.validation_paths > 0 {
        let paths = PathRange::new(2 * n as u64, est.validation_paths)?;
        let coverage = validate_coverage(sys, &bundle.curve, paths, est.burst_cap)?;
        if !out.quiet {
            println!("coverage {coverage}");
        }
        out.json(
            "validation.json",
            &Validation {
                first_path: paths.first,
                paths: paths.count,
                coverage,
            },
        )?;
    }
    Ok(())
}

fn trace_backlog(cfg: &ExperimentConfig, out: &Output) -> Outcome {
    let arrivals = cfg.trace.arrivals.as_deref().expect("checked");
    let (a, d) = ingest_trace(arrivals, &cfg.trace.departures[0], cfg.grid())?;
    let record = PathRecord {
        path_id: 0,
        arrivals: a,
        departures: d,
    };
    out.write("backlog.csv", |w| write_paths_csv(w, [&record]))
}
