//! Data behind the standard plots of the library, as CSV tables.
//!
//! Model parameters come from the configuration. A few structural constants
//! are fixed per figure: the latency-rate comparison uses rate 1, a transient
//! latency of 20 and a stationary latency of 10 at `t = 100`; the stationary
//! latency added to random sleep is 50; tandems have 1 to 4 hops; the load
//! sweep covers `alpha = 0.03, 0.06, ..., 0.21` over five horizons.
//! Constants shrink with the horizon when it is small.

use std::path::{Path, PathBuf};

use crate::arrivals::CompoundPoissonModel;
use crate::bivariate::{BivariateFunction, CumulativePath, TimeGrid};
use crate::bounds::{backlog_bound_series, delay_bound_series, overshoot_and_relaxation, ServiceSpec};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::estimate::{
    burst_estimate, minimal_probe_estimate, rate_scan, DeterministicSystem, PathRange, ProbeRunner, SimulatedSystem,
};
use crate::formats::{write_bivariate_csv, write_file, write_table_csv, Table};
use crate::markov::{backlog_quantile_series as exact_quantiles, MarkovConfig};
use crate::minplus::{latency_rate, stationary_latency_rate, transient_latency_rate};
use crate::service::{
    analytical_reference_curve, analytical_upper_bound, nonstationary_service_curve, ServiceCurveParams,
    SleepServiceModel,
};
use crate::sim::{additivity_deviation_distribution, backlog_quantile_series, ArrivalSpec, Scenario};
use crate::stats::empirical_quantile;

pub enum FigureData {
    Table(Table),
    Bivariate(BivariateFunction),
}

pub struct Figure {
    pub name: String,
    pub data: FigureData,
}

impl Figure {
    fn table(name: &str, t: Table) -> Self {
        Self {
            name: name.to_string(),
            data: FigureData::Table(t),
        }
    }
}

/// Union-bound parameter of the statistical service curve when none is configured.
pub const DEFAULT_RHO: f64 = 1e-4;

/// Runs every figure and writes `<name>.csv` files into `out`.
pub fn write_figures(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for fig in all_figures(cfg)? {
        let path = out.join(format!("{}.csv", fig.name));
        match &fig.data {
            FigureData::Table(t) => write_file(&path, |w| write_table_csv(w, t))?,
            FigureData::Bivariate(f) => write_file(&path, |w| write_bivariate_csv(w, f))?,
        }
        written.push(path);
    }
    Ok(written)
}

pub fn all_figures(cfg: &ExperimentConfig) -> Result<Vec<Figure>> {
    let mut figs = Vec::new();
    log::info!("transient backlog");
    figs.push(Figure::table("backlog_transient", backlog_transient(cfg)?));
    log::info!("load and latency sweep");
    let (summary, series) = backlog_parameters(cfg)?;
    figs.push(Figure::table("backlog_parameters", summary));
    figs.push(Figure::table("backlog_parameters_series", series));
    log::info!("service curve");
    let curve = service_curve(cfg)?;
    log::info!("backlog and delay bounds");
    figs.push(Figure::table("backlog_delay", backlog_delay(cfg, &curve)?));
    figs.push(Figure {
        name: "service_curve".into(),
        data: FigureData::Bivariate(curve),
    });
    log::info!("estimates of random sleep");
    let (scan, segments, burst) = random_sleep_estimates(cfg)?;
    figs.push(Figure::table("rate_scan", scan));
    figs.push(Figure::table("rate_scan_segments", segments));
    figs.push(Figure::table("estimates_random_sleep", burst));
    log::info!("estimates of latency-rate functions");
    figs.push(Figure::table("estimates_latency_rate", latency_rate_estimates(cfg)?));
    log::info!("tandems");
    figs.push(Figure::table("tandem_additivity", tandem_additivity(cfg)?));
    log::info!("estimates with a stationary latency");
    figs.push(Figure::table("estimates_stationary_latency", stationary_latency_estimates(cfg)?));
    Ok(figs)
}

fn random_sleep(cfg: &ExperimentConfig) -> SleepServiceModel {
    SleepServiceModel::random_sleep(cfg.service.p, cfg.service.q).expect("validated")
}

fn rho(cfg: &ExperimentConfig) -> f64 {
    cfg.service.rho.unwrap_or(DEFAULT_RHO)
}

/// Exact and simulated backlog quantiles of a sleeping link with fixed wake-up,
/// against the bounds of the time-variant and the time-invariant service model.
pub fn backlog_transient(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = cfg.grid();
    let h = grid.horizon();
    let arrivals = cfg.arrival_model();
    let latency = cfg.service.latency;
    let exact = exact_quantiles(&MarkovConfig::new(arrivals, latency), h, cfg.run.epsilon)?;
    let sleep = SleepServiceModel::deterministic_sleep(1.0, latency)?;
    let sc = Scenario::new(
        grid,
        ArrivalSpec::CompoundPoisson(arrivals),
        vec![sleep],
        cfg.run.n_paths,
        cfg.run.seed,
    )?;
    let simulated = backlog_quantile_series(&sc, cfg.run.epsilon)?;
    let variant = transient_latency_rate(grid, 1.0, latency)?;
    let invariant = stationary_latency_rate(grid, 1.0, latency)?;
    let tv = backlog_bound_series(&arrivals, cfg.bound.epsilon, ServiceSpec::Deterministic(&variant), h)?;
    let ti = backlog_bound_series(&arrivals, cfg.bound.epsilon, ServiceSpec::Deterministic(&invariant), h)?;
    let mut t = Table::new(&["t", "exact_quantile", "simulated_quantile", "bound_time_variant", "bound_time_invariant"]);
    for k in 0..=h {
        t.push(vec![k as f64, exact.values[k], simulated.values[k], tv.values[k], ti.values[k]]);
    }
    Ok(t)
}

/// Overshoot and relaxation of the exact quantile for several loads and
/// wake-up latencies, plus the quantile series of the load sweep.
pub fn backlog_parameters(cfg: &ExperimentConfig) -> Result<(Table, Table)> {
    let long = 5 * cfg.grid.horizon;
    let beta = cfg.arrival.beta;
    let base_latency = cfg.service.latency;
    let alphas = [0.03, 0.06, 0.09, 0.12, 0.15, 0.18, 0.21];
    let mut latencies = vec![base_latency / 4, base_latency / 2, base_latency, 2 * base_latency];
    latencies.dedup();

    let mut summary = Table::new(&["alpha", "latency", "steady", "peak_time", "overshoot", "relaxation_time"]);
    let mut series_cols = vec!["t".to_string()];
    let mut series: Vec<Vec<f64>> = Vec::new();
    let mut run = |alpha: f64, latency: usize, keep: bool| -> Result<()> {
        let arrivals = CompoundPoissonModel::new(alpha, beta)?;
        let q = exact_quantiles(&MarkovConfig::new(arrivals, latency), long, cfg.run.epsilon)?;
        let row = match overshoot_and_relaxation(&q.values, cfg.bound.band) {
            Ok(r) => vec![r.steady, r.peak_time as f64, r.overshoot, r.relaxation_time as f64],
            Err(e) => {
                log::warn!("alpha = {alpha}, latency = {latency}: {e}");
                vec![f64::NAN; 4]
            }
        };
        summary.push([vec![alpha, latency as f64], row].concat());
        if keep {
            series_cols.push(format!("alpha_{alpha}"));
            series.push(q.values);
        }
        Ok(())
    };
    for &a in &alphas {
        run(a, base_latency, true)?;
    }
    for &l in latencies.iter().filter(|&&l| l != base_latency) {
        run(cfg.arrival.alpha, l, false)?;
    }
    let names: Vec<&str> = series_cols.iter().map(String::as_str).collect();
    let mut table = Table::new(&names);
    for k in 0..=long {
        let mut row = vec![k as f64];
        row.extend(series.iter().map(|s| s[k]));
        table.push(row);
    }
    Ok((summary, table))
}

/// Non-stationary service curve of random sleep on the whole grid.
pub fn service_curve(cfg: &ExperimentConfig) -> Result<BivariateFunction> {
    let params = ServiceCurveParams::new(cfg.service.epsilon, rho(cfg))?;
    Ok(nonstationary_service_curve(&random_sleep(cfg), cfg.grid(), &params))
}

/// Statistical backlog and delay bounds of random sleep, with the simulated backlog quantile.
pub fn backlog_delay(cfg: &ExperimentConfig, curve: &BivariateFunction) -> Result<Table> {
    let h = cfg.grid.horizon;
    let arrivals = cfg.arrival_model();
    let model = random_sleep(cfg);
    let backlog = backlog_bound_series(
        &arrivals,
        cfg.bound.epsilon,
        ServiceSpec::Statistical {
            model,
            epsilon: cfg.service.epsilon,
            rho: Some(rho(cfg)),
        },
        h,
    )?;
    let delay = delay_bound_series(&arrivals, cfg.bound.epsilon, curve, cfg.service.epsilon)?;
    let sc = Scenario::new(
        cfg.grid(),
        ArrivalSpec::CompoundPoisson(arrivals),
        vec![model],
        cfg.run.n_paths,
        cfg.run.seed,
    )?;
    let simulated = backlog_quantile_series(&sc, cfg.run.epsilon)?;
    let mut t = Table::new(&["t", "backlog_bound", "delay_bound", "simulated_backlog_quantile"]);
    for k in 0..=h {
        t.push(vec![k as f64, backlog.values[k], delay.values[k], simulated.values[k]]);
    }
    Ok(t)
}

/// Rate scanning at `t`, its segments, and burst and minimal probing at three
/// values of `t`, each with the analytical upper bound and reference curve.
pub fn random_sleep_estimates(cfg: &ExperimentConfig) -> Result<(Table, Table, Table)> {
    let grid = cfg.grid();
    let h = grid.horizon();
    let model = random_sleep(cfg);
    let sys = SimulatedSystem::new(grid, vec![model], cfg.run.seed)?;
    let n = cfg.run.n_paths;
    let est = &cfg.estimate;
    let t = est.t;

    let scan = rate_scan(&sys, &est.rates, est.xi, t, PathRange::new(0, n)?)?;
    let eps_scan = scan.bundle.epsilon;
    let burst = burst_estimate(&sys, eps_scan.min(0.5), t, PathRange::new(0, n)?, est.burst_cap)?;
    let upper = analytical_upper_bound(&model, eps_scan, t)?;
    let reference = analytical_reference_curve(&model, eps_scan, t)?;
    let mut scan_table = Table::new(&["tau", "rate_scan", "burst", "upper_bound", "reference_curve"]);
    for tau in 0..=t {
        scan_table.push(vec![tau as f64, scan.bundle.curve[tau], burst.bundle.curve[tau], upper[tau], reference[tau]]);
    }
    let mut segments = Table::new(&["rate", "backlog_quantile"]);
    for s in &scan.segments {
        segments.push(vec![s.rate, s.backlog_quantile]);
    }

    let mut ts = vec![t, (t + h) / 2, h];
    ts.dedup();
    let mut long = Table::new(&["t", "tau", "burst", "minimal_probe", "upper_bound", "reference_curve"]);
    for &tt in &ts {
        let (burst, minimal) = burst_and_minimal(&sys, cfg, tt)?;
        let upper = analytical_upper_bound(&model, est.epsilon, tt)?;
        let reference = analytical_reference_curve(&model, est.epsilon, tt)?;
        for tau in 0..=tt {
            long.push(vec![tt as f64, tau as f64, burst[tau], minimal[tau], upper[tau], reference[tau]]);
        }
    }
    Ok((scan_table, segments, long))
}

/// Burst and minimal probing of deterministic latency-rate functions with a
/// transient latency, a stationary latency, and both.
pub fn latency_rate_estimates(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = cfg.grid();
    let t = 100.min(grid.horizon());
    let transient = 20.min(t / 2);
    let stationary = 10.min(t / 4);
    let cases = [("transient", transient, 0), ("stationary", 0, stationary), ("both", transient, stationary)];
    let mut cols = vec!["tau".to_string()];
    let mut data: Vec<Vec<f64>> = Vec::new();
    for (name, tl, sl) in cases {
        let f = latency_rate(grid, 1.0, tl, sl)?;
        let sys = DeterministicSystem { service: f.clone() };
        let b = burst_estimate(&sys, cfg.estimate.epsilon, t, PathRange::new(0, 1)?, cfg.estimate.burst_cap)?;
        let mp = minimal_probe_estimate(&sys, &b.bundle, cfg.estimate.epsilon, PathRange::new(1, 1)?, 0.0)?;
        let accuracy = mp.accuracy.unwrap_or(f64::NAN);
        cols.extend([
            format!("exact_{name}"),
            format!("burst_{name}"),
            format!("minimal_{name}"),
            format!("accuracy_{name}"),
        ]);
        data.push(f.column(t));
        data.push(b.bundle.curve);
        data.push(mp.curve);
        data.push(vec![accuracy; t + 1]);
    }
    let names: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new(&names);
    for tau in 0..=t {
        let mut row = vec![tau as f64];
        row.extend(data.iter().map(|c| c[tau]));
        table.push(row);
    }
    Ok(table)
}

/// Deviation from additivity of tandems of random sleep at the horizon and
/// the accuracy certificate of minimal probing.
pub fn tandem_additivity(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = cfg.grid();
    let h = grid.horizon();
    let n = cfg.run.n_paths;
    let model = random_sleep(cfg);
    let mut table = Table::new(&[
        "hops",
        "fraction_positive",
        "mean_relative_deviation",
        "relative_deviation_q50",
        "relative_deviation_q90",
        "relative_deviation_q99",
        "burst_at_zero",
        "accuracy",
    ]);
    for hops in 1..=4usize {
        let chain = vec![model; hops];
        let sc = Scenario::new(grid, ArrivalSpec::Probe(CumulativePath::zeros(grid)), chain.clone(), n, cfg.run.seed)?;
        let mut devs = additivity_deviation_distribution(&sc, h)?;
        let positive = devs.iter().filter(|&&d| d > 0.0).count() as f64 / n as f64;
        let mean = devs.iter().sum::<f64>() / n as f64;
        let mut q = |xi| empirical_quantile(&mut devs, xi);
        let (q50, q90, q99) = (q(0.5)?, q(0.1)?, q(0.01)?);
        let sys = SimulatedSystem::new(grid, chain, cfg.run.seed)?;
        let b = burst_estimate(&sys, cfg.estimate.epsilon, h, PathRange::new(0, n)?, cfg.estimate.burst_cap)?;
        let mp = minimal_probe_estimate(&sys, &b.bundle, cfg.estimate.epsilon, PathRange::new(n as u64, n)?, 0.0)?;
        table.push(vec![
            hops as f64,
            positive,
            mean,
            q50,
            q90,
            q99,
            b.bundle.curve[0],
            mp.accuracy.unwrap_or(f64::NAN),
        ]);
    }
    Ok(table)
}

/// A system followed by a constant-rate server with a latency in every
/// backlogged period, `R [t - tau - latency]_+`.
pub struct WithStationaryLatency<S> {
    pub inner: S,
    pub rate: f64,
    pub latency: usize,
}

impl<S: ProbeRunner> ProbeRunner for WithStationaryLatency<S> {
    fn grid(&self) -> TimeGrid {
        self.inner.grid()
    }

    fn respond(&self, probe: &CumulativePath, path_id: u64) -> Result<CumulativePath> {
        let d = self.inner.respond(probe, path_id)?;
        // delay by the latency, then shape to the rate: D(t) = min(A(t - L), D(t - 1) + R)
        let mut out = vec![0.0; d.grid().len()];
        for t in 1..out.len() {
            let delayed = if t >= self.latency { d.at(t - self.latency) } else { 0.0 };
            out[t] = delayed.min(out[t - 1] + self.rate);
        }
        CumulativePath::new(d.grid(), out)
    }

    fn peak_rate(&self) -> f64 {
        self.inner.peak_rate().min(self.rate)
    }

    fn seed(&self) -> Option<u64> {
        self.inner.seed()
    }
}

/// Burst and minimal probing of random sleep, alone and followed by a stationary latency.
pub fn stationary_latency_estimates(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = cfg.grid();
    let est = &cfg.estimate;
    let t = est.t;
    let latency = 50.min(t / 4);
    let model = random_sleep(cfg);
    let plain = SimulatedSystem::new(grid, vec![model], cfg.run.seed)?;
    let delayed = WithStationaryLatency {
        inner: plain.clone(),
        rate: 1.0,
        latency,
    };
    let (burst_plain, minimal_plain) = burst_and_minimal(&plain, cfg, t)?;
    let (burst_delayed, minimal_delayed) = burst_and_minimal(&delayed, cfg, t)?;
    let upper = analytical_upper_bound(&model, est.epsilon, t)?;
    let reference = analytical_reference_curve(&model, est.epsilon, t)?;
    // S_net(tau, t) <= S_sleep(tau, t - latency), so the shifted bound still bounds the delayed system
    let shifted = analytical_upper_bound(&model, est.epsilon, t - latency)?;
    let mut table = Table::new(&[
        "tau",
        "burst",
        "minimal_probe",
        "upper_bound",
        "reference_curve",
        "burst_with_latency",
        "minimal_probe_with_latency",
        "upper_bound_with_latency",
    ]);
    for tau in 0..=t {
        let up_delayed = if tau + latency <= t { shifted[tau] } else { 0.0 };
        table.push(vec![
            tau as f64,
            burst_plain[tau],
            minimal_plain[tau],
            upper[tau],
            reference[tau],
            burst_delayed[tau],
            minimal_delayed[tau],
            up_delayed,
        ]);
    }
    Ok(table)
}

/// Burst estimate on paths `0..n` and minimal probing on paths `n..2n`.
fn burst_and_minimal<S: ProbeRunner>(sys: &S, cfg: &ExperimentConfig, t: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let est = &cfg.estimate;
    let n = cfg.run.n_paths;
    let b = burst_estimate(sys, est.epsilon, t, PathRange::new(0, n)?, est.burst_cap)?;
    let mp = minimal_probe_estimate(sys, &b.bundle, est.epsilon, PathRange::new(n as u64, n)?, est.trigger)?;
    Ok((b.bundle.curve, mp.curve))
}
