//! Monte-Carlo engine: sample arrival and service paths, push the arrivals
//! through a tandem of min-plus linear systems and aggregate the backlog.
//!
//! Path `i` draws its service realizations from stream `i` of the scenario
//! seed and its arrivals from stream `i` of a derived seed, so results do not
//! depend on execution order and the same service path can be re-probed with
//! different arrivals.

use rayon::prelude::*;

use crate::arrivals::CompoundPoissonModel;
use crate::bivariate::{backlog_of, BacklogSeries, BivariateFunction, CumulativePath, TimeGrid};
use crate::error::{Error, Result};
use crate::minplus::{departures_additive, tandem_column_of_additive, tandem_of_additive};
use crate::rng::{derive_seed, path_rng};
use crate::service::SleepServiceModel;
use crate::stats::{Histogram, QuantileSeries};

const ARRIVAL_STREAM: u64 = 0xA11;

#[derive(Debug, Clone, PartialEq)]
pub enum ArrivalSpec {
    CompoundPoisson(CompoundPoissonModel),
    /// The same deterministic probe on every path.
    Probe(CumulativePath),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub grid: TimeGrid,
    pub arrival: ArrivalSpec,
    /// Systems in tandem order.
    pub hops: Vec<SleepServiceModel>,
    pub n_paths: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(
        grid: TimeGrid,
        arrival: ArrivalSpec,
        hops: Vec<SleepServiceModel>,
        n_paths: usize,
        seed: u64,
    ) -> Result<Self> {
        if hops.is_empty() {
            return Err(Error::param("hops", "a scenario needs at least one system"));
        }
        if n_paths == 0 {
            return Err(Error::param("n_paths", "must be at least 1"));
        }
        if let ArrivalSpec::Probe(p) = &arrival {
            p.grid().ensure_same(&grid)?;
        }
        Ok(Self {
            grid,
            arrival,
            hops,
            n_paths,
            seed,
        })
    }
}

/// Service realizations of every hop on path `path_id`.
pub fn sample_hops(hops: &[SleepServiceModel], grid: TimeGrid, seed: u64, path_id: u64) -> Vec<CumulativePath> {
    let mut rng = path_rng(seed, path_id);
    hops.iter().map(|m| m.sample_cumulative(grid, &mut rng)).collect()
}

/// Departures after the last hop; each hop serves the departures of the previous one.
pub fn tandem_departures(a: &CumulativePath, services: &[CumulativePath]) -> Result<CumulativePath> {
    let mut d = a.clone();
    for c in services {
        d = departures_additive(&d, c)?;
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub path_id: u64,
    pub arrivals: CumulativePath,
    pub departures: CumulativePath,
    /// Cumulative service of each hop.
    pub services: Vec<CumulativePath>,
}

impl PathOutcome {
    pub fn backlog(&self) -> BacklogSeries {
        backlog_of(&self.arrivals, &self.departures).expect("departures never exceed arrivals")
    }

    /// End-to-end service process of this path.
    pub fn network_service(&self) -> BivariateFunction {
        tandem_of_additive(&self.services).expect("at least one hop")
    }
}

pub fn simulate_path(scenario: &Scenario, path_id: u64) -> Result<PathOutcome> {
    let services = sample_hops(&scenario.hops, scenario.grid, scenario.seed, path_id);
    let arrivals = match &scenario.arrival {
        ArrivalSpec::CompoundPoisson(m) => {
            let mut rng = path_rng(derive_seed(scenario.seed, ARRIVAL_STREAM), path_id);
            m.sample_path(scenario.grid, &mut rng)
        }
        ArrivalSpec::Probe(p) => p.clone(),
    };
    let departures = tandem_departures(&arrivals, &services)?;
    Ok(PathOutcome {
        path_id,
        arrivals,
        departures,
        services,
    })
}

/// All paths, in path order. Memory grows with `n_paths * horizon`; use
/// [`backlog_histograms`] for large runs.
pub fn run_scenario(scenario: &Scenario) -> Result<Vec<PathOutcome>> {
    (0..scenario.n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path(scenario, i))
        .collect()
}

/// Per-slot histograms of the backlog over all paths.
pub fn backlog_histograms(scenario: &Scenario) -> Result<Vec<Histogram>> {
    let len = scenario.grid.len();
    (0..scenario.n_paths as u64)
        .into_par_iter()
        .try_fold(
            || vec![Histogram::new(); len],
            |mut hists, i| {
                let out = simulate_path(scenario, i)?;
                for (h, &b) in hists.iter_mut().zip(out.backlog().values()) {
                    h.add(b);
                }
                Ok(hists)
            },
        )
        .try_reduce(
            || vec![Histogram::new(); len],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    x.merge(y);
                }
                Ok(a)
            },
        )
}

/// Warns when too few samples back a quantile at level `1 - xi`.
pub(crate) fn check_sample_size(n: usize, xi: f64) {
    if xi < 1.0 && (n as f64) < 10.0 / xi {
        log::warn!("{n} samples for a tail of {xi}: fewer than 10 / xi, the quantile is unreliable");
    }
}

/// Empirical `(1 - epsilon)`-quantile of the backlog for every slot.
pub fn backlog_quantile_series(scenario: &Scenario, epsilon: f64) -> Result<QuantileSeries> {
    crate::arrivals::check_epsilon(epsilon)?;
    check_sample_size(scenario.n_paths, epsilon);
    let hists = backlog_histograms(scenario)?;
    let values = hists.iter().map(|h| h.quantile(epsilon)).collect::<Result<_>>()?;
    Ok(QuantileSeries { epsilon, values })
}

/// `Delta(0, t) / S_net(0, t)` of the tandem of additive `services` (0 when both vanish).
pub fn relative_deviation(services: &[CumulativePath], t: usize) -> Result<f64> {
    let column = tandem_column_of_additive(services, t)?;
    let (first, rest) = services.split_first().expect("column checked for an empty tandem");
    // S_net(0, .) is the response of the tandem to an unlimited burst
    let row = tandem_departures(first, rest)?;
    let total = column[0];
    let split = (0..=t).map(|tau| row.at(tau) + column[tau]).fold(f64::INFINITY, f64::min);
    let dev = total - split;
    Ok(if total == 0.0 { 0.0 } else { dev / total })
}

/// Per path, `Delta(0, t) / S_net(0, t)` of the end-to-end service.
pub fn additivity_deviation_distribution(scenario: &Scenario, t: usize) -> Result<Vec<f64>> {
    scenario.grid.check_slot(t)?;
    (0..scenario.n_paths as u64)
        .into_par_iter()
        .map(|i| relative_deviation(&sample_hops(&scenario.hops, scenario.grid, scenario.seed, i), t))
        .collect()
}
