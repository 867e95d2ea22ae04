//! Black-box service-curve estimation from probe responses: rate scanning,
//! burst response with sample-path trimming, and two-phase minimal probing.
//!
//! Estimators only see a [`ProbeRunner`], a function from a probe and a
//! sample-path id to the departures, so the same code drives the simulator,
//! closed-form systems and recorded measurements.

use rayon::prelude::*;

use crate::arrivals::{cbr_path, check_epsilon};
use crate::bivariate::{BivariateFunction, CumulativePath, TimeGrid};
use crate::error::{Error, Result};
use crate::minplus::{burst_path, default_burst_cap, departures, deviation_from_additivity};
use crate::service::SleepServiceModel;
use crate::sim::{check_sample_size, sample_hops, tandem_departures};
use crate::stats::empirical_quantile;

pub trait ProbeRunner: Sync {
    fn grid(&self) -> TimeGrid;

    /// Departures of `probe` on sample path `path_id`. The same id always
    /// denotes the same realization of the system.
    fn respond(&self, probe: &CumulativePath, path_id: u64) -> Result<CumulativePath>;

    /// Largest service increment per slot, used to size the burst.
    fn peak_rate(&self) -> f64;

    fn seed(&self) -> Option<u64> {
        None
    }
}

/// Tandem of sleep-scheduling systems sampled by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSystem {
    pub grid: TimeGrid,
    pub hops: Vec<SleepServiceModel>,
    pub seed: u64,
}

impl SimulatedSystem {
    pub fn new(grid: TimeGrid, hops: Vec<SleepServiceModel>, seed: u64) -> Result<Self> {
        if hops.is_empty() {
            return Err(Error::param("hops", "a system needs at least one hop"));
        }
        Ok(Self { grid, hops, seed })
    }

    /// Service process of path `path_id` as bivariate function.
    pub fn service_of(&self, path_id: u64) -> BivariateFunction {
        crate::minplus::tandem_of_additive(&sample_hops(&self.hops, self.grid, self.seed, path_id))
            .expect("at least one hop")
    }
}

impl ProbeRunner for SimulatedSystem {
    fn grid(&self) -> TimeGrid {
        self.grid
    }

    fn respond(&self, probe: &CumulativePath, path_id: u64) -> Result<CumulativePath> {
        probe.grid().ensure_same(&self.grid)?;
        tandem_departures(probe, &sample_hops(&self.hops, self.grid, self.seed, path_id))
    }

    fn peak_rate(&self) -> f64 {
        self.hops.iter().map(|h| h.peak_rate()).fold(0.0, f64::max)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

/// A fixed service function, identical on every path.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicSystem {
    pub service: BivariateFunction,
}

impl ProbeRunner for DeterministicSystem {
    fn grid(&self) -> TimeGrid {
        self.service.grid()
    }

    fn respond(&self, probe: &CumulativePath, _path_id: u64) -> Result<CumulativePath> {
        departures(probe, &self.service)
    }

    fn peak_rate(&self) -> f64 {
        let n = self.service.grid().len();
        (0..n.saturating_sub(1))
            .map(|s| self.service.get(s, s + 1))
            .fold(0.0, f64::max)
    }
}

/// Departures measured for one probe, e.g. from traces; path `i` replays entry `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedResponses {
    pub probe: CumulativePath,
    pub departures: Vec<CumulativePath>,
}

impl ProbeRunner for RecordedResponses {
    fn grid(&self) -> TimeGrid {
        self.probe.grid()
    }

    fn respond(&self, probe: &CumulativePath, path_id: u64) -> Result<CumulativePath> {
        if probe != &self.probe {
            return Err(Error::Probe("recorded responses exist only for the recorded probe".into()));
        }
        self.departures
            .get(path_id as usize)
            .cloned()
            .ok_or_else(|| Error::Probe(format!("no recorded response for path {path_id}")))
    }

    fn peak_rate(&self) -> f64 {
        self.departures
            .iter()
            .flat_map(|d| d.values().windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMethod {
    RateScan,
    Burst,
    MinimalProbe,
}

impl EstimateMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::RateScan => "rate_scan",
            Self::Burst => "burst",
            Self::MinimalProbe => "minimal_probe",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::RateScan, Self::Burst, Self::MinimalProbe]
            .into_iter()
            .find(|m| m.name() == name)
    }
}

/// A service-curve estimate at a fixed `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateBundle {
    pub method: EstimateMethod,
    pub epsilon: f64,
    pub t: usize,
    /// Backlog quantile at the end of the minimal probe.
    pub accuracy: Option<f64>,
    /// `curve[tau]` for `tau = 0..=t`, clamped at 0.
    pub curve: Vec<f64>,
    /// Cumulative probe values per slot, empty when several probes were used.
    pub probe: Vec<f64>,
    pub n_paths: usize,
    pub seed: Option<u64>,
}

/// Path ids `first, first + 1, ...` of one measurement phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathRange {
    pub first: u64,
    pub count: usize,
}

impl PathRange {
    pub fn new(first: u64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::param("n_paths", "must be at least 1"));
        }
        Ok(Self { first, count })
    }

    fn ids(self) -> impl IndexedParallelIterator<Item = u64> {
        let first = self.first;
        (0..self.count).into_par_iter().map(move |i| first + i as u64)
    }
}

/// End-of-probe backlog `probe(t) - D(t)` on every path of `paths`.
fn end_backlogs(system: &impl ProbeRunner, probe: &CumulativePath, t: usize, paths: PathRange) -> Result<Vec<f64>> {
    paths
        .ids()
        .map(|id| {
            let d = system.respond(probe, id)?;
            let b = probe.at(t) - d.at(t);
            if b < -1e-9 {
                return Err(Error::Causality {
                    slot: t,
                    arrivals: probe.at(t),
                    departures: d.at(t),
                });
            }
            Ok(b.max(0.0))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSegment {
    /// Probing rate per unit of time.
    pub rate: f64,
    /// Empirical backlog quantile at `t` for this rate.
    pub backlog_quantile: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateScan {
    pub bundle: EstimateBundle,
    pub segments: Vec<RateSegment>,
}

/// Value of the rate-scan estimate from its segments: the upper envelope of
/// `rate * slot_width * (t - tau) - backlog_quantile`.
pub fn rate_scan_curve(segments: &[RateSegment], grid: TimeGrid, t: usize) -> Vec<f64> {
    (0..=t)
        .map(|tau| {
            segments
                .iter()
                .map(|s| s.rate * grid.slot_width() * (t - tau) as f64 - s.backlog_quantile)
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Constant-rate probes at every rate; each rate uses the violation budget
/// `xi`, so the estimate holds with probability `1 - |rates| xi`.
pub fn rate_scan(system: &impl ProbeRunner, rates: &[f64], xi: f64, t: usize, paths: PathRange) -> Result<RateScan> {
    if rates.is_empty() {
        return Err(Error::param("rates", "at least one probing rate is needed"));
    }
    check_epsilon(xi)?;
    let grid = system.grid();
    grid.check_slot(t)?;
    check_sample_size(paths.count, xi);
    let segments = rates
        .iter()
        .map(|&rate| {
            let probe = cbr_path(rate, grid)?;
            let mut backlogs = end_backlogs(system, &probe, t, paths)?;
            Ok(RateSegment {
                rate,
                backlog_quantile: empirical_quantile(&mut backlogs, xi)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bundle = EstimateBundle {
        method: EstimateMethod::RateScan,
        epsilon: (rates.len() as f64 * xi).min(1.0),
        t,
        accuracy: None,
        curve: rate_scan_curve(&segments, grid, t),
        probe: Vec::new(),
        n_paths: paths.count,
        seed: system.seed(),
    };
    Ok(RateScan { bundle, segments })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstEstimate {
    pub bundle: EstimateBundle,
    /// `responses[i][tau] = D_i(t) - D_i(tau)` for every measured path.
    pub responses: Vec<Vec<f64>>,
    /// Indices into `responses` that survived trimming.
    pub retained: Vec<usize>,
    pub cap: f64,
}

/// Removes, round by round, all paths that attain the pointwise minimum most
/// often, as long as the retained fraction stays at least `1 - epsilon`.
/// Returns the retained indices.
pub fn trim_sample_paths(responses: &[Vec<f64>], epsilon: f64) -> Result<Vec<usize>> {
    let n = responses.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let t = responses[0].len() - 1;
    let mut kept: Vec<usize> = (0..n).collect();
    while t > 0 {
        let minima: Vec<f64> = (0..t)
            .map(|tau| kept.iter().map(|&i| responses[i][tau]).fold(f64::INFINITY, f64::min))
            .collect();
        let counts: Vec<usize> = kept
            .iter()
            .map(|&i| (0..t).filter(|&tau| responses[i][tau] == minima[tau]).count())
            .collect();
        let most = counts.iter().copied().max().unwrap_or(0);
        let remaining = counts.iter().filter(|&&c| c != most).count();
        if (remaining as f64) < (1.0 - epsilon) * n as f64 - 1e-9 {
            break;
        }
        if remaining == 0 {
            return Err(Error::AllPathsRemoved { epsilon, paths: n });
        }
        kept = kept
            .iter()
            .zip(&counts)
            .filter(|(_, &c)| c != most)
            .map(|(&i, _)| i)
            .collect();
    }
    Ok(kept)
}

/// Burst responses of `paths`, trimmed at `epsilon`; the estimate is the
/// pointwise minimum over the retained paths.
pub fn burst_estimate(
    system: &impl ProbeRunner,
    epsilon: f64,
    t: usize,
    paths: PathRange,
    cap: Option<f64>,
) -> Result<BurstEstimate> {
    check_epsilon(epsilon)?;
    let grid = system.grid();
    grid.check_slot(t)?;
    if (paths.count as f64) * epsilon < 1.0 {
        log::warn!("n_paths * epsilon < 1: trimming cannot remove any sample path");
    }
    let cap = cap.unwrap_or_else(|| default_burst_cap(grid, system.peak_rate()));
    let probe = burst_path(grid, cap)?;
    let departures: Vec<CumulativePath> = paths.ids().map(|id| system.respond(&probe, id)).collect::<Result<_>>()?;
    if departures.iter().any(|d| d.at(t) >= cap) {
        return Err(Error::BurstCapTooSmall { cap });
    }
    // an adequate burst saturates the system: doubling it must not change the response
    let larger = system.respond(&burst_path(grid, 2.0 * cap)?, paths.first)?;
    if larger.values()[..=t] != departures[0].values()[..=t] {
        return Err(Error::BurstCapTooSmall { cap });
    }
    let responses: Vec<Vec<f64>> = departures
        .iter()
        .map(|d| (0..=t).map(|tau| d.at(t) - d.at(tau)).collect())
        .collect();
    let retained = trim_sample_paths(&responses, epsilon)?;
    let curve = (0..=t)
        .map(|tau| {
            retained
                .iter()
                .map(|&i| responses[i][tau])
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        })
        .collect();
    Ok(BurstEstimate {
        bundle: EstimateBundle {
            method: EstimateMethod::Burst,
            epsilon,
            t,
            accuracy: None,
            curve,
            probe: probe.values().to_vec(),
            n_paths: paths.count,
            seed: system.seed(),
        },
        responses,
        retained,
        cap,
    })
}

/// Probe `A(tau) = curve(0) - curve(tau)` up to `t`, flat afterwards, plus
/// `trigger` data units sent in slot 0. A curve that increases in `tau` is
/// repaired by a running maximum; the flag reports whether that happened.
pub fn build_minimal_probe(curve: &[f64], grid: TimeGrid, trigger: f64) -> Result<(CumulativePath, bool)> {
    let t = curve.len() - 1;
    grid.check_slot(t)?;
    if !(trigger >= 0.0 && trigger.is_finite()) {
        return Err(Error::param("trigger", format!("must be non-negative, got {trigger}")));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut repaired = false;
    let mut last = 0.0;
    for k in 0..grid.len() {
        let mut v = curve[0] - curve[k.min(t)];
        if k > 0 {
            v += trigger;
        }
        if v < last {
            repaired = true;
            v = last;
        }
        values.push(v);
        last = v;
    }
    if repaired {
        log::warn!("burst estimate increases in tau; minimal probe repaired by a running maximum");
    }
    Ok((CumulativePath::new(grid, values)?, repaired))
}

/// Second phase of minimal probing: send the probe derived from `burst` on
/// fresh `paths` and subtract the `(1 - epsilon)`-quantile of the backlog at `t`.
pub fn minimal_probe_estimate(
    system: &impl ProbeRunner,
    burst: &EstimateBundle,
    epsilon: f64,
    paths: PathRange,
    trigger: f64,
) -> Result<EstimateBundle> {
    check_epsilon(epsilon)?;
    let t = burst.t;
    let grid = system.grid();
    check_sample_size(paths.count, epsilon);
    let (probe, _) = build_minimal_probe(&burst.curve, grid, trigger)?;
    let mut backlogs = end_backlogs(system, &probe, t, paths)?;
    let accuracy = empirical_quantile(&mut backlogs, epsilon)?;
    let curve = (0..=t)
        .map(|tau| (probe.interval(tau, t) - accuracy).max(0.0))
        .collect();
    Ok(EstimateBundle {
        method: EstimateMethod::MinimalProbe,
        epsilon,
        t,
        accuracy: Some(accuracy),
        curve,
        probe: probe.values().to_vec(),
        n_paths: paths.count,
        seed: system.seed(),
    })
}

/// Fraction of `paths` whose burst response stays at or above `curve` for every `tau`.
pub fn validate_coverage(system: &impl ProbeRunner, curve: &[f64], paths: PathRange, cap: Option<f64>) -> Result<f64> {
    let grid = system.grid();
    let t = curve.len() - 1;
    let cap = cap.unwrap_or_else(|| default_burst_cap(grid, system.peak_rate()));
    let probe = burst_path(grid, cap)?;
    let hits = paths
        .ids()
        .map(|id| {
            let d = system.respond(&probe, id)?;
            Ok((0..=t).all(|tau| d.at(t) - d.at(tau) >= curve[tau] - 1e-9))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64)
}

/// Probe that recovers `S(tau, t)` exactly at `t`: `A(tau) = S(0,t) - S(tau,t)`.
pub fn exact_minimal_probe(s: &BivariateFunction, t: usize) -> Result<CumulativePath> {
    let curve: Vec<f64> = (0..=t).map(|tau| s.get(tau, t)).collect();
    let (probe, repaired) = build_minimal_probe(&curve, s.grid(), 0.0)?;
    if repaired {
        return Err(Error::Probe("S(tau, t) increases in tau; no cumulative minimal probe exists".into()));
    }
    Ok(probe)
}

/// `S(tau, t) >= D(t) - A(tau)` evaluated for every `tau`; returns the slots
/// where the lower bound is strict.
fn underestimated_slots(s: &BivariateFunction, probe: &CumulativePath, t: usize) -> Result<Vec<usize>> {
    let d = departures(probe, s)?;
    Ok((0..=t)
        .filter(|&tau| d.at(t) - probe.at(tau) < s.get(tau, t) - 1e-9)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedProbe {
    pub name: String,
    /// Slots `tau` with `D(t) - A(tau) < S(tau, t)`.
    pub underestimated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    /// The minimal probe recovers `S(tau, t)` for every `tau`.
    pub exact: bool,
    pub perturbed: Vec<PerturbedProbe>,
}

/// Compares the minimal probe with perturbed probes on a known service function.
pub fn verify_minimal_probe_optimality(s: &BivariateFunction, t: usize, step: f64) -> Result<OptimalityReport> {
    let probe = exact_minimal_probe(s, t)?;
    let exact = underestimated_slots(s, &probe, t)?.is_empty();
    let grid = s.grid();
    let base = probe.values();
    let mut candidates: Vec<(String, Vec<f64>)> = Vec::new();

    let k = (t / 2).max(1).min(grid.horizon());
    candidates.push((
        format!("step +{step} from slot {k}"),
        base.iter().enumerate().map(|(i, &v)| if i >= k { v + step } else { v }).collect(),
    ));
    if let Some(j) = (1..base.len()).find(|&j| base[j] > base[j - 1]) {
        let drop = base[j] - base[j - 1];
        candidates.push((
            format!("step -{drop} from slot {j}"),
            base.iter().enumerate().map(|(i, &v)| if i >= j { v - drop } else { v }).collect(),
        ));
    }
    let cap = default_burst_cap(grid, base.last().copied().unwrap_or(0.0));
    candidates.push(("burst".into(), burst_path(grid, cap)?.into_values()));

    let perturbed = candidates
        .into_iter()
        .map(|(name, values)| {
            let p = CumulativePath::new(grid, values)?;
            Ok(PerturbedProbe {
                name,
                underestimated: underestimated_slots(s, &p, t)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(OptimalityReport { exact, perturbed })
}

/// Backlog at the end of `probe` on the path with service `s`, together with
/// the deviation of `s(0, t)` from additivity.
pub fn probe_backlog_and_deviation(s: &BivariateFunction, probe: &CumulativePath, t: usize) -> Result<(f64, f64)> {
    let d = departures(probe, s)?;
    Ok((probe.at(t) - d.at(t), deviation_from_additivity(s, 0, t)))
}

/// Whether the end-of-probe backlog is bounded by the deviation from additivity.
pub fn accuracy_bound_check(s: &BivariateFunction, probe: &CumulativePath, t: usize) -> Result<bool> {
    let (b, dev) = probe_backlog_and_deviation(s, probe, t)?;
    Ok(b <= dev + 1e-9)
}
