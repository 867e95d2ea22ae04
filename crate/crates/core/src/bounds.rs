//! Transient backlog and delay bounds from arrival envelopes and
//! (deterministic or statistical) service curves, plus the overshoot and
//! relaxation-time summary of a bound or quantile series.

use serde::{Deserialize, Serialize};

use crate::arrivals::{build_envelope, theta_search, ArrivalEnvelope, CompoundPoissonModel};
use crate::bivariate::{BivariateFunction, CumulativePath, TimeGrid};
use crate::error::{Error, Result};
use crate::optimize::minimize_log_grid;
use crate::service::{service_curve_column, ServiceCurveParams, SleepServiceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Backlog,
    Delay,
}

/// Bound per slot; delay entries beyond the horizon are `f64::INFINITY`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSeries {
    pub grid: TimeGrid,
    pub kind: BoundKind,
    pub values: Vec<f64>,
    /// Probability with which every single value holds.
    pub confidence: f64,
}

/// `sup_tau env(t - tau) - service[tau]` for `t = service.len() - 1`, clamped at 0.
pub fn backlog_bound_at(env: &(impl ArrivalEnvelope + ?Sized), service: &[f64]) -> f64 {
    let t = service.len() - 1;
    service
        .iter()
        .enumerate()
        .map(|(tau, s)| env.value(t - tau) - s)
        .fold(0.0, f64::max)
}

/// `sup_tau A(tau, t) - S(tau, t)`: exact backlog of the system `D = A ⊗ S`.
pub fn deterministic_backlog_bound(a: &CumulativePath, s: &BivariateFunction, t: usize) -> Result<f64> {
    a.grid().ensure_same(&s.grid())?;
    a.grid().check_slot(t)?;
    Ok((0..=t).map(|tau| a.interval(tau, t) - s.get(tau, t)).fold(0.0, f64::max))
}

/// Backlog bound from an envelope and a statistical service curve; holds
/// with probability `1 - eps_arrivals - eps_service`.
pub fn statistical_backlog_bound(env: &impl ArrivalEnvelope, curve: &BivariateFunction, t: usize) -> f64 {
    backlog_bound_at(env, &curve.column(t))
}

/// Backlog bound from an envelope and a deterministic service function; holds
/// with the envelope's probability `1 - epsilon`.
pub fn hybrid_backlog_bound(env: &impl ArrivalEnvelope, service: &BivariateFunction, t: usize) -> f64 {
    backlog_bound_at(env, &service.column(t))
}

/// Largest `sup_tau env(t - tau) - curve(tau, t + w)`; non-positive means a
/// packet arriving by `t` leaves by `t + w`.
fn delay_excess(env: &(impl ArrivalEnvelope + ?Sized), curve: &BivariateFunction, t: usize, w: usize) -> f64 {
    (0..=t)
        .map(|tau| env.value(t - tau) - curve.get(tau, t + w))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest `w` with `delay_excess <= 0`; `None` if none exists within the horizon.
pub fn statistical_delay_bound(env: &impl ArrivalEnvelope, curve: &BivariateFunction, t: usize) -> Option<usize> {
    (0..=curve.horizon().saturating_sub(t)).find(|&w| delay_excess(env, curve, t, w) <= 1e-9)
}

/// Service side of a bound computation.
#[derive(Debug, Clone, Copy)]
pub enum ServiceSpec<'a> {
    /// Deterministic service function, e.g. a latency-rate function.
    Deterministic(&'a BivariateFunction),
    /// Statistical curve of a sleep model at violation probability `epsilon`;
    /// `rho` is searched over a log grid when `None`.
    Statistical {
        model: SleepServiceModel,
        epsilon: f64,
        rho: Option<f64>,
    },
}

/// Candidate values of the union-bound parameter of the statistical curve.
pub fn rho_grid(epsilon: f64) -> Vec<f64> {
    (1..=6)
        .map(|e| 10f64.powi(-e))
        .rev()
        .filter(|&r| r <= 1.0 / epsilon)
        .collect()
}

/// Minimizes the backlog bound at `t` over the envelope parameter.
fn optimized_backlog(arrivals: &CompoundPoissonModel, epsilon: f64, service: &[f64]) -> f64 {
    let (_, best) = minimize_log_grid(&theta_search(arrivals), |theta| {
        build_envelope(arrivals, epsilon, theta)
            .map(|env| backlog_bound_at(&env, service))
            .unwrap_or(f64::INFINITY)
    });
    best
}

/// Backlog bound for `t = 0..=horizon`, with the free parameters optimized
/// separately for every `t`.
pub fn backlog_bound_series(
    arrivals: &CompoundPoissonModel,
    epsilon: f64,
    service: ServiceSpec<'_>,
    horizon: usize,
) -> Result<BoundSeries> {
    use rayon::prelude::*;
    crate::arrivals::check_epsilon(epsilon)?;
    let grid = match service {
        ServiceSpec::Deterministic(s) => {
            if s.horizon() < horizon {
                return Err(Error::InvalidGrid(format!(
                    "service covers {} slots, bound needs {horizon}",
                    s.horizon()
                )));
            }
            s.grid()
        }
        ServiceSpec::Statistical { .. } => TimeGrid::slots(horizon)?,
    };
    let (values, confidence) = match service {
        ServiceSpec::Deterministic(s) => {
            let values = (0..=horizon)
                .into_par_iter()
                .map(|t| optimized_backlog(arrivals, epsilon, &s.column(t)))
                .collect();
            (values, 1.0 - epsilon)
        }
        ServiceSpec::Statistical { model, epsilon: eps_s, rho } => {
            let rhos = match rho {
                Some(r) => vec![r],
                None => rho_grid(eps_s),
            };
            let params = rhos
                .iter()
                .map(|&r| ServiceCurveParams::new(eps_s, r))
                .collect::<Result<Vec<_>>>()?;
            let values = (0..=horizon)
                .into_par_iter()
                .map(|t| {
                    params
                        .iter()
                        .map(|p| optimized_backlog(arrivals, epsilon, &service_curve_column(&model, p, t)))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            (values, 1.0 - epsilon - eps_s)
        }
    };
    Ok(BoundSeries {
        grid,
        kind: BoundKind::Backlog,
        values,
        confidence,
    })
}

/// Delay bound for `t = 0..=horizon` against a fixed service curve or
/// function covering the horizon; the envelope parameter is optimized per `t`.
pub fn delay_bound_series(
    arrivals: &CompoundPoissonModel,
    epsilon: f64,
    curve: &BivariateFunction,
    curve_epsilon: f64,
) -> Result<BoundSeries> {
    use rayon::prelude::*;
    crate::arrivals::check_epsilon(epsilon)?;
    let horizon = curve.horizon();
    let search = theta_search(arrivals);
    let values = (0..=horizon)
        .into_par_iter()
        .map(|t| {
            (0..=horizon - t)
                .find(|&w| {
                    let (_, excess) = minimize_log_grid(&search, |theta| {
                        build_envelope(arrivals, epsilon, theta)
                            .map(|env| delay_excess(&env, curve, t, w))
                            .unwrap_or(f64::INFINITY)
                    });
                    excess <= 1e-9
                })
                .map_or(f64::INFINITY, |w| w as f64)
        })
        .collect();
    Ok(BoundSeries {
        grid: curve.grid(),
        kind: BoundKind::Delay,
        values,
        confidence: 1.0 - epsilon - curve_epsilon,
    })
}

/// Overshoot and relaxation of a transient series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    /// Mean of the final 10% of the series.
    pub steady: f64,
    pub peak_time: usize,
    /// `max - steady`
    pub overshoot: f64,
    /// First slot after the peak from which the series stays within the band.
    pub relaxation_time: usize,
}

/// Summarizes `series` relative to its steady level; fails if the last
/// quarter still varies by more than `band * steady`.
pub fn overshoot_and_relaxation(series: &[f64], band: f64) -> Result<Relaxation> {
    if series.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = series.len();
    let tail = &series[n - (n / 10).max(1)..];
    let steady = tail.iter().sum::<f64>() / tail.len() as f64;
    let width = band * steady.abs() + 1e-9;
    let quarter = &series[n - (n / 4).max(1)..];
    let (lo, hi) = quarter
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if hi - lo > 2.0 * width {
        return Err(Error::NotConverged(format!(
            "last quarter varies over [{lo}, {hi}], wider than the band around {steady}"
        )));
    }
    let (peak_time, peak) = series
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |m, (t, &x)| if x > m.1 { (t, x) } else { m });
    let mut relaxation_time = n - 1;
    for t in (peak_time..n).rev() {
        if (series[t] - steady).abs() > width {
            break;
        }
        relaxation_time = t;
    }
    Ok(Relaxation {
        steady,
        peak_time,
        overshoot: peak - steady,
        relaxation_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::{cbr_path, AffineEnvelope};
    use crate::minplus::{departures, transient_latency_rate};
    use crate::rng::path_rng;

    #[test]
    fn zero_arrivals_have_zero_bounds() {
        let g = TimeGrid::slots(50).unwrap();
        let s = transient_latency_rate(g, 1.0, 10).unwrap();
        assert_eq!(deterministic_backlog_bound(&CumulativePath::zeros(g), &s, 30).unwrap(), 0.0);
        let none = AffineEnvelope { rate: 0.0, burst: 0.0 };
        assert_eq!(statistical_backlog_bound(&none, &s, 30), 0.0);
        assert_eq!(statistical_delay_bound(&none, &s, 30), Some(0));
    }

    #[test]
    fn cbr_backlog_at_wakeup() {
        let g = TimeGrid::slots(300).unwrap();
        let s = transient_latency_rate(g, 1.0, 100).unwrap();
        let a = cbr_path(0.1, g).unwrap();
        assert!((deterministic_backlog_bound(&a, &s, 100).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn deterministic_bound_is_exact_for_the_linear_system() {
        let g = TimeGrid::slots(120).unwrap();
        let model = CompoundPoissonModel::new(0.2, 0.3).unwrap();
        let a = model.sample_path(g, &mut path_rng(9, 0));
        let s = transient_latency_rate(g, 1.0, 30).unwrap();
        let d = departures(&a, &s).unwrap();
        for t in 0..=120 {
            let bound = deterministic_backlog_bound(&a, &s, t).unwrap();
            assert_eq!(bound, a.at(t) - d.at(t), "t={t}");
        }
    }

    #[test]
    fn bounds_match_loop_oracle() {
        let g = TimeGrid::slots(60).unwrap();
        let s = transient_latency_rate(g, 1.0, 20).unwrap();
        let env = AffineEnvelope { rate: 0.4, burst: 3.0 };
        for t in [0usize, 10, 20, 40, 60] {
            let mut oracle: f64 = 0.0;
            for tau in 0..=t {
                oracle = oracle.max(0.4 * (t - tau) as f64 + 3.0 - (t.saturating_sub(tau.max(20))) as f64);
            }
            assert!((hybrid_backlog_bound(&env, &s, t) - oracle).abs() < 1e-12);
        }
        // at t = T the service is zero, so the bound is the envelope itself
        assert!((hybrid_backlog_bound(&env, &s, 20) - env.value(20)).abs() < 1e-12);
    }

    #[test]
    fn delay_of_latency_rate_service() {
        let g = TimeGrid::slots(200).unwrap();
        let s = transient_latency_rate(g, 1.0, 50).unwrap();
        let env = AffineEnvelope { rate: 0.5, burst: 0.0 };
        // direct scan: arrivals up to t leave once R (t + w - T) >= 0.5 t
        assert_eq!(statistical_delay_bound(&env, &s, 0), Some(0));
        for t in [10usize, 40] {
            let want = (0..).find(|&w: &usize| (t + w) as f64 - 50.0 >= 0.5 * t as f64).unwrap();
            assert_eq!(statistical_delay_bound(&env, &s, t), Some(want));
            assert!(want >= 50 - t);
        }
        let huge = AffineEnvelope { rate: 5.0, burst: 0.0 };
        assert_eq!(statistical_delay_bound(&huge, &s, 100), None);
    }

    #[test]
    fn hybrid_series_at_wakeup_equals_envelope() {
        let g = TimeGrid::slots(300).unwrap();
        let s = transient_latency_rate(g, 1.0, 100).unwrap();
        let m = CompoundPoissonModel::new(0.09, 0.3).unwrap();
        let series = backlog_bound_series(&m, 1e-9, ServiceSpec::Deterministic(&s), 300).unwrap();
        let env = crate::arrivals::optimized_envelope(&m, 1e-9, 100).unwrap();
        assert!((series.values[100] - env.value(100)).abs() < 1e-6 * env.value(100));
        assert!((series.confidence - (1.0 - 1e-9)).abs() < 1e-15);
        assert!(series.values[100] > series.values[300]);
    }

    #[test]
    fn relaxation_of_simple_series() {
        let r = overshoot_and_relaxation(&[2.0; 40], 0.05).unwrap();
        assert_eq!((r.overshoot, r.relaxation_time), (0.0, 0));
        // triangle pulse peaking at 10 and back to 1 by slot 20
        let series: Vec<f64> = (0..100)
            .map(|t| match t {
                0..=10 => 1.0 + t as f64,
                11..=20 => 11.0 - (t - 10) as f64,
                _ => 1.0,
            })
            .collect();
        let r = overshoot_and_relaxation(&series, 0.05).unwrap();
        assert_eq!(r.peak_time, 10);
        assert_eq!(r.overshoot, 10.0);
        assert_eq!(r.relaxation_time, 20);
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        assert!(matches!(overshoot_and_relaxation(&ramp, 0.05), Err(Error::NotConverged(_))));
    }

    #[test]
    fn rho_candidates_respect_epsilon() {
        assert_eq!(rho_grid(1e-6).len(), 6);
        assert_eq!(rho_grid(0.5), vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1]);
    }
}
