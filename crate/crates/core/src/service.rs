//! Regenerative sleep-scheduling service: the link sleeps until a wake-up slot
//! `T` and then serves `Z(t)` data units per slot. Sample paths, MGFs of the
//! service process, the statistical service curve built from them, and exact
//! quantile references.

use rand_distr::{Bernoulli, Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrivals::check_epsilon;
use crate::bivariate::{BivariateFunction, CumulativePath, TimeGrid};
use crate::error::{Error, Result};
use crate::optimize::{minimize_log_grid, LogGridSearch};
use crate::rng::{path_rng, PathRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wakeup {
    /// Fixed wake-up slot.
    Deterministic(usize),
    /// `P[T = v] = p (1 - p)^v` for `v = 0, 1, ...`.
    Geometric(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Increment {
    /// `R` data units per slot once awake.
    ConstantRate(f64),
    /// One data unit per slot with probability `q` once awake.
    Bernoulli(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepServiceModel {
    pub wakeup: Wakeup,
    pub increment: Increment,
}

impl SleepServiceModel {
    pub fn new(wakeup: Wakeup, increment: Increment) -> Result<Self> {
        if let Wakeup::Geometric(p) = wakeup {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::param("p", format!("must lie in (0, 1], got {p}")));
            }
        }
        match increment {
            Increment::ConstantRate(r) if !(r >= 0.0 && r.is_finite()) => {
                return Err(Error::param("rate", format!("must be non-negative, got {r}")));
            }
            Increment::Bernoulli(q) if !(0.0..=1.0).contains(&q) => {
                return Err(Error::param("q", format!("must lie in [0, 1], got {q}")));
            }
            _ => {}
        }
        Ok(Self { wakeup, increment })
    }

    /// Geometric wake-up with parameter `p`, Bernoulli(`q`) service increments.
    pub fn random_sleep(p: f64, q: f64) -> Result<Self> {
        Self::new(Wakeup::Geometric(p), Increment::Bernoulli(q))
    }

    /// Fixed wake-up slot, constant rate afterwards.
    pub fn deterministic_sleep(rate: f64, latency: usize) -> Result<Self> {
        Self::new(Wakeup::Deterministic(latency), Increment::ConstantRate(rate))
    }

    /// Largest per-slot increment.
    pub fn peak_rate(&self) -> f64 {
        match self.increment {
            Increment::ConstantRate(r) => r,
            Increment::Bernoulli(_) => 1.0,
        }
    }

    pub fn mean_rate(&self) -> f64 {
        match self.increment {
            Increment::ConstantRate(r) => r,
            Increment::Bernoulli(q) => q,
        }
    }

    pub fn sample_wakeup(&self, rng: &mut PathRng) -> usize {
        match self.wakeup {
            Wakeup::Deterministic(t) => t,
            Wakeup::Geometric(p) => {
                let g = Geometric::new(p).expect("p validated");
                usize::try_from(g.sample(rng)).unwrap_or(usize::MAX)
            }
        }
    }

    /// Cumulative service `c(k) = S(0, k)` of one realization.
    pub fn sample_cumulative(&self, grid: TimeGrid, rng: &mut PathRng) -> CumulativePath {
        let wake = self.sample_wakeup(rng);
        let mut values = Vec::with_capacity(grid.len());
        values.push(0.0);
        let mut acc = 0.0;
        match self.increment {
            Increment::ConstantRate(r) => {
                for k in 1..=grid.horizon() {
                    if k > wake {
                        acc += r;
                    }
                    values.push(acc);
                }
            }
            Increment::Bernoulli(q) => {
                let z = Bernoulli::new(q).expect("q validated");
                for k in 1..=grid.horizon() {
                    if k > wake && z.sample(rng) {
                        acc += 1.0;
                    }
                    values.push(acc);
                }
            }
        }
        CumulativePath::new(grid, values).expect("nondecreasing by construction")
    }

    /// `ln E[exp(theta * Z)]` for one slot of an awake link.
    pub fn ln_mgf_increment(&self, theta: f64) -> f64 {
        match self.increment {
            Increment::ConstantRate(r) => theta * r,
            Increment::Bernoulli(q) => (q * theta.exp_m1()).ln_1p(),
        }
    }

    /// `ln E[exp(theta * U(tau, t))]`, `U` the number of awake slots in `(tau, t]`.
    pub fn ln_mgf_usable_slots(&self, theta: f64, tau: usize, t: usize) -> f64 {
        assert!(tau <= t, "tau {tau} > t {t}");
        match self.wakeup {
            Wakeup::Deterministic(w) => theta * t.saturating_sub(tau.max(w)) as f64,
            Wakeup::Geometric(p) => ln_mgf_usable_geometric(p, theta, tau, t),
        }
    }

    /// `ln E[exp(theta * S(tau, t))] = ln M_U(ln M_Z(theta), tau, t)`.
    pub fn ln_mgf_service(&self, theta: f64, tau: usize, t: usize) -> f64 {
        self.ln_mgf_usable_slots(self.ln_mgf_increment(theta), tau, t)
    }

    /// Distribution of the number of awake slots `U(tau, t)` indexed by count.
    pub fn usable_slots_distribution(&self, tau: usize, t: usize) -> Vec<f64> {
        let mut pmf = vec![0.0; t - tau + 1];
        match self.wakeup {
            Wakeup::Deterministic(w) => pmf[t.saturating_sub(tau.max(w))] = 1.0,
            Wakeup::Geometric(p) => {
                pmf[t - tau] = wakeup_cdf(p, tau);
                for v in tau + 1..t {
                    pmf[t - v] += wakeup_pmf(p, v);
                }
                // wake-up at t or later
                pmf[0] += wakeup_survival(p, if t > tau { t - 1 } else { t });
            }
        }
        pmf
    }
}

pub fn sample_service_cumulative(model: &SleepServiceModel, grid: TimeGrid, seed: u64) -> CumulativePath {
    model.sample_cumulative(grid, &mut path_rng(seed, 0))
}

/// One realization of `S(tau, t)`; additive by construction.
pub fn sample_service_path(model: &SleepServiceModel, grid: TimeGrid, seed: u64) -> BivariateFunction {
    BivariateFunction::from_cumulative(&sample_service_cumulative(model, grid, seed))
}

pub fn mgf_usable_slots(model: &SleepServiceModel, theta: f64, tau: usize, t: usize) -> f64 {
    model.ln_mgf_usable_slots(theta, tau, t).exp()
}

pub fn mgf_service(model: &SleepServiceModel, theta: f64, tau: usize, t: usize) -> f64 {
    model.ln_mgf_service(theta, tau, t).exp()
}

fn wakeup_pmf(p: f64, v: usize) -> f64 {
    if p == 1.0 {
        return if v == 0 { 1.0 } else { 0.0 };
    }
    p * ((v as f64) * (-p).ln_1p()).exp()
}

/// `P[T <= tau]`
fn wakeup_cdf(p: f64, tau: usize) -> f64 {
    if p == 1.0 {
        return 1.0;
    }
    -((tau as f64 + 1.0) * (-p).ln_1p()).exp_m1()
}

/// `P[T > t]`
fn wakeup_survival(p: f64, t: usize) -> f64 {
    if p == 1.0 {
        return 0.0;
    }
    ((t as f64 + 1.0) * (-p).ln_1p()).exp()
}

/// `ln sum_{k=0}^{n-1} y^k` given `ln y` (may be `-inf`).
fn ln_geometric_sum(ln_y: f64, n: usize) -> f64 {
    if n == 0 {
        return f64::NEG_INFINITY;
    }
    if ln_y == f64::NEG_INFINITY {
        return 0.0;
    }
    let nf = n as f64;
    if ln_y.abs() < 1e-12 {
        return nf.ln() + 0.5 * (nf - 1.0) * ln_y;
    }
    if ln_y < 0.0 {
        (-(nf * ln_y).exp_m1()).ln() - (-ln_y.exp_m1()).ln()
    } else {
        nf * ln_y + (-(-nf * ln_y).exp_m1()).ln() - ln_y.exp_m1().ln()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn ln_mgf_usable_geometric(p: f64, theta: f64, tau: usize, t: usize) -> f64 {
    let span = (t - tau) as f64;
    let ln_keep = (-p).ln_1p();
    let ln_awake_at_tau = if p == 1.0 { 0.0 } else { wakeup_cdf(p, tau).ln() };
    let first = theta * span + ln_awake_at_tau;
    if p == 1.0 {
        return first;
    }
    // wake-up inside (tau, t): p e^{theta (t - tau - 1)} (1-p)^{tau+1} sum_{k<t-tau} y^k
    let ln_y = ln_keep - theta;
    let middle = p.ln() + theta * (span - 1.0) + (tau as f64 + 1.0) * ln_keep + ln_geometric_sum(ln_y, t - tau);
    let last = (t as f64 + 1.0) * ln_keep;
    log_sum_exp(&[first, middle, last])
}

/// Free parameters of the statistical service curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceCurveParams {
    pub epsilon: f64,
    pub rho: f64,
    pub theta_search: LogGridSearch,
}

impl ServiceCurveParams {
    pub fn new(epsilon: f64, rho: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(rho > 0.0 && rho <= 1.0 / epsilon) {
            return Err(Error::param("rho", format!("must lie in (0, 1/epsilon], got {rho}")));
        }
        Ok(Self {
            epsilon,
            rho,
            theta_search: LogGridSearch::new(1e-4, 1e2, 64),
        })
    }
}

/// Unclamped curve value at one `theta`.
fn curve_objective(model: &SleepServiceModel, params: &ServiceCurveParams, theta: f64, tau: usize, t: usize) -> f64 {
    let ln_laplace = model.ln_mgf_service(-theta, tau, t);
    -(ln_laplace + params.rho * (t - tau) as f64 - (params.rho * params.epsilon).ln()) / theta
}

/// Curve value at `(tau, t)` with `theta` optimized for this cell, before clamping.
pub fn service_curve_cell(model: &SleepServiceModel, params: &ServiceCurveParams, tau: usize, t: usize) -> f64 {
    let (_, neg) = minimize_log_grid(&params.theta_search, |theta| {
        -curve_objective(model, params, theta, tau, t)
    });
    -neg
}

/// `tau -> curve(tau, t)` for `tau = 0..=t`, clamped at zero and made
/// nonincreasing in `tau`.
///
/// Sampled service `S(tau, t)` never increases in `tau`, so on the event that
/// it dominates every cell it also dominates `max_{tau' >= tau} curve(tau', t)`.
pub fn service_curve_column(model: &SleepServiceModel, params: &ServiceCurveParams, t: usize) -> Vec<f64> {
    let mut col: Vec<f64> = (0..=t)
        .map(|tau| service_curve_cell(model, params, tau, t).max(0.0))
        .collect();
    for tau in (0..t).rev() {
        col[tau] = col[tau].max(col[tau + 1]);
    }
    col
}

/// Statistical lower service envelope holding with probability `1 - epsilon`
/// for all `tau` at each `t`, clamped at zero.
pub fn nonstationary_service_curve(
    model: &SleepServiceModel,
    grid: TimeGrid,
    params: &ServiceCurveParams,
) -> BivariateFunction {
    let columns: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|t| service_curve_column(model, params, t))
        .collect();
    BivariateFunction::from_fn(grid, |tau, t| if tau == t { 0.0 } else { columns[t][tau] })
        .expect("diagonal is zero")
}

/// Exact lower-tail quantiles of `S(tau, t)` for every `tau` at fixed `t`:
/// entry `tau` is the largest `x` with `P[S(tau, t) < x] <= level(tau)`.
fn service_quantiles(model: &SleepServiceModel, t: usize, level: impl Fn(usize) -> f64) -> Vec<f64> {
    let (q, scale) = match model.increment {
        Increment::ConstantRate(r) => (1.0, r),
        Increment::Bernoulli(q) => (q, 1.0),
    };
    // binomial cdf rows F_n(k), n = 0..=t, via Pascal's recurrence on the pmf
    let mut cdf = Vec::with_capacity(t + 1);
    let mut pmf = vec![1.0];
    for n in 0..=t {
        let mut row = Vec::with_capacity(n + 1);
        let mut acc = 0.0f64;
        for &x in &pmf {
            acc += x;
            row.push(acc.min(1.0));
        }
        cdf.push(row);
        let mut next = vec![0.0; n + 2];
        for (k, &x) in pmf.iter().enumerate() {
            next[k] += (1.0 - q) * x;
            next[k + 1] += q * x;
        }
        pmf = next;
    }
    let binom_cdf = |n: usize, k: usize| if k >= n { 1.0 } else { cdf[n][k] };

    // mass of wake-ups strictly inside (tau, t) or later, accumulated as tau decreases
    let mut tail = vec![0.0; t + 1];
    let mut out = vec![0.0; t + 1];
    let (p_at, p_after): (Box<dyn Fn(usize) -> f64>, f64) = match model.wakeup {
        Wakeup::Deterministic(w) => (Box::new(move |v| if v == w { 1.0 } else { 0.0 }), if w >= t { 1.0 } else { 0.0 }),
        Wakeup::Geometric(p) => (Box::new(move |v| wakeup_pmf(p, v)), wakeup_survival(p, t.saturating_sub(1))),
    };
    // wake-up at or after t leaves no awake slot
    for x in tail.iter_mut() {
        *x = p_after;
    }
    for tau in (0..=t).rev() {
        if tau < t {
            // wake-up at v = tau + 1 joins the inner mixture
            let v = tau + 1;
            if v < t {
                let w = p_at(v);
                for (k, x) in tail.iter_mut().enumerate() {
                    *x += w * binom_cdf(t - v, k);
                }
            }
        }
        let awake = match model.wakeup {
            Wakeup::Deterministic(w) => if w <= tau { 1.0 } else { 0.0 },
            Wakeup::Geometric(p) => wakeup_cdf(p, tau),
        };
        let n = t - tau;
        let budget = level(tau);
        // largest k with P[S <= k - 1] <= budget
        let mut best = 0;
        for k in 1..=n {
            let below = awake * binom_cdf(n, k - 1) + tail[k - 1];
            if below <= budget {
                best = k;
            } else {
                break;
            }
        }
        out[tau] = best as f64 * scale;
    }
    out
}

/// `tau -> ` largest value exceeded by `S(tau, t)` with probability at least
/// `1 - epsilon`. Any valid service envelope lies below it. `epsilon = 1`
/// yields zero.
pub fn analytical_upper_bound(model: &SleepServiceModel, epsilon: f64, t: usize) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if epsilon >= 1.0 {
        return Ok(vec![0.0; t + 1]);
    }
    Ok(service_quantiles(model, t, |_| epsilon))
}

/// Binomial quantile reference curve using violation budget `epsilon / t` per
/// `tau`, so that it holds for all `tau` jointly with probability `1 - epsilon`.
pub fn analytical_reference_curve(model: &SleepServiceModel, epsilon: f64, t: usize) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if epsilon >= 1.0 || t == 0 {
        return Ok(vec![0.0; t + 1]);
    }
    Ok(service_quantiles(model, t, |_| epsilon / t as f64))
}

/// Fraction of `paths` (cumulative service) with `S(tau, t) >= curve(tau)` for every `tau`.
pub fn envelope_coverage(paths: &[CumulativePath], curve: &[f64], t: usize) -> f64 {
    if paths.is_empty() {
        return f64::NAN;
    }
    let ok = paths
        .iter()
        .filter(|c| (0..=t).all(|tau| c.interval(tau, t) >= curve[tau] - 1e-9))
        .count();
    ok as f64 / paths.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minplus::{deviation_from_additivity, is_additive};

    fn sleep() -> SleepServiceModel {
        SleepServiceModel::random_sleep(0.1, 0.5).unwrap()
    }

    /// E[e^{theta U}] by summing over the wake-up slot until the tail is negligible.
    fn exhaustive_usable_mgf(p: f64, theta: f64, tau: usize, t: usize) -> f64 {
        let mut total = 0.0;
        let mut mass = 0.0;
        let mut v = 0usize;
        while 1.0 - mass > 1e-13 {
            let pv = p * (1.0 - p).powi(v as i32);
            let usable = t.saturating_sub(tau.max(v));
            total += pv * (theta * usable as f64).exp();
            mass += pv;
            v += 1;
        }
        total
    }

    #[test]
    fn validation() {
        assert!(SleepServiceModel::random_sleep(0.0, 0.5).is_err());
        assert!(SleepServiceModel::random_sleep(0.1, 1.5).is_err());
        assert!(SleepServiceModel::deterministic_sleep(-1.0, 3).is_err());
        assert!(ServiceCurveParams::new(1e-2, 101.0).is_err());
        assert!(ServiceCurveParams::new(1e-2, 100.0).is_ok());
        assert!(ServiceCurveParams::new(1e-2, 0.0).is_err());
    }

    #[test]
    fn usable_slot_mgf_matches_exhaustive_sum() {
        for &(p, theta, tau, t) in &[(0.1, -0.2, 5, 20), (0.1, 0.05, 0, 50), (0.3, -1.0, 10, 12), (0.1, 0.0, 3, 9)] {
            let m = SleepServiceModel::random_sleep(p, 0.5).unwrap();
            let got = mgf_usable_slots(&m, theta, tau, t);
            let want = exhaustive_usable_mgf(p, theta, tau, t);
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{got} vs {want}");
        }
    }

    #[test]
    fn mgf_trivial_cases() {
        let m = sleep();
        for (tau, t) in [(0, 0), (0, 10), (7, 400)] {
            assert!((mgf_usable_slots(&m, 0.0, tau, t) - 1.0).abs() < 1e-12);
            assert!((mgf_service(&m, 0.0, tau, t) - 1.0).abs() < 1e-12);
        }
        let zero = SleepServiceModel::random_sleep(0.1, 0.0).unwrap();
        assert!((mgf_service(&zero, -0.7, 3, 40) - 1.0).abs() < 1e-12);
        let awake = SleepServiceModel::random_sleep(1.0, 1.0).unwrap();
        assert!((mgf_usable_slots(&awake, -0.3, 4, 14) - (-3.0f64).exp()).abs() < 1e-12);
        let det = SleepServiceModel::deterministic_sleep(2.0, 10).unwrap();
        assert!((det.ln_mgf_service(0.5, 3, 20) - 0.5 * 2.0 * 10.0).abs() < 1e-12);
    }

    #[test]
    fn ln_geometric_sum_regimes() {
        for &(y, n) in &[(0.5f64, 10usize), (1.0, 7), (1.5, 30), (0.9999999999999, 4), (3.0, 1)] {
            let direct: f64 = (0..n).map(|k| y.powi(k as i32)).sum();
            let got = ln_geometric_sum(y.ln(), n).exp();
            assert!((got - direct).abs() <= 1e-9 * direct, "{y} {n}: {got} vs {direct}");
        }
        // large exponent stays finite in the log domain
        assert!(ln_geometric_sum(2.0, 2000).is_finite());
    }

    #[test]
    fn sample_paths() {
        let g = TimeGrid::slots(60).unwrap();
        let zero = SleepServiceModel::random_sleep(0.1, 0.0).unwrap();
        assert!(sample_service_path(&zero, g, 3).rows().all(|r| r.iter().all(|&x| x == 0.0)));
        let full = SleepServiceModel::random_sleep(1.0, 1.0).unwrap();
        let s = sample_service_path(&full, g, 3);
        assert_eq!(s.get(4, 60), 56.0);
        let s = sample_service_path(&sleep(), g, 11);
        assert!(is_additive(&s, 0.0));
        assert_eq!(deviation_from_additivity(&s, 0, 60), 0.0);
    }

    #[test]
    fn mean_wakeup_slot() {
        let m = sleep();
        let mut rng = path_rng(5, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| m.sample_wakeup(&mut rng) as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 9.0).abs() < 4.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn usable_distribution_sums_to_one() {
        let pmf = sleep().usable_slots_distribution(20, 100);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let det = SleepServiceModel::deterministic_sleep(1.0, 50).unwrap();
        assert_eq!(det.usable_slots_distribution(20, 100)[50], 1.0);
    }

    #[test]
    fn curve_is_zero_on_diagonal_and_short_horizon() {
        let params = ServiceCurveParams::new(1e-6, 1e-4).unwrap();
        let col = service_curve_column(&sleep(), &params, 100);
        assert_eq!(col[100], 0.0);
        assert!(col.iter().all(|&x| x == 0.0), "{col:?}");
    }

    #[test]
    fn curve_of_deterministic_service_is_latency_rate_like() {
        let m = SleepServiceModel::deterministic_sleep(1.0, 10).unwrap();
        let params = ServiceCurveParams::new(1e-3, 1e-3).unwrap();
        let col = service_curve_column(&m, &params, 50);
        // no randomness: sup over theta recovers [t - max(tau, T)] minus a vanishing penalty
        for (tau, &v) in col.iter().enumerate() {
            let exact = 50usize.saturating_sub(tau.max(10)) as f64;
            assert!(v <= exact + 1e-9 && v >= exact - 0.2, "{tau}: {v} vs {exact}");
        }
    }

    #[test]
    fn upper_bound_trivial_cases() {
        let full = SleepServiceModel::random_sleep(1.0, 1.0).unwrap();
        let ub = analytical_upper_bound(&full, 1e-3, 30).unwrap();
        for (tau, &v) in ub.iter().enumerate() {
            assert_eq!(v, (30 - tau) as f64);
        }
        assert!(analytical_upper_bound(&sleep(), 1.0, 30).unwrap().iter().all(|&v| v == 0.0));
        assert!(analytical_reference_curve(&sleep(), 1.0, 30).unwrap().iter().all(|&v| v == 0.0));
        let det = SleepServiceModel::deterministic_sleep(2.0, 10).unwrap();
        let ub = analytical_upper_bound(&det, 1e-3, 30).unwrap();
        assert_eq!(ub[0], 40.0);
        assert_eq!(ub[25], 10.0);
    }

    #[test]
    fn reference_lies_below_upper_bound_and_curve_below_both() {
        let m = sleep();
        let t = 200;
        let eps = 1e-3;
        let ub = analytical_upper_bound(&m, eps, t).unwrap();
        let rc = analytical_reference_curve(&m, eps, t).unwrap();
        let params = ServiceCurveParams::new(eps, 1e-4).unwrap();
        let sc = service_curve_column(&m, &params, t);
        for tau in 0..=t {
            assert!(rc[tau] <= ub[tau]);
            assert!(sc[tau] <= ub[tau] + 1e-9, "{tau}: {} > {}", sc[tau], ub[tau]);
        }
        assert!(ub[0] > 0.0);
    }
}
