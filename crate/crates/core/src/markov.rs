//! Exact transient analysis of compound Poisson arrivals (geometric packet
//! sizes) at a unit-rate server that sleeps for the first `T` slots.
//!
//! By memorylessness of the sizes, the number of packets in the system is a
//! birth-death chain; given `k` packets the backlog is negative binomial.

use statrs::function::gamma::ln_gamma;

use crate::arrivals::CompoundPoissonModel;
use crate::error::{Error, Result};
use crate::stats::QuantileSeries;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovConfig {
    pub arrivals: CompoundPoissonModel,
    /// Slots without service before the server wakes up.
    pub latency: usize,
    /// Initial truncation of the state space, grown by doubling.
    pub state_cap: usize,
    pub max_state_cap: usize,
    /// Largest probability mass allowed to leave the truncated state space.
    pub tail_tol: f64,
}

impl MarkovConfig {
    pub fn new(arrivals: CompoundPoissonModel, latency: usize) -> Self {
        Self {
            arrivals,
            latency,
            state_cap: 64,
            max_state_cap: 1 << 20,
            tail_tol: 1e-12,
        }
    }

    /// `P[K = k]` of the stationary geometric law (requires `alpha < beta`).
    pub fn stationary_state_probability(&self, k: usize) -> Result<f64> {
        let (a, b) = (self.arrivals.alpha(), self.arrivals.beta());
        if a >= b {
            return Err(Error::param("alpha", format!("stationary law needs alpha < beta, got {a} >= {b}")));
        }
        let base = (b - a) / (b * (1.0 - a));
        let ratio = a * (1.0 - b) / ((1.0 - a) * b);
        Ok(base * ratio.powi(k as i32))
    }
}

/// Advances `state` by one slot in place; returns the mass pushed beyond the cap.
fn step(state: &mut Vec<f64>, cap: usize, alpha: f64, beta: f64, serving: bool) -> f64 {
    let n = state.len();
    let mut next = vec![0.0; (n + 1).min(cap + 1)];
    let mut lost = 0.0;
    let mut put = |next: &mut Vec<f64>, j: usize, x: f64| {
        if j <= cap {
            next[j] += x;
        } else {
            lost += x;
        }
    };
    for (i, &p) in state.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        if !serving {
            put(&mut next, i, (1.0 - alpha) * p);
            put(&mut next, i + 1, alpha * p);
        } else if i == 0 {
            // an arrival into an empty system may complete within the slot
            put(&mut next, 0, (1.0 - alpha * (1.0 - beta)) * p);
            put(&mut next, 1, alpha * (1.0 - beta) * p);
        } else {
            put(&mut next, i - 1, (1.0 - alpha) * beta * p);
            put(&mut next, i, ((1.0 - alpha) * (1.0 - beta) + alpha * beta) * p);
            put(&mut next, i + 1, alpha * (1.0 - beta) * p);
        }
    }
    while next.len() > 1 && *next.last().unwrap() == 0.0 {
        next.pop();
    }
    *state = next;
    lost
}

/// Calls `visit(t, P(t))` for `t = 0..=horizon`, growing the state cap until
/// the truncated mass stays below `tail_tol`.
pub fn for_each_state_distribution(
    config: &MarkovConfig,
    horizon: usize,
    mut visit: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<()> {
    let (alpha, beta) = (config.arrivals.alpha(), config.arrivals.beta());
    let mut cap = config.state_cap.max(1);
    // find a cap that suffices for the whole horizon before visiting anything
    loop {
        let mut state = vec![1.0];
        let mut lost = 0.0;
        for t in 1..=horizon {
            lost += step(&mut state, cap, alpha, beta, t > config.latency);
            if lost > config.tail_tol {
                break;
            }
        }
        if lost <= config.tail_tol {
            break;
        }
        if cap >= config.max_state_cap {
            return Err(Error::Truncation { t: horizon, lost, cap });
        }
        cap = (cap * 2).min(config.max_state_cap);
    }
    let mut state = vec![1.0];
    visit(0, &state)?;
    for t in 1..=horizon {
        step(&mut state, cap, alpha, beta, t > config.latency);
        visit(t, &state)?;
    }
    Ok(())
}

/// `P[K(t) = k]` for `k = 0..`, trailing zeros trimmed.
pub fn transient_state_distribution(config: &MarkovConfig, t: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for_each_state_distribution(config, t, |s, p| {
        if s == t {
            out = p.to_vec();
        }
        Ok(())
    })?;
    Ok(out)
}

/// Negative binomial masses `P[B = b | K = k]` in log-gamma form, cached by `b`.
struct NegBinomialTable {
    ln_beta: f64,
    ln_keep: f64,
    ln_fact: Vec<f64>,
    /// `rows[b][k]` for `k = 0..=b`
    rows: Vec<Vec<f64>>,
}

impl NegBinomialTable {
    fn new(beta: f64) -> Self {
        Self {
            ln_beta: beta.ln(),
            ln_keep: (-beta).ln_1p(),
            ln_fact: vec![0.0],
            rows: vec![vec![1.0]],
        }
    }

    /// `ln (n!)`
    fn ln_factorial(&mut self, n: usize) -> f64 {
        while self.ln_fact.len() <= n {
            let m = self.ln_fact.len();
            self.ln_fact.push(ln_gamma(m as f64 + 1.0));
        }
        self.ln_fact[n]
    }

    /// `C(b-1, k-1) beta^k (1-beta)^(b-k)` for `1 <= k <= b`.
    fn mass(&mut self, k: usize, b: usize) -> f64 {
        if k == 0 || k > b {
            return if k == 0 && b == 0 { 1.0 } else { 0.0 };
        }
        let ln_choose = self.ln_factorial(b - 1) - self.ln_factorial(k - 1) - self.ln_factorial(b - k);
        let tail = if b > k { (b - k) as f64 * self.ln_keep } else { 0.0 };
        (ln_choose + k as f64 * self.ln_beta + tail).exp()
    }

    fn row(&mut self, b: usize) -> &[f64] {
        while self.rows.len() <= b {
            let n = self.rows.len();
            let row = (0..=n).map(|k| self.mass(k, n)).collect();
            self.rows.push(row);
        }
        &self.rows[b]
    }
}

/// Backlog masses `P[B = b]` for `b = 0, 1, ...` until the remaining mass is
/// below `stop_mass` or, if given, the cdf reaches `stop_cdf`.
fn backlog_masses(
    table: &mut NegBinomialTable,
    states: &[f64],
    stop_mass: f64,
    stop_cdf: Option<f64>,
) -> Vec<f64> {
    let mut out = vec![states.first().copied().unwrap_or(0.0)];
    let mut cdf = out[0];
    let mut b = 0;
    loop {
        if stop_cdf.is_some_and(|c| cdf >= c) || 1.0 - cdf <= stop_mass {
            return out;
        }
        b += 1;
        let row = table.row(b);
        let mass: f64 = states.iter().zip(row).skip(1).map(|(p, m)| p * m).sum();
        cdf += mass;
        out.push(mass);
        // the cdf can fall short of 1 by rounding only; stop once it stalls
        if mass == 0.0 && b > states.len() && out.iter().rev().take(64).all(|&m| m == 0.0) {
            return out;
        }
    }
}

/// Distribution of the backlog `B(t)` in data units, indexed by `b`.
pub fn backlog_distribution(config: &MarkovConfig, t: usize) -> Result<Vec<f64>> {
    let states = transient_state_distribution(config, t)?;
    let mut table = NegBinomialTable::new(config.arrivals.beta());
    Ok(backlog_masses(&mut table, &states, config.tail_tol, None))
}

/// [`backlog_distribution`] for every `t = 0..=horizon` in one pass of the chain.
pub fn backlog_distribution_series(config: &MarkovConfig, horizon: usize) -> Result<Vec<Vec<f64>>> {
    let mut table = NegBinomialTable::new(config.arrivals.beta());
    let mut out = Vec::with_capacity(horizon + 1);
    for_each_state_distribution(config, horizon, |_, states| {
        out.push(backlog_masses(&mut table, states, config.tail_tol, None));
        Ok(())
    })?;
    Ok(out)
}

/// `inf { b : P[B(t) <= b] >= 1 - epsilon }` for `t = 0..=horizon`.
pub fn backlog_quantile_series(config: &MarkovConfig, horizon: usize, epsilon: f64) -> Result<QuantileSeries> {
    crate::arrivals::check_epsilon(epsilon)?;
    let mut table = NegBinomialTable::new(config.arrivals.beta());
    let mut values = Vec::with_capacity(horizon + 1);
    // slack absorbs truncation and rounding in the accumulated cdf
    let target = 1.0 - epsilon - 1e-12;
    for_each_state_distribution(config, horizon, |_, states| {
        if epsilon >= 1.0 {
            values.push(0.0);
            return Ok(());
        }
        let masses = backlog_masses(&mut table, states, 0.0, Some(target));
        values.push((masses.len() - 1) as f64);
        Ok(())
    })?;
    Ok(QuantileSeries { epsilon, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(alpha: f64, latency: usize) -> MarkovConfig {
        MarkovConfig::new(CompoundPoissonModel::new(alpha, 0.3).unwrap(), latency)
    }

    fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
        let mut c = 1.0;
        for i in 0..k {
            c *= (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    #[test]
    fn distribution_series_matches_single_slots() {
        let c = config(0.12, 20);
        let all = backlog_distribution_series(&c, 60).unwrap();
        assert_eq!(all.len(), 61);
        for t in [0, 19, 20, 21, 60] {
            assert_eq!(all[t], backlog_distribution(&c, t).unwrap());
        }
    }

    #[test]
    fn starts_empty() {
        assert_eq!(transient_state_distribution(&config(0.09, 100), 0).unwrap(), vec![1.0]);
        assert_eq!(backlog_distribution(&config(0.09, 100), 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn binomial_before_wakeup() {
        for t in [1, 3, 50, 100] {
            let p = transient_state_distribution(&config(0.09, 100), t).unwrap();
            for (k, &x) in p.iter().enumerate() {
                let want = binomial_pmf(t as u64, 0.09, k as u64);
                assert!((x - want).abs() <= 1e-12 * want.max(1e-300) + 1e-300, "t={t} k={k}");
            }
        }
    }

    #[test]
    fn converges_to_stationary_geometric_law() {
        let c = config(0.09, 0);
        let p = transient_state_distribution(&c, 3000).unwrap();
        assert!((c.stationary_state_probability(0).unwrap() - 0.21 / 0.273).abs() < 1e-12);
        for k in 0..10 {
            let want = c.stationary_state_probability(k).unwrap();
            assert!((p[k] - want).abs() < 1e-9, "k={k}: {} vs {want}", p[k]);
        }
        assert!((p[0] - 0.769_230_769).abs() < 1e-8);
    }

    #[test]
    fn probability_is_conserved() {
        let c = config(0.21, 100);
        for_each_state_distribution(&c, 2000, |t, p| {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12, "t={t}");
            Ok(())
        })
        .unwrap();
        let b = backlog_distribution(&c, 400).unwrap();
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-11);
        let k = transient_state_distribution(&c, 400).unwrap();
        assert_eq!(b[0], k[0]);
    }

    #[test]
    fn truncation_grows_or_fails() {
        let mut c = config(0.09, 1000);
        c.state_cap = 2;
        let p = transient_state_distribution(&c, 100).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        c.max_state_cap = 8;
        assert!(matches!(
            transient_state_distribution(&c, 100),
            Err(Error::Truncation { .. })
        ));
    }

    #[test]
    fn single_packet_backlog_is_geometric() {
        let mut t = NegBinomialTable::new(0.3);
        for b in 1..40 {
            assert!((t.mass(1, b) - 0.3 * 0.7f64.powi(b as i32 - 1)).abs() < 1e-15);
        }
        // larger k against the direct product formula
        let direct = 20.0 * 0.3f64.powi(4) * 0.7f64.powi(3);
        assert!((t.mass(4, 7) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn quantile_series_shape() {
        let c = config(0.09, 100);
        assert!(backlog_quantile_series(&c, 50, 1.0).unwrap().values.iter().all(|&x| x == 0.0));
        let q = backlog_quantile_series(&c, 2000, 1e-2).unwrap().values;
        for t in 1..=100 {
            assert!(q[t] >= q[t - 1]);
        }
        let peak = q.iter().copied().fold(0.0, f64::max);
        // the peak value is attained once service starts
        assert_eq!(q[100..].iter().copied().fold(0.0, f64::max), peak);
        assert!(peak > q[2000]);
        // quantile against the full distribution
        let dist = backlog_distribution(&c, 300).unwrap();
        let mut cdf = 0.0;
        let b = dist.iter().position(|&m| {
            cdf += m;
            cdf >= 0.99 - 1e-12
        });
        assert_eq!(b.unwrap() as f64, q[300]);
    }

    #[test]
    fn peak_quantile_grows_with_load() {
        let peaks: Vec<f64> = [0.12, 0.15, 0.18, 0.21]
            .iter()
            .map(|&a| {
                let q = backlog_quantile_series(&config(a, 100), 1000, 1e-2).unwrap();
                q.values.into_iter().fold(0.0, f64::max)
            })
            .collect();
        assert!(peaks.windows(2).all(|w| w[0] <= w[1]), "{peaks:?}");
    }
}
