//! Empirical quantiles and count histograms over sample values.

use std::collections::BTreeMap;

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `inf { x >= 0 : P[X <= x] >= 1 - xi }` of the empirical distribution.
///
/// Sorts `samples` in place. `xi >= 1` gives 0.
pub fn empirical_quantile(samples: &mut [f64], xi: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if xi >= 1.0 {
        return Ok(0.0);
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples[upper_index(samples.len(), xi)].max(0.0))
}

/// Largest `x` with `P[X < x] <= epsilon`, i.e. a value the samples reach or
/// exceed with empirical probability at least `1 - epsilon`.
pub fn empirical_lower_quantile(samples: &mut [f64], epsilon: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples[lower_index(samples.len(), epsilon)])
}

/// Index into sorted samples of the upper quantile at level `1 - xi`.
fn upper_index(n: usize, xi: f64) -> usize {
    let level = (1.0 - xi).clamp(0.0, 1.0);
    let rank = (level * n as f64 - 1e-9).ceil().max(1.0) as usize;
    rank.min(n) - 1
}

/// `j = floor(epsilon n)`: at most `j` samples lie strictly below `x_(j)`, while
/// any larger value has at least `j + 1` below it.
fn lower_index(n: usize, epsilon: f64) -> usize {
    let j = (epsilon.clamp(0.0, 1.0) * n as f64 + 1e-9).floor() as usize;
    j.min(n - 1)
}

/// Multiset of observed values with exact counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histogram {
    counts: BTreeMap<OrderedFloat<f64>, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        *self.counts.entry(OrderedFloat(x)).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn merge(&mut self, other: &Histogram) {
        for (k, c) in &other.counts {
            *self.counts.entry(*k).or_insert(0) += c;
        }
        self.total += other.total;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// `(value, count)` in increasing value order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, u64)> + '_ {
        self.counts.iter().map(|(k, &c)| (k.0, c))
    }

    fn nth(&self, index: u64) -> f64 {
        let mut seen = 0;
        for (x, c) in self.iter() {
            seen += c;
            if seen > index {
                return x;
            }
        }
        unreachable!("index below total")
    }

    /// Same as [`empirical_quantile`] on the recorded samples.
    pub fn quantile(&self, xi: f64) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::EmptySamples);
        }
        if xi >= 1.0 {
            return Ok(0.0);
        }
        Ok(self.nth(upper_index(self.total as usize, xi) as u64).max(0.0))
    }

    /// Same as [`empirical_lower_quantile`] on the recorded samples.
    pub fn lower_quantile(&self, epsilon: f64) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::EmptySamples);
        }
        Ok(self.nth(lower_index(self.total as usize, epsilon) as u64))
    }

    /// Empirical probability mass function.
    pub fn pmf(&self) -> Vec<(f64, f64)> {
        let n = self.total as f64;
        self.iter().map(|(x, c)| (x, c as f64 / n)).collect()
    }
}

/// Per-slot quantiles, entry `t` for slot `t`, at upper level `1 - epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileSeries {
    pub epsilon: f64,
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_definition() {
        let mut xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(empirical_quantile(&mut xs, 0.01).unwrap(), 99.0);
        assert_eq!(empirical_quantile(&mut xs, 0.0).unwrap(), 100.0);
        assert_eq!(empirical_quantile(&mut xs, 0.5).unwrap(), 50.0);
        assert_eq!(empirical_quantile(&mut xs, 0.005).unwrap(), 100.0);
        assert_eq!(empirical_quantile(&mut xs, 1.0).unwrap(), 0.0);
        assert!(empirical_quantile(&mut [], 0.1).is_err());
        // lower tail: at most 1 of 100 values strictly below
        assert_eq!(empirical_lower_quantile(&mut xs, 0.01).unwrap(), 2.0);
        assert_eq!(empirical_lower_quantile(&mut xs, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn histogram_agrees_with_sorting() {
        let xs = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0, 5.0];
        let mut h = Histogram::new();
        xs.iter().for_each(|&x| h.add(x));
        for xi in [0.0, 0.05, 0.1, 0.3, 0.5, 0.9, 0.99] {
            let mut v = xs.to_vec();
            assert_eq!(h.quantile(xi).unwrap(), empirical_quantile(&mut v, xi).unwrap());
            assert_eq!(h.lower_quantile(xi).unwrap(), empirical_lower_quantile(&mut v, xi).unwrap());
        }
        let mut g = Histogram::new();
        g.merge(&h);
        g.merge(&h);
        assert_eq!(g.total(), 22);
        assert_eq!(g.quantile(0.5).unwrap(), h.quantile(0.5).unwrap());
    }
}
