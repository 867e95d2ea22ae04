//! Arrival models: the discrete compound Poisson process (Bernoulli packet
//! arrivals with geometric sizes), constant-rate probes, and affine statistical
//! envelopes obtained from the MGF with a martingale argument.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::bivariate::{CumulativePath, TimeGrid};
use crate::error::{Error, Result};
use crate::optimize::{minimize_log_grid, LogGridSearch};
use crate::rng::{path_rng, PathRng};

/// Per slot, a packet arrives with probability `alpha`; packet sizes are
/// geometric on `{1, 2, ...}` with parameter `beta` (mean `1 / beta`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundPoissonModel {
    alpha: f64,
    beta: f64,
}

impl CompoundPoissonModel {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::param("alpha", format!("must lie in [0, 1], got {alpha}")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::param("beta", format!("must lie in (0, 1], got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Long-run arrival rate `alpha / beta` in data units per slot.
    pub fn mean_rate(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Supremum of the MGF domain, `-ln(1 - beta)`; infinite for `beta = 1`.
    pub fn theta_limit(&self) -> f64 {
        -(-self.beta).ln_1p()
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        let limit = self.theta_limit();
        if !(theta >= 0.0 && theta < limit) {
            return Err(Error::MgfDomain { theta, limit });
        }
        Ok(())
    }

    /// `ln M_A(theta, 1)`, the log-MGF of the arrivals in one slot.
    pub fn ln_mgf_slot(&self, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        let (a, b) = (self.alpha, self.beta);
        let e = theta.exp();
        let size_mgf = b * e / (1.0 - (1.0 - b) * e);
        Ok((a * size_mgf + 1.0 - a).ln())
    }

    /// `M_A(theta, t) = M_A(theta, 1)^t`.
    pub fn mgf(&self, theta: f64, t: usize) -> Result<f64> {
        Ok((t as f64 * self.ln_mgf_slot(theta)?).exp())
    }

    /// One sample path on `grid`; the arrivals of slot `k` enter `c(k)`.
    pub fn sample_path(&self, grid: TimeGrid, rng: &mut PathRng) -> CumulativePath {
        let sizes = Geometric::new(self.beta).expect("beta validated");
        let mut values = Vec::with_capacity(grid.len());
        values.push(0.0);
        let mut acc = 0.0;
        for _ in 0..grid.horizon() {
            if rng.random_bool(self.alpha) {
                acc += (sizes.sample(rng) + 1) as f64;
            }
            values.push(acc);
        }
        CumulativePath::new(grid, values).expect("nondecreasing by construction")
    }
}

/// Sample path of `model` drawn from stream 0 of `seed`.
pub fn sample_arrival_path(model: &CompoundPoissonModel, grid: TimeGrid, seed: u64) -> CumulativePath {
    model.sample_path(grid, &mut path_rng(seed, 0))
}

/// Constant-rate path `c(k) = rate * slot_width * k`; `rate` is per unit of time.
pub fn cbr_path(rate: f64, grid: TimeGrid) -> Result<CumulativePath> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::param("rate", format!("must be non-negative, got {rate}")));
    }
    let per_slot = rate * grid.slot_width();
    CumulativePath::new(grid, (0..grid.len()).map(|k| per_slot * k as f64).collect())
}

/// Anything that bounds the arrivals in an interval of `width` slots.
pub trait ArrivalEnvelope {
    fn value(&self, width: usize) -> f64;

    /// Probability that the envelope is violated on a sample path.
    fn violation_probability(&self) -> f64 {
        0.0
    }
}

/// Affine envelope `rho * t + sigma` with violation probability `epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub theta: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl ArrivalEnvelope for Envelope {
    fn value(&self, width: usize) -> f64 {
        self.rho * width as f64 + self.sigma
    }

    fn violation_probability(&self) -> f64 {
        self.epsilon
    }
}

/// Deterministic affine envelope, e.g. a constant-rate source with a burst.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineEnvelope {
    pub rate: f64,
    pub burst: f64,
}

impl ArrivalEnvelope for AffineEnvelope {
    fn value(&self, width: usize) -> f64 {
        self.rate * width as f64 + self.burst
    }
}

/// Martingale envelope of iid-increment arrivals at a fixed `theta`:
/// `rho = ln M_A(theta, 1) / theta`, `sigma = -ln(epsilon) / theta`.
pub fn build_envelope(model: &CompoundPoissonModel, epsilon: f64, theta: f64) -> Result<Envelope> {
    check_epsilon(epsilon)?;
    if theta <= 0.0 {
        return Err(Error::MgfDomain {
            theta,
            limit: model.theta_limit(),
        });
    }
    let rho = model.ln_mgf_slot(theta)? / theta;
    Ok(Envelope {
        theta,
        epsilon,
        rho,
        sigma: -epsilon.ln() / theta,
    })
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::param("epsilon", format!("must lie in (0, 1], got {epsilon}")));
    }
    Ok(())
}

/// Search interval for `theta` strictly inside the MGF domain.
pub(crate) fn theta_search(model: &CompoundPoissonModel) -> LogGridSearch {
    let limit = model.theta_limit();
    let upper = if limit.is_finite() {
        limit * (1.0 - 1e-9)
    } else {
        50.0
    };
    LogGridSearch::new(upper * 1e-7, upper, 64)
}

/// `theta` minimizing the envelope value at `t_eval`.
pub fn optimize_envelope_theta(model: &CompoundPoissonModel, epsilon: f64, t_eval: usize) -> Result<f64> {
    check_epsilon(epsilon)?;
    let search = theta_search(model);
    let (theta, _) = minimize_log_grid(&search, |theta| {
        build_envelope(model, epsilon, theta)
            .map(|e| e.value(t_eval))
            .unwrap_or(f64::INFINITY)
    });
    Ok(theta)
}

/// Envelope with `theta` optimized for the interval width `t_eval`.
pub fn optimized_envelope(model: &CompoundPoissonModel, epsilon: f64, t_eval: usize) -> Result<Envelope> {
    let theta = optimize_envelope_theta(model, epsilon, t_eval)?;
    build_envelope(model, epsilon, theta)
}
