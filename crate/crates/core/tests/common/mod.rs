#![allow(dead_code)]

use nscurve::{BivariateFunction, CumulativePath, TimeGrid};
use proptest::prelude::*;

/// Ingredients of a super-additive function: `c(t) - c(s) + g(t - s)` with
/// `c` nondecreasing and `g` convex, nondecreasing and `g(0) = 0`.
/// Half-integer values keep every sum exact.
#[derive(Debug, Clone)]
pub struct SuperAdditiveSpec {
    pub increments: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl SuperAdditiveSpec {
    pub fn build(&self) -> BivariateFunction {
        let h = self.increments.len();
        let grid = TimeGrid::slots(h).unwrap();
        let c = CumulativePath::from_increments(grid, &self.increments).unwrap();
        let mut g = vec![0.0; h + 1];
        for d in 1..=h {
            g[d] = g[d - 1] + self.slopes[d - 1];
        }
        BivariateFunction::from_fn(grid, |s, t| c.interval(s, t) + g[t - s]).unwrap()
    }
}

fn half_units(max: u32) -> impl Strategy<Value = f64> {
    (0..=2 * max).prop_map(|k| k as f64 / 2.0)
}

/// A super-additive function on a grid of `h` slots.
pub fn super_additive(h: usize) -> impl Strategy<Value = SuperAdditiveSpec> {
    let additive = prop_oneof![Just(false), Just(true)];
    (
        prop::collection::vec(half_units(6), h),
        prop::collection::vec(half_units(3), h),
        additive,
    )
        .prop_map(|(increments, mut slopes, additive)| {
            if additive {
                slopes.iter_mut().for_each(|s| *s = 0.0);
            }
            slopes.sort_by(f64::total_cmp);
            SuperAdditiveSpec { increments, slopes }
        })
}

/// Two super-additive functions on a common grid of 1 to 32 slots.
pub fn super_additive_pair() -> impl Strategy<Value = (SuperAdditiveSpec, SuperAdditiveSpec)> {
    (1usize..=32).prop_flat_map(|h| (super_additive(h), super_additive(h)))
}

/// Reference check written out as the plain triple loop.
pub fn super_additive_by_loops(f: &BivariateFunction) -> bool {
    let n = f.grid().len();
    (0..n).all(|s| (s..n).all(|t| (t..n).all(|u| f.get(s, u) >= f.get(s, t) + f.get(t, u) - 1e-9)))
}

/// `inf_{s <= t <= u} f(s,t) + g(t,u)` by exhaustive search.
pub fn convolve_by_loops(f: &BivariateFunction, g: &BivariateFunction) -> BivariateFunction {
    BivariateFunction::from_fn(f.grid(), |s, u| {
        (s..=u).map(|t| f.get(s, t) + g.get(t, u)).fold(f64::INFINITY, f64::min)
    })
    .unwrap()
}

/// One-sided 99% binomial slack `z sqrt(p (1 - p) / n)` with z = 2.326.
pub fn binomial_slack(p: f64, n: usize) -> f64 {
    2.326 * (p * (1.0 - p) / n as f64).sqrt()
}
