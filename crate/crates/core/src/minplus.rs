//! Min-plus algebra on bivariate functions and cumulative paths.
//!
//! All infima of the continuous calculus become finite minima over slot indices.
//! Ties are broken by the smallest index, which never changes a value.

use crate::bivariate::{BivariateFunction, CumulativePath, TimeGrid};
use crate::error::{Error, Result};

/// Absolute tolerance used by the additivity checks on closed-form functions.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Bivariate min-plus convolution `h(s,u) = min_{t in [s,u]} f(s,t) + g(t,u)`.
///
/// O(horizon^3). When `g` is generated by a cumulative path prefer
/// [`convolve_additive`], which is O(horizon^2).
pub fn convolve(f: &BivariateFunction, g: &BivariateFunction) -> Result<BivariateFunction> {
    f.grid().ensure_same(&g.grid())?;
    let n = f.grid().len();
    let mut h = BivariateFunction::zeros(f.grid());
    for s in 0..n {
        let f_row = f.row(s);
        let out = h.row_mut(s);
        // t = s: f(s,s) = 0
        out.copy_from_slice(g.row(s));
        for t in (s + 1)..n {
            let fst = f_row[t - s];
            let g_row = g.row(t);
            let tail = &mut out[t - s..];
            for (o, &gv) in tail.iter_mut().zip(g_row) {
                let cand = fst + gv;
                if cand < *o {
                    *o = cand;
                }
            }
        }
    }
    Ok(h)
}

/// `f ⊗ S_c` where `S_c(t,u) = c(u) - c(t)` is the additive process of path `c`.
pub fn convolve_additive(f: &BivariateFunction, c: &CumulativePath) -> Result<BivariateFunction> {
    f.grid().ensure_same(&c.grid())?;
    let n = f.grid().len();
    let cv = c.values();
    let mut h = BivariateFunction::zeros(f.grid());
    for s in 0..n {
        let f_row = f.row(s);
        let out = h.row_mut(s);
        let mut best = s;
        let mut best_key = f_row[0] - cv[s];
        for u in s..n {
            let key = f_row[u - s] - cv[u];
            if key < best_key {
                best_key = key;
                best = u;
            }
            out[u - s] = f_row[best - s] + (cv[u] - cv[best]);
        }
    }
    Ok(h)
}

/// Tandem of additive processes `S_1 ⊗ S_2 ⊗ ... ⊗ S_n`, each given by its cumulative path.
pub fn tandem_of_additive(paths: &[CumulativePath]) -> Result<BivariateFunction> {
    let (first, rest) = paths
        .split_first()
        .ok_or_else(|| Error::param("paths", "tandem needs at least one system"))?;
    let mut net = BivariateFunction::from_cumulative(first);
    for c in rest {
        net = convolve_additive(&net, c)?;
    }
    Ok(net)
}

/// Column `t` of [`tandem_of_additive`], `S_net(tau, t)` for `tau = 0..=t`, in O(n t).
pub fn tandem_column_of_additive(paths: &[CumulativePath], t: usize) -> Result<Vec<f64>> {
    let (last, rest) = paths
        .split_last()
        .ok_or_else(|| Error::param("paths", "tandem needs at least one system"))?;
    last.grid().check_slot(t)?;
    for c in rest {
        c.grid().ensure_same(&last.grid())?;
    }
    let mut col: Vec<f64> = (0..=t).map(|u| last.interval(u, t)).collect();
    // peel hops from the back: col(u) = min_{v >= u} c(v) - c(u) + col(v)
    for c in rest.iter().rev() {
        let mut best = f64::INFINITY;
        for u in (0..=t).rev() {
            best = best.min(c.at(u) + col[u]);
            col[u] = best - c.at(u);
        }
    }
    Ok(col)
}

/// Departures of the min-plus linear system, `D(t) = min_{tau in [0,t]} A(tau) + S(tau,t)`.
#[doc(alias = "minplus_deconvolve_arrival")]
pub fn departures(a: &CumulativePath, s: &BivariateFunction) -> Result<CumulativePath> {
    a.grid().ensure_same(&s.grid())?;
    let n = a.grid().len();
    let av = a.values();
    let mut d = av.to_vec();
    for tau in 0..n {
        let base = av[tau];
        for (dt, &sv) in d[tau..].iter_mut().zip(s.row(tau)) {
            let cand = base + sv;
            if cand < *dt {
                *dt = cand;
            }
        }
    }
    finish_departures(a.grid(), d)
}

/// Departures through the additive process of path `c`, in O(horizon).
pub fn departures_additive(a: &CumulativePath, c: &CumulativePath) -> Result<CumulativePath> {
    a.grid().ensure_same(&c.grid())?;
    let av = a.values();
    let cv = c.values();
    let mut d = Vec::with_capacity(av.len());
    let mut best = 0;
    for t in 0..av.len() {
        if av[t] - cv[t] < av[best] - cv[best] {
            best = t;
        }
        d.push(av[best] + (cv[t] - cv[best]));
    }
    finish_departures(a.grid(), d)
}

fn finish_departures(grid: TimeGrid, mut d: Vec<f64>) -> Result<CumulativePath> {
    // A non-monotone S can yield a non-monotone D; the departure process of a
    // causal system is cumulative, so report it instead of repairing silently.
    d[0] = 0.0;
    CumulativePath::new(grid, d)
}

/// The burst probe `delta`, with the infinite burst replaced by the finite `cap`.
pub fn burst_path(grid: TimeGrid, cap: f64) -> Result<CumulativePath> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::param("cap", format!("must be positive, got {cap}")));
    }
    let mut v = vec![cap; grid.len()];
    v[0] = 0.0;
    CumulativePath::new(grid, v)
}

/// Bivariate burst `delta(s,t) = cap` for `t > s`, the neutral element of [`convolve`]
/// as long as `cap` exceeds every value it is combined with.
pub fn burst_function(grid: TimeGrid, cap: f64) -> Result<BivariateFunction> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::param("cap", format!("must be positive, got {cap}")));
    }
    BivariateFunction::from_fn(grid, |s, t| if t > s { cap } else { 0.0 })
}

/// Default burst cap for a scenario whose service rate never exceeds `max_rate`.
pub fn default_burst_cap(grid: TimeGrid, max_rate: f64) -> f64 {
    (max_rate.max(1.0) * grid.horizon() as f64 * 10.0).max(1.0)
}

/// Latency-rate function with a transient latency, `R [t - max(tau, T)]_+`.
pub fn transient_latency_rate(grid: TimeGrid, rate: f64, latency: usize) -> Result<BivariateFunction> {
    check_latency_rate(grid, rate, latency)?;
    BivariateFunction::from_fn(grid, |tau, t| {
        rate * t.saturating_sub(tau.max(latency)) as f64
    })
}

/// Latency-rate function with a stationary latency, `R [t - tau - T]_+`.
pub fn stationary_latency_rate(grid: TimeGrid, rate: f64, latency: usize) -> Result<BivariateFunction> {
    check_latency_rate(grid, rate, latency)?;
    BivariateFunction::from_fn(grid, |tau, t| {
        rate * (t - tau).saturating_sub(latency) as f64
    })
}

/// Transient latency `T` followed by a stationary latency `T_s`,
/// `R [t - max(tau, T) - T_s]_+`; the convolution of the two functions above.
pub fn latency_rate(grid: TimeGrid, rate: f64, transient: usize, stationary: usize) -> Result<BivariateFunction> {
    check_latency_rate(grid, rate, transient)?;
    check_latency_rate(grid, rate, stationary)?;
    BivariateFunction::from_fn(grid, |tau, t| {
        rate * t.saturating_sub(tau.max(transient)).saturating_sub(stationary) as f64
    })
}

fn check_latency_rate(grid: TimeGrid, rate: f64, latency: usize) -> Result<()> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::param("rate", format!("must be non-negative, got {rate}")));
    }
    if latency > grid.horizon() {
        return Err(Error::param(
            "latency",
            format!("{latency} exceeds horizon {}", grid.horizon()),
        ));
    }
    Ok(())
}

/// Maximal deviation from additivity, `f(s,u) - min_{t in [s,u]} f(s,t) + f(t,u)`.
pub fn deviation_from_additivity(f: &BivariateFunction, s: usize, u: usize) -> f64 {
    assert!(s <= u, "deviation needs s <= u, got ({s}, {u})");
    let split = (s..=u)
        .map(|t| f.get(s, t) + f.get(t, u))
        .fold(f64::INFINITY, f64::min);
    f.get(s, u) - split
}

/// Exhaustive check of `f(s,u) >= f(s,t) + f(t,u) - tol` over all `s <= t <= u`.
pub fn is_super_additive(f: &BivariateFunction, tol: f64) -> bool {
    let n = f.grid().len();
    for s in 0..n {
        let row_s = f.row(s);
        for t in s..n {
            let fst = row_s[t - s];
            let lhs = &row_s[t - s..];
            let rhs = f.row(t);
            let mut ok = true;
            for (&a, &b) in lhs.iter().zip(rhs) {
                ok &= a >= fst + b - tol;
            }
            if !ok {
                return false;
            }
        }
    }
    true
}

/// Exhaustive check of `|f(s,u) - f(s,t) - f(t,u)| <= tol` over all `s <= t <= u`.
pub fn is_additive(f: &BivariateFunction, tol: f64) -> bool {
    let n = f.grid().len();
    for s in 0..n {
        let row_s = f.row(s);
        for t in s..n {
            let fst = row_s[t - s];
            let mut ok = true;
            for (&a, &b) in row_s[t - s..].iter().zip(f.row(t)) {
                ok &= (a - fst - b).abs() <= tol;
            }
            if !ok {
                return false;
            }
        }
    }
    true
}

/// Elementwise minimum of two bivariate functions.
pub fn pointwise_min(f: &BivariateFunction, g: &BivariateFunction) -> Result<BivariateFunction> {
    f.grid().ensure_same(&g.grid())?;
    let mut h = f.clone();
    for s in 0..f.grid().len() {
        let g_row = g.row(s);
        for (v, &w) in h.row_mut(s).iter_mut().zip(g_row) {
            if w < *v {
                *v = w;
            }
        }
    }
    Ok(h)
}
