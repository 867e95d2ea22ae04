//! One-dimensional minimization over a positive interval: a log-spaced scan
//! followed by golden-section refinement around the best grid point.

/// Search configuration for [`minimize_log_grid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGridSearch {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
    pub refine_iterations: usize,
}

impl LogGridSearch {
    pub fn new(lower: f64, upper: f64, points: usize) -> Self {
        assert!(lower > 0.0 && upper > lower && points >= 2);
        Self {
            lower,
            upper,
            points,
            refine_iterations: 40,
        }
    }

    pub fn grid(&self) -> impl Iterator<Item = f64> + '_ {
        let (lo, hi) = (self.lower.ln(), self.upper.ln());
        let step = (hi - lo) / (self.points - 1) as f64;
        (0..self.points).map(move |i| (lo + step * i as f64).exp())
    }
}

/// Minimizes `f` over `[lower, upper]` and returns `(argmin, min)`.
///
/// Non-finite objective values are treated as `+inf`. The result is never worse
/// than the best grid point.
pub fn minimize_log_grid(search: &LogGridSearch, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut eval = |x: f64| {
        let y = f(x);
        if y.is_nan() {
            f64::INFINITY
        } else {
            y
        }
    };
    let xs: Vec<f64> = search.grid().collect();
    let ys: Vec<f64> = xs.iter().map(|&x| eval(x)).collect();
    let (mut best_i, mut best_y) = (0, ys[0]);
    for (i, &y) in ys.iter().enumerate() {
        if y < best_y {
            best_i = i;
            best_y = y;
        }
    }
    let mut best_x = xs[best_i];
    if !best_y.is_finite() {
        return (best_x, best_y);
    }

    // golden section in log space on the bracketing neighbours
    let mut a = xs[best_i.saturating_sub(1)].ln();
    let mut b = xs[(best_i + 1).min(xs.len() - 1)].ln();
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c.exp());
    let mut fd = eval(d.exp());
    for _ in 0..search.refine_iterations {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c.exp());
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d.exp());
        }
    }
    for (x, y) in [(c, fc), (d, fd)] {
        if y < best_y {
            best_y = y;
            best_x = x.exp();
        }
    }
    (best_x, best_y)
}
