//! Discrete time axis, bivariate functions on the triangle `0 <= tau <= t <= horizon`
//! and single cumulative sample paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slotted time axis with indices `0..=horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: usize,
    slot_width: f64,
}

impl TimeGrid {
    pub fn new(horizon: usize, slot_width: f64) -> Result<Self> {
        if horizon < 1 {
            return Err(Error::InvalidGrid("horizon must be at least 1".into()));
        }
        if !(slot_width > 0.0 && slot_width.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "slot width must be positive and finite, got {slot_width}"
            )));
        }
        Ok(Self {
            horizon,
            slot_width,
        })
    }

    /// Unit-width slots, the convention of the pure models.
    pub fn slots(horizon: usize) -> Result<Self> {
        Self::new(horizon, 1.0)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn slot_width(&self) -> f64 {
        self.slot_width
    }

    /// Number of slot indices, `horizon + 1`.
    pub fn len(&self) -> usize {
        self.horizon + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: format!("{self:?}"),
                right: format!("{other:?}"),
            })
        }
    }

    pub(crate) fn check_slot(&self, t: usize) -> Result<()> {
        if t > self.horizon {
            Err(Error::param(
                "t",
                format!("slot {t} beyond horizon {}", self.horizon),
            ))
        } else {
            Ok(())
        }
    }
}

/// Offset of row `tau` in the packed triangle of a grid with `n = horizon + 1` slots.
#[inline]
fn row_offset(n: usize, tau: usize) -> usize {
    tau * n - tau * (tau.saturating_sub(1)) / 2
}

/// A function `f(tau, t)` on `0 <= tau <= t <= horizon`, stored densely row by row.
///
/// Row `tau` holds the values for `t = tau..=horizon` contiguously, so scans over
/// `t` at fixed `tau` are cache friendly. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl BivariateFunction {
    /// Fills the triangle from `f`, rejecting a non-zero diagonal.
    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let n = grid.len();
        let mut values = Vec::with_capacity(n * (n + 1) / 2);
        for tau in 0..n {
            for t in tau..n {
                let v = f(tau, t);
                if t == tau && v != 0.0 {
                    return Err(Error::NonZeroDiagonal { t, value: v });
                }
                values.push(v);
            }
        }
        Ok(Self { grid, values })
    }

    /// Builds from explicit rows; row `tau` must have `horizon - tau + 1` entries.
    pub fn from_rows(grid: TimeGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.len();
        if rows.len() != n {
            return Err(Error::param(
                "rows",
                format!("expected {n} rows, got {}", rows.len()),
            ));
        }
        let mut values = Vec::with_capacity(n * (n + 1) / 2);
        for (tau, row) in rows.into_iter().enumerate() {
            if row.len() != n - tau {
                return Err(Error::param(
                    "rows",
                    format!("row {tau} has {} entries, expected {}", row.len(), n - tau),
                ));
            }
            if row[0] != 0.0 {
                return Err(Error::NonZeroDiagonal {
                    t: tau,
                    value: row[0],
                });
            }
            values.extend(row);
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n * (n + 1) / 2],
        }
    }

    /// The additive function `S(tau, t) = c(t) - c(tau)` generated by a cumulative path.
    pub fn from_cumulative(path: &CumulativePath) -> Self {
        let c = path.values();
        Self::from_fn(path.grid(), |tau, t| c[t] - c[tau]).expect("diagonal is zero")
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn horizon(&self) -> usize {
        self.grid.horizon
    }

    /// Value at `(tau, t)`.
    ///
    /// # Panics
    ///
    /// If `tau > t` or `t > horizon`; the lower triangle is not part of the domain.
    #[inline]
    pub fn get(&self, tau: usize, t: usize) -> f64 {
        assert!(
            tau <= t && t <= self.grid.horizon,
            "({tau}, {t}) outside the triangle of horizon {}",
            self.grid.horizon
        );
        self.values[row_offset(self.grid.len(), tau) + (t - tau)]
    }

    /// Values `f(tau, t)` for `t = tau..=horizon`.
    #[inline]
    pub fn row(&self, tau: usize) -> &[f64] {
        let n = self.grid.len();
        let start = row_offset(n, tau);
        &self.values[start..start + (n - tau)]
    }

    /// Values `f(tau, t)` for `tau = 0..=t` at fixed `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..=t).map(|tau| self.get(tau, t)).collect()
    }

    pub(crate) fn row_mut(&mut self, tau: usize) -> &mut [f64] {
        let n = self.grid.len();
        let start = row_offset(n, tau);
        &mut self.values[start..start + (n - tau)]
    }

    /// Rows in `tau` order, for serialization.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.grid.len()).map(move |tau| self.row(tau))
    }

    /// Applies `f` to every off-diagonal value.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut out = self.clone();
        for tau in 0..self.grid.len() {
            for v in out.row_mut(tau).iter_mut().skip(1) {
                *v = f(*v);
            }
        }
        out
    }

    pub fn is_non_negative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

/// Cumulative sample path `c(t)` with `c(0) = 0`, nondecreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl CumulativePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidPath {
                slot: values.len(),
                reason: format!("expected {} values, got {}", grid.len(), values.len()),
            });
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidPath {
                slot: 0,
                reason: format!("c(0) must be 0, got {}", values[0]),
            });
        }
        for (t, w) in values.windows(2).enumerate() {
            if !(w[1] >= w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidPath {
                    slot: t + 1,
                    reason: format!("decreases from {} to {}", w[0], w[1]),
                });
            }
        }
        Ok(Self { grid, values })
    }

    /// Builds a path from per-slot increments; `increments[k]` is added at slot `k + 1`.
    pub fn from_increments(grid: TimeGrid, increments: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        values.push(0.0);
        let mut acc = 0.0;
        for &x in increments.iter().take(grid.horizon()) {
            acc += x;
            values.push(acc);
        }
        values.resize(grid.len(), acc);
        Self::new(grid, values)
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, t: usize) -> f64 {
        self.values[t]
    }

    /// Interval form `c(t) - c(tau)`.
    #[inline]
    pub fn interval(&self, tau: usize, t: usize) -> f64 {
        self.values[t] - self.values[tau]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Per-slot backlog series `B(t) = A(t) - D(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklogSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl BacklogSeries {
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, t: usize) -> f64 {
        self.values[t]
    }
}

/// Backlog of a system with arrivals `a` and departures `d`.
pub fn backlog_of(a: &CumulativePath, d: &CumulativePath) -> Result<BacklogSeries> {
    a.grid.ensure_same(&d.grid)?;
    let mut values = Vec::with_capacity(a.values.len());
    for (t, (&x, &y)) in a.values.iter().zip(&d.values).enumerate() {
        if y > x {
            return Err(Error::Causality {
                slot: t,
                arrivals: x,
                departures: y,
            });
        }
        values.push(x - y);
    }
    Ok(BacklogSeries {
        grid: a.grid,
        values,
    })
}

/// First-come first-served delay `W(t) = inf{w >= 0 : A(t) <= D(t + w)}` in slots.
///
/// Returns `None` when the data arrived by `t` has not departed within the grid.
pub fn fcfs_delay_of(a: &CumulativePath, d: &CumulativePath, t: usize) -> Result<Option<usize>> {
    a.grid.ensure_same(&d.grid)?;
    a.grid.check_slot(t)?;
    let target = a.values[t];
    Ok(d.values[t..].iter().position(|&x| x >= target))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: usize) -> TimeGrid {
        TimeGrid::slots(h).unwrap()
    }

    #[test]
    fn grid_rejects_degenerate_inputs() {
        assert!(TimeGrid::new(0, 1.0).is_err());
        assert!(TimeGrid::new(3, 0.0).is_err());
        assert!(TimeGrid::new(3, f64::NAN).is_err());
    }

    #[test]
    fn triangle_indexing_matches_closure() {
        let g = grid(7);
        let f = BivariateFunction::from_fn(g, |s, t| (t * 10 + s) as f64 * (t > s) as u8 as f64)
            .unwrap();
        for s in 0..=7 {
            for t in s..=7 {
                let expect = if t > s { (t * 10 + s) as f64 } else { 0.0 };
                assert_eq!(f.get(s, t), expect);
            }
            assert_eq!(f.row(s).len(), 8 - s);
        }
    }

    #[test]
    fn diagonal_must_vanish() {
        assert!(matches!(
            BivariateFunction::from_fn(grid(3), |_, _| 1.0),
            Err(Error::NonZeroDiagonal { t: 0, .. })
        ));
    }

    #[test]
    #[should_panic]
    fn lower_triangle_is_a_contract_violation() {
        BivariateFunction::zeros(grid(3)).get(2, 1);
    }

    #[test]
    fn path_validation() {
        let g = grid(3);
        assert!(CumulativePath::new(g, vec![0.0, 1.0, 1.0, 2.0]).is_ok());
        assert!(CumulativePath::new(g, vec![1.0, 1.0, 1.0, 2.0]).is_err());
        assert!(CumulativePath::new(g, vec![0.0, 2.0, 1.0, 2.0]).is_err());
        assert!(CumulativePath::new(g, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn backlog_of_equal_paths_is_zero() {
        let g = grid(4);
        let a = CumulativePath::new(g, vec![0.0, 1.0, 3.0, 3.0, 7.0]).unwrap();
        let b = backlog_of(&a, &a).unwrap();
        assert!(b.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn backlog_detects_causality_violation() {
        let g = grid(2);
        let a = CumulativePath::new(g, vec![0.0, 1.0, 1.0]).unwrap();
        let d = CumulativePath::new(g, vec![0.0, 0.0, 2.0]).unwrap();
        assert!(matches!(
            backlog_of(&a, &d),
            Err(Error::Causality { slot: 2, .. })
        ));
    }

    #[test]
    fn fcfs_delay_of_shifted_cbr() {
        let g = grid(20);
        let a = CumulativePath::new(g, (0..=20).map(|t| t as f64).collect()).unwrap();
        let d = CumulativePath::new(g, (0..=20usize).map(|t| t.saturating_sub(3) as f64).collect())
            .unwrap();
        assert_eq!(fcfs_delay_of(&a, &d, 0).unwrap(), Some(0));
        for t in 1..=17 {
            // direct scan oracle
            let w = (0..).find(|w| t + w <= 20 && a.at(t) <= d.at(t + w));
            assert_eq!(fcfs_delay_of(&a, &d, t).unwrap(), w);
            assert_eq!(w, Some(3));
        }
        assert_eq!(fcfs_delay_of(&a, &d, 19).unwrap(), None);
        assert_eq!(fcfs_delay_of(&a, &a, 5).unwrap(), Some(0));
    }
}
