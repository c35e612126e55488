//! Strictly monotone lookup tables for open-circuit voltage and potential
//! curves.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("table needs at least two points, got {0}")]
    TooShort(usize),
    #[error("table abscissae must be strictly increasing (row {0})")]
    NonIncreasingX(usize),
    #[error("table values must be strictly monotone (row {0})")]
    NotMonotone(usize),
    #[error("table contains a non-finite entry")]
    NonFinite,
}

/// Piecewise-linear interpolant with strictly monotone values, clamped at
/// both ends of its domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Table1d {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table1d {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, TableError> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(TableError::TooShort(xs.len().min(ys.len())));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(TableError::NonFinite);
        }
        for (i, w) in xs.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(TableError::NonIncreasingX(i + 1));
            }
        }
        let increasing = ys[1] > ys[0];
        for (i, w) in ys.windows(2).enumerate() {
            let ok = if increasing { w[1] > w[0] } else { w[1] < w[0] };
            if !ok {
                return Err(TableError::NotMonotone(i + 1));
            }
        }
        Ok(Table1d { xs, ys })
    }

    /// Samples a function on a uniform grid; handy for analytic curves.
    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, TableError> {
        let xs: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let ys = xs.iter().map(|&x| f(x)).collect();
        Table1d::new(xs, ys)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(0) => 0,
            Err(i) if i >= self.xs.len() => self.xs.len() - 2,
            Err(i) => i - 1,
        }
    }

    /// Interpolated value, clamped to the table range outside the domain.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= *self.xs.last().unwrap() {
            return *self.ys.last().unwrap();
        }
        let i = self.segment(x);
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + w * (self.ys[i + 1] - self.ys[i])
    }

    /// Slope of the interpolant; piecewise constant, taken from the segment
    /// containing `x` (left segment at interior knots, zero outside).
    pub fn slope(&self, x: f64) -> f64 {
        if x < self.xs[0] || x > *self.xs.last().unwrap() {
            return 0.0;
        }
        let i = self.segment(x);
        (self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_and_clamps() {
        let t = Table1d::new(vec![0.0, 1.0, 2.0], vec![3.0, 4.0, 6.0]).unwrap();
        assert_eq!(t.eval(0.5), 3.5);
        assert_eq!(t.eval(1.5), 5.0);
        assert_eq!(t.eval(-1.0), 3.0);
        assert_eq!(t.eval(3.0), 6.0);
        assert_eq!(t.slope(0.5), 1.0);
        assert_eq!(t.slope(1.5), 2.0);
    }

    #[test]
    fn rejects_non_monotone() {
        assert!(Table1d::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 2.0]).is_err());
        assert!(Table1d::new(vec![0.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Table1d::new(vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn decreasing_tables_allowed() {
        let t = Table1d::new(vec![0.0, 1.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(t.eval(0.5), 1.5);
        assert_eq!(t.slope(0.5), -1.0);
    }
}
