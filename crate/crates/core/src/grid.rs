//! Uniform time grids shared by every module, plus the Richardson
//! (Romberg) machinery that lifts order-2 grid computations to high order.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Uniform grid `t_k = k h`, `k = 0..=intervals`, on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    step: f64,
    intervals: usize,
}

impl TimeGrid {
    /// Grid with horizon exactly `horizon` and step as close as possible to
    /// (and not larger than) `step`.
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Precondition(format!(
                "grid step must be positive, got {step}"
            )));
        }
        if !(horizon >= step) || !horizon.is_finite() {
            return Err(Error::Precondition(format!(
                "horizon {horizon} must be at least the grid step {step}"
            )));
        }
        let intervals = (horizon / step - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            step: horizon / intervals as f64,
            intervals,
        })
    }

    pub fn from_intervals(step: f64, intervals: usize) -> Self {
        assert!(step > 0.0 && intervals > 0);
        Self { step, intervals }
    }

    /// Grid step that resolves the fastest oscillation: `h <= min(T/1000, 0.2/beta_max)`.
    pub fn auto(horizon: f64, beta_max: f64) -> Result<Self> {
        let mut h = horizon / 1000.0;
        if beta_max > 0.0 {
            h = h.min(0.2 / beta_max);
        }
        Self::new(horizon, h)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of samples, `intervals + 1`.
    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.step * self.intervals as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.step * k as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.time(k)).collect()
    }

    pub fn sample<F: Fn(f64) -> T, T>(&self, f: F) -> Vec<T> {
        (0..self.len()).map(|k| f(self.time(k))).collect()
    }

    /// Same horizon, step divided by `factor`.
    pub fn refine(&self, factor: usize) -> Self {
        Self {
            step: self.step / factor as f64,
            intervals: self.intervals * factor,
        }
    }

    /// Prefix grid `[0, t_intervals]`.
    pub fn truncate(&self, intervals: usize) -> Self {
        assert!(intervals >= 1 && intervals <= self.intervals);
        Self {
            step: self.step,
            intervals,
        }
    }

    /// Index of the node closest to `t`, or an error when `t` is not a node.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.step).round();
        if k < 0.0
            || k as usize > self.intervals
            || (k * self.step - t).abs() > 1e-9 * t.abs().max(1.0)
        {
            return Err(Error::Shape(format!(
                "time {t} is not a node of the grid (h = {})",
                self.step
            )));
        }
        Ok(k as usize)
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.step; self.len()];
        w[0] *= 0.5;
        w[self.intervals] *= 0.5;
        w
    }

    pub fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self.intervals != other.intervals || (self.step - other.step).abs() > 1e-14 * self.step {
            return Err(Error::Shape(format!(
                "grid mismatch: (h={}, n={}) vs (h={}, n={})",
                self.step, self.intervals, other.step, other.intervals
            )));
        }
        Ok(())
    }
}

/// Trapezoid integral of grid samples.
pub fn trapezoid<T>(values: &[T], step: f64) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T> + Default,
{
    let n = values.len();
    if n < 2 {
        return T::default();
    }
    let mut acc = T::default();
    for v in &values[1..n - 1] {
        acc = acc + *v;
    }
    (acc + (values[0] + values[n - 1]) * 0.5) * step
}

/// High-order integral of uniformly sampled data (Gregory end corrections
/// for long records, closed Newton-Cotes for short ones). Used as an
/// independent check on trapezoid-based computations.
pub fn integrate_high_order<T>(values: &[T], step: f64) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T> + Default,
{
    let n = values.len();
    let w: &[f64] = match n {
        0 | 1 => return T::default(),
        2 => &[0.5, 0.5],
        3 => &[1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0],
        4 => &[3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0],
        5 => &[
            14.0 / 45.0,
            64.0 / 45.0,
            24.0 / 45.0,
            64.0 / 45.0,
            14.0 / 45.0,
        ],
        6 => &[
            95.0 / 288.0,
            375.0 / 288.0,
            250.0 / 288.0,
            250.0 / 288.0,
            375.0 / 288.0,
            95.0 / 288.0,
        ],
        _ => {
            const END: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
            let mut acc = T::default();
            for (k, v) in values.iter().enumerate() {
                let wk = if k < 3 {
                    END[k]
                } else if k >= n - 3 {
                    END[n - 1 - k]
                } else {
                    1.0
                };
                acc = acc + *v * wk;
            }
            return acc * step;
        }
    };
    let mut acc = T::default();
    for (v, wk) in values.iter().zip(w) {
        acc = acc + *v * *wk;
    }
    acc * step
}

/// Number of grid levels used for Richardson extrapolation (1 = plain order 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub levels: usize,
}

impl Default for Extrapolation {
    fn default() -> Self {
        Self { levels: 3 }
    }
}

impl Extrapolation {
    pub const NONE: Extrapolation = Extrapolation { levels: 1 };

    /// Runs `compute` on `grid`, `grid/2`, ... and Romberg-combines the
    /// results at the coarse nodes, assuming an even-power error expansion.
    pub fn apply<T, F>(&self, grid: &TimeGrid, compute: F) -> Result<Vec<T>>
    where
        T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
        F: Fn(&TimeGrid) -> Result<Vec<T>>,
    {
        let levels = self.levels.max(1);
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(levels);
        for level in 0..levels {
            let factor = 1usize << level;
            let fine = compute(&grid.refine(factor))?;
            if fine.len() != grid.intervals() * factor + 1 {
                return Err(Error::Shape(format!(
                    "level {level} produced {} samples, expected {}",
                    fine.len(),
                    grid.intervals() * factor + 1
                )));
            }
            rows.push(fine.into_iter().step_by(factor).collect());
        }
        Ok(romberg(rows))
    }
}

/// Romberg combination of successively halved-step results sampled on a
/// common grid (`rows[0]` coarsest).
pub fn romberg<T>(mut rows: Vec<Vec<T>>) -> Vec<T>
where
    T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T>,
{
    let levels = rows.len();
    for j in 1..levels {
        let denom = 4f64.powi(j as i32) - 1.0;
        for l in (j..levels).rev() {
            let (lo, hi) = rows.split_at_mut(l);
            let coarse = &lo[l - 1];
            for (f, c) in hi[0].iter_mut().zip(coarse) {
                *f = *f + (*f - *c) * (1.0 / denom);
            }
        }
    }
    rows.pop().expect("at least one level")
}
