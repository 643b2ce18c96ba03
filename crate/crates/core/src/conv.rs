//! Product-trapezoid convolution `(f * g)(t) = int_0^t f(t - s) g(s) ds` on a
//! uniform grid, and an online variant that feeds time-marching schemes.
//!
//! Both use FFTs once the record is long enough; the sums computed are the
//! same trapezoid sums as the direct O(n^2) loops.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::ops::{Add, AddAssign, Div, Mul, Sub};

use crate::error::{Error, Result};

/// Grid sample type: real or complex.
pub trait Sample:
    Copy
    + Send
    + Sync
    + Default
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + 'static
{
    fn to_complex(self) -> Complex64;
    fn from_complex(c: Complex64) -> Self;
    fn magnitude(self) -> f64;
}

impl Sample for f64 {
    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_complex(c: Complex64) -> Self {
        c.re
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Sample for Complex64 {
    fn to_complex(self) -> Complex64 {
        self
    }
    fn from_complex(c: Complex64) -> Self {
        c
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

const DIRECT_LIMIT: usize = 64;

/// `c_k = sum_{j=0}^{k} a_{k-j} b_j` for `k < out_len`.
fn causal_sum<T: Sample>(
    planner: &mut FftPlanner<f64>,
    a: &[f64],
    b: &[T],
    out_len: usize,
) -> Vec<T> {
    let la = a.len().min(out_len);
    let lb = b.len().min(out_len);
    if la.min(lb) <= DIRECT_LIMIT {
        let mut out = vec![T::default(); out_len];
        for (j, bj) in b[..lb].iter().enumerate() {
            for (i, ai) in a[..la.min(out_len - j)].iter().enumerate() {
                out[i + j] += *bj * *ai;
            }
        }
        return out;
    }
    let size = (la + lb - 1).next_power_of_two();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut fa: Vec<Complex64> = a[..la].iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fa.resize(size, Complex64::default());
    let mut fb: Vec<Complex64> = b[..lb].iter().map(|v| v.to_complex()).collect();
    fb.resize(size, Complex64::default());
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= *y;
    }
    inv.process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..out_len]
        .iter()
        .map(|c| T::from_complex(*c * scale))
        .collect()
}

/// Product-trapezoid convolution of grid samples; exact for piecewise-linear
/// integrands and zero at `t = 0`.
pub fn convolve<T: Sample>(f: &[f64], g: &[T], step: f64) -> Result<Vec<T>> {
    if f.len() != g.len() {
        return Err(Error::Shape(format!(
            "convolution operands have {} and {} samples",
            f.len(),
            g.len()
        )));
    }
    let n = f.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut planner = FftPlanner::new();
    let raw = causal_sum(&mut planner, f, g, n);
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            if k == 0 {
                T::default()
            } else {
                (s - (g[0] * f[k] + g[k] * f[0]) * 0.5) * step
            }
        })
        .collect())
}

/// Online causal convolution for marching schemes.
///
/// For `m = 0..n` the callback receives `m` and the history sum
/// `sum_{j<m} kernel[m-j] * w_j y_j` (with `w_0 = 1/2`, `w_j = 1` otherwise)
/// and returns `y_m`. History contributions are assembled by
/// divide-and-conquer with FFT blocks, so the total cost is O(n log^2 n).
pub fn march<T, F>(kernel: &[f64], n: usize, mut step: F) -> Vec<T>
where
    T: Sample,
    F: FnMut(usize, T) -> T,
{
    assert!(kernel.len() >= n, "kernel shorter than the march");
    let mut state = March {
        kernel,
        hist: vec![T::default(); n],
        y: vec![T::default(); n],
        weighted: vec![T::default(); n],
        planner: FftPlanner::new(),
    };
    if n > 0 {
        state.solve(0, n, &mut step);
    }
    state.y
}

struct March<'a, T> {
    kernel: &'a [f64],
    hist: Vec<T>,
    y: Vec<T>,
    weighted: Vec<T>,
    planner: FftPlanner<f64>,
}

const LEAF: usize = 32;

impl<T: Sample> March<'_, T> {
    fn solve(&mut self, lo: usize, hi: usize, step: &mut dyn FnMut(usize, T) -> T) {
        if hi - lo <= LEAF {
            for m in lo..hi {
                let mut acc = self.hist[m];
                for j in lo..m {
                    acc += self.weighted[j] * self.kernel[m - j];
                }
                self.hist[m] = acc;
                let ym = step(m, acc);
                self.y[m] = ym;
                self.weighted[m] = if m == 0 { ym * 0.5 } else { ym };
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        self.solve(lo, mid, step);
        let block = causal_sum(
            &mut self.planner,
            &self.kernel[..hi - lo],
            &self.weighted[lo..mid],
            hi - lo,
        );
        for m in mid..hi {
            self.hist[m] += block[m - lo];
        }
        self.solve(mid, hi, step);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct<T: Sample>(f: &[f64], g: &[T], h: f64) -> Vec<T> {
        (0..f.len())
            .map(|k| {
                if k == 0 {
                    return T::default();
                }
                let mut acc = (g[0] * f[k] + g[k] * f[0]) * 0.5;
                for j in 1..k {
                    acc += g[j] * f[k - j];
                }
                acc * h
            })
            .collect()
    }

    #[test]
    fn ones_give_t() {
        let h = 0.01;
        let one = vec![1.0; 501];
        let c = convolve(&one, &one, h).unwrap();
        for (k, v) in c.iter().enumerate() {
            assert!((v - k as f64 * h).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_against_constant_is_exact() {
        let h = 1e-3;
        let n = 3001;
        let t: Vec<f64> = (0..n).map(|k| k as f64 * h).collect();
        let one = vec![1.0; n];
        let c = convolve(&t, &one, h).unwrap();
        for (k, v) in c.iter().enumerate() {
            assert!((v - t[k] * t[k] / 2.0).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn commutative() {
        let h = 2e-3;
        let f: Vec<f64> = (0..2000).map(|k| (k as f64 * h).sin() + 0.3).collect();
        let g: Vec<f64> = (0..2000).map(|k| (-(k as f64) * h).exp()).collect();
        let a = convolve(&f, &g, h).unwrap();
        let b = convolve(&g, &f, h).unwrap();
        let gap = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-12);
    }

    #[test]
    fn fft_matches_direct_for_complex() {
        let h = 1e-2;
        let f: Vec<f64> = (0..700).map(|k| (0.01 * k as f64).cos()).collect();
        let g: Vec<Complex64> = (0..700)
            .map(|k| Complex64::new(0.0, 3.0 * k as f64 * h).exp())
            .collect();
        let a = convolve(&f, &g, h).unwrap();
        let b = direct(&f, &g, h);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        assert!(convolve(&[1.0, 2.0], &[1.0], 0.1).is_err());
    }

    #[test]
    fn online_matches_direct_history() {
        let kernel: Vec<f64> = (0..1000).map(|k| 1.0 / (1.0 + k as f64)).collect();
        // y_m = 0.5 + 1e-3 * hist_m, compared with an O(n^2) reference.
        let y = march::<f64, _>(&kernel, 1000, |_, hist| 0.5 + 1e-3 * hist);
        let mut reference = vec![0.0; 1000];
        for m in 0..1000 {
            let mut hist = 0.0;
            for j in 0..m {
                let w = if j == 0 { 0.5 } else { 1.0 };
                hist += kernel[m - j] * w * reference[j];
            }
            reference[m] = 0.5 + 1e-3 * hist;
        }
        for (a, b) in y.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
