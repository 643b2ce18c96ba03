//! Modal Volterra equations
//!
//! `z' = 2 alpha z - lambda^2 N * z`, `z(0) = 1`, and the forced version for
//! `Z` with `K = N' + i kappa N`. Both are marched in integrated form,
//! `y = g + k * y` with `k(t) = 2 alpha - lambda^2 int_0^t N`, by the product
//! trapezoid rule (implicit in the local term). Every grid quantity is
//! computed on nested grids and Romberg-combined.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::conv::{self, Sample};
use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::grid::{romberg, Extrapolation, TimeGrid};
use crate::kernel::NormalizedKernel;
use crate::par;
use crate::spectral::EigenPair;

/// Largest admissible `lambda h` on the coarsest grid.
pub const MAX_LAMBDA_STEP: f64 = 1.0;

struct Level {
    kernel: NormalizedKernel,
    /// `int_0^t N`, trapezoid with endpoint correction.
    p: Vec<f64>,
    /// `N_1' - L * N_1'`, the kernel of the transformed-exponential comparator.
    comparator: Vec<f64>,
}

impl Level {
    fn new(kernel: NormalizedKernel) -> Result<Self> {
        let h = kernel.grid.step();
        let mut p = Vec::with_capacity(kernel.n.len());
        let mut acc = 0.0;
        p.push(0.0);
        for k in 1..kernel.n.len() {
            acc += 0.5 * h * (kernel.n[k - 1] + kernel.n[k]);
            p.push(acc - h * h / 12.0 * (kernel.np[k] - kernel.np[0]));
        }
        let lk = conv::convolve(&kernel.l, &kernel.n1p, h)?;
        let comparator = kernel.n1p.iter().zip(&lk).map(|(a, b)| a - b).collect();
        Ok(Self {
            kernel,
            p,
            comparator,
        })
    }

    fn step(&self) -> f64 {
        self.kernel.grid.step()
    }

    /// Solves `y = g + k * y`, `k = 2 alpha - lambda^2 P`.
    fn march<T: Sample>(&self, alpha: f64, lambda_sq: f64, g: &[T]) -> Vec<T> {
        let h = self.step();
        let k: Vec<f64> = self.p.iter().map(|p| 2.0 * alpha - lambda_sq * p).collect();
        let denom = 1.0 - 0.5 * h * k[0];
        conv::march(&k, g.len(), |m, hist: T| {
            if m == 0 {
                g[0]
            } else {
                (g[m] + hist * h) / denom
            }
        })
    }
}

/// Shared per-grid data for all modes.
pub struct VolterraSolver {
    grid: TimeGrid,
    alpha: f64,
    levels: Vec<Level>,
}

/// Result of solving for `Z` by both routes.
#[derive(Debug, Clone)]
pub struct ZSolution {
    pub z: Vec<f64>,
    /// `N * z`.
    pub nz: Vec<f64>,
    /// `N' * z`.
    pub npz: Vec<f64>,
    /// Direct march of the forced equation.
    pub direct: Vec<Complex64>,
    /// `z + N' * z + i kappa N * z`.
    pub variation: Vec<Complex64>,
    pub gap: f64,
    pub tolerance: f64,
}

impl VolterraSolver {
    pub fn new(kernel: &NormalizedKernel, extrapolation: Extrapolation) -> Result<Self> {
        Self::with_alpha(kernel, kernel.alpha, extrapolation)
    }

    /// Uses `alpha` in place of the kernel's own `c + gamma`.
    pub fn with_alpha(
        kernel: &NormalizedKernel,
        alpha: f64,
        extrapolation: Extrapolation,
    ) -> Result<Self> {
        let grid = kernel.grid;
        let count = extrapolation.levels.max(1);
        let kernels: Vec<NormalizedKernel> = (0..count)
            .map(|l| {
                if l == 0 {
                    Ok(kernel.clone())
                } else {
                    kernel.on_grid(&grid.refine(1 << l))
                }
            })
            .collect::<Result<_>>()?;
        let levels = kernels.into_iter().map(Level::new).collect::<Result<_>>()?;
        Ok(Self {
            grid,
            alpha,
            levels,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kernel(&self) -> &NormalizedKernel {
        &self.levels[0].kernel
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    fn extrapolate<T, F>(&self, compute: F) -> Result<Vec<T>>
    where
        T: Sample,
        F: Fn(&Level) -> Result<Vec<T>>,
    {
        let mut rows = Vec::with_capacity(self.levels.len());
        for (l, level) in self.levels.iter().enumerate() {
            let fine = compute(level)?;
            rows.push(fine.into_iter().step_by(1 << l).collect::<Vec<T>>());
        }
        Ok(romberg(rows))
    }

    fn check_step(&self, mode: usize, lambda_sq: f64) -> Result<()> {
        let lh = lambda_sq.abs().sqrt() * self.grid.step();
        if lh > MAX_LAMBDA_STEP {
            return Err(Error::StepSize {
                mode,
                lambda_sq,
                reason: format!("lambda h = {lh:.3} exceeds {MAX_LAMBDA_STEP}"),
            });
        }
        Ok(())
    }

    fn check_growth<T: Sample>(&self, mode: usize, lambda_sq: f64, y: &[T]) -> Result<()> {
        let bound = 1e3 * ((2.0 * self.alpha.abs() + 1.0) * self.grid.horizon()).exp();
        let peak = y.iter().map(|v| v.magnitude()).fold(0.0, f64::max);
        if !(peak <= bound) {
            return Err(Error::StepSize {
                mode,
                lambda_sq,
                reason: format!(
                    "solution grows to {peak:.3e}, beyond the Gronwall bound {bound:.3e}"
                ),
            });
        }
        Ok(())
    }

    pub fn solve_z(&self, mode: usize, lambda_sq: f64) -> Result<Vec<f64>> {
        self.check_step(mode, lambda_sq)?;
        let z = self.extrapolate(|level| {
            let g = vec![1.0; level.kernel.grid.len()];
            Ok(level.march(self.alpha, lambda_sq, &g))
        })?;
        self.check_growth(mode, lambda_sq, &z)?;
        Ok(z)
    }

    /// `theta' = 2 alpha theta - lambda^2 N * theta - N * F`, `theta(0) = 0`,
    /// with `F` sampled on each level's grid by `forcing`.
    /// Returns `(theta, theta')`.
    pub fn solve_forced<F>(
        &self,
        mode: usize,
        lambda_sq: f64,
        forcing: F,
    ) -> Result<(Vec<f64>, Vec<f64>)>
    where
        F: Fn(&TimeGrid) -> Vec<f64>,
    {
        self.check_step(mode, lambda_sq)?;
        let both = self.extrapolate(|level| {
            let h = level.step();
            let f = forcing(&level.kernel.grid);
            if f.len() != level.kernel.grid.len() {
                return Err(Error::Shape(format!(
                    "forcing has {} samples, grid {}",
                    f.len(),
                    level.kernel.grid.len()
                )));
            }
            let pf = conv::convolve(&level.p, &f, h)?;
            let g: Vec<f64> = pf.iter().map(|v| -v).collect();
            let theta = level.march(self.alpha, lambda_sq, &g);
            let nt = conv::convolve(&level.kernel.n, &theta, h)?;
            let nf = conv::convolve(&level.kernel.n, &f, h)?;
            Ok(theta
                .iter()
                .zip(nt.iter().zip(&nf))
                .map(|(t, (a, b))| Complex64::new(*t, 2.0 * self.alpha * t - lambda_sq * a - b))
                .collect::<Vec<Complex64>>())
        })?;
        Ok(both.into_iter().map(|v| (v.re, v.im)).unzip())
    }

    /// `Z` by direct marching and by variation of constants.
    pub fn solve_big_z(&self, pair: &EigenPair) -> Result<ZSolution> {
        let mode = pair.index;
        let lambda_sq = pair.lambda_sq;
        self.check_step(mode, lambda_sq)?;
        let kappa = pair.kappa;
        let mut rows: [Vec<Vec<f64>>; 3] = Default::default();
        let mut direct_rows = Vec::with_capacity(self.levels.len());
        for (l, level) in self.levels.iter().enumerate() {
            let len = level.kernel.grid.len();
            let h = level.step();
            let zl = level.march(self.alpha, lambda_sq, &vec![1.0; len]);
            let nz = conv::convolve(&level.kernel.n, &zl, h)?;
            let npz = conv::convolve(&level.kernel.np, &zl, h)?;
            let g: Vec<Complex64> = level
                .kernel
                .n
                .iter()
                .zip(&level.p)
                .map(|(n, p)| Complex64::new(*n, kappa * p))
                .collect();
            let dl = level.march(self.alpha, lambda_sq, &g);
            let every = 1 << l;
            for (row, v) in rows.iter_mut().zip([zl, nz, npz]) {
                row.push(v.into_iter().step_by(every).collect());
            }
            direct_rows.push(dl.into_iter().step_by(every).collect::<Vec<_>>());
        }
        let [z, nz, npz] = rows.map(romberg);
        let direct = romberg(direct_rows);
        self.check_growth(mode, lambda_sq, &z)?;
        self.check_growth(mode, lambda_sq, &direct)?;
        let variation: Vec<Complex64> = (0..z.len())
            .map(|k| Complex64::new(z[k] + npz[k], kappa * nz[k]))
            .collect();
        let gap = direct
            .iter()
            .zip(&variation)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let h = self.grid.step();
        let t = self.grid.horizon().max(1.0);
        let tolerance = (10.0
            * h
            * h
            * (1.0 + lambda_sq.abs()).powf(1.5)
            * t
            * (2.0 * self.alpha.abs() * t).exp())
        .max(1e-9);
        if !(gap <= tolerance) {
            return Err(Error::InternalConsistency {
                what: format!("two routes for Z disagree for mode {mode}"),
                gap,
                tol: tolerance,
            });
        }
        Ok(ZSolution {
            z,
            nz,
            npz,
            direct,
            variation,
            gap,
            tolerance,
        })
    }

    /// `G = p + N_1 * p` with `p = e^{i beta t} + (alpha/beta) sin(beta t)`,
    /// or `p = 1 + (alpha + i) t` on the degenerate set.
    pub fn build_g(&self, pair: &EigenPair) -> Result<Vec<Complex64>> {
        let alpha = self.alpha;
        let profile = move |t: f64| -> Complex64 {
            if pair.in_j {
                Complex64::new(1.0 + alpha * t, t)
            } else {
                let b = pair.beta;
                let ib = Complex64::i() * b * t;
                ib.exp() + (b * t).sin() * (alpha / b)
            }
        };
        self.extrapolate(|level| {
            let p = level.kernel.grid.sample(profile);
            let conv = conv::convolve(&level.kernel.n1, &p, level.step())?;
            Ok(p.iter().zip(conv).map(|(a, b)| a + b).collect())
        })
    }

    /// `E + (1/2) k * (s E)` with `k = N_1' - L * N_1'` and `E` the memoryless
    /// `S`: `e^{i beta t} + (alpha/beta) sin(beta t)`.
    pub fn comparator(&self, pair: &EigenPair) -> Result<Vec<Complex64>> {
        let b = pair.beta;
        let alpha = self.alpha;
        if pair.in_j {
            return Err(Error::Precondition(
                "the comparator is defined off the degenerate set".into(),
            ));
        }
        self.extrapolate(|level| {
            let e = level
                .kernel
                .grid
                .sample(|t| (Complex64::i() * b * t).exp() + (b * t).sin() * (alpha / b));
            let se: Vec<Complex64> = level
                .kernel
                .grid
                .times()
                .iter()
                .zip(&e)
                .map(|(t, v)| v * *t)
                .collect();
            let conv = conv::convolve(&level.comparator, &se, level.step())?;
            Ok(e.iter().zip(conv).map(|(a, c)| a + c * 0.5).collect())
        })
    }

    pub fn response(&self, pair: &EigenPair) -> Result<ModeResponse> {
        let zs = self.solve_big_z(pair)?;
        let g = self.build_g(pair)?;
        let k: Vec<Complex64> = {
            let ker = self.kernel();
            ker.np
                .iter()
                .zip(&ker.n)
                .map(|(np, n)| Complex64::new(*np, pair.kappa * n))
                .collect()
        };
        let s = self
            .grid
            .times()
            .iter()
            .zip(&zs.direct)
            .map(|(t, z)| z * (-self.alpha * t).exp())
            .collect();
        Ok(ModeResponse {
            n: pair.index as i64,
            lambda_sq: pair.lambda_sq,
            beta: pair.beta,
            kappa: pair.kappa,
            in_j: pair.in_j,
            alpha: self.alpha,
            grid: self.grid,
            z: zs.z,
            nz: zs.nz,
            npz: zs.npz,
            big_z: zs.direct,
            s,
            g,
            k,
            route_gap: zs.gap,
            route_tolerance: zs.tolerance,
        })
    }

    /// Responses for all pairs, in order.
    pub fn responses(&self, pairs: &[EigenPair]) -> Result<Vec<ModeResponse>> {
        par::try_map_slice(pairs, |p| self.response(p))
    }
}

/// Solves for `z` with the default extrapolation.
pub fn solve_z(kernel: &NormalizedKernel, lambda_sq: f64, alpha: f64) -> Result<Vec<f64>> {
    VolterraSolver::with_alpha(kernel, alpha, Extrapolation::default())?.solve_z(0, lambda_sq)
}

/// Solves for `Z` with the default extrapolation and checks both routes.
#[allow(non_snake_case)]
pub fn solve_Z(kernel: &NormalizedKernel, pair: &EigenPair) -> Result<Vec<Complex64>> {
    Ok(VolterraSolver::new(kernel, Extrapolation::default())?
        .solve_big_z(pair)?
        .direct)
}

/// `(S, G)` for a solved `Z`.
#[allow(non_snake_case)]
pub fn build_S_G(
    kernel: &NormalizedKernel,
    pair: &EigenPair,
    Z: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if Z.len() != kernel.grid.len() {
        return Err(Error::Shape(format!(
            "Z has {} samples, grid has {}",
            Z.len(),
            kernel.grid.len()
        )));
    }
    let solver = VolterraSolver::new(kernel, Extrapolation::default())?;
    let s = kernel
        .grid
        .times()
        .iter()
        .zip(Z)
        .map(|(t, z)| z * (-kernel.alpha * t).exp())
        .collect();
    Ok((s, solver.build_g(pair)?))
}

/// Grid samples of one modal response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResponse {
    /// Signed index; negative indices are conjugates of positive ones.
    pub n: i64,
    pub lambda_sq: f64,
    pub beta: Complex64,
    pub kappa: f64,
    pub in_j: bool,
    pub alpha: f64,
    pub grid: TimeGrid,
    pub z: Vec<f64>,
    pub nz: Vec<f64>,
    pub npz: Vec<f64>,
    pub big_z: Vec<Complex64>,
    pub s: Vec<Complex64>,
    pub g: Vec<Complex64>,
    pub k: Vec<Complex64>,
    pub route_gap: f64,
    pub route_tolerance: f64,
}

impl ModeResponse {
    /// The response at `-n`.
    pub fn conjugate(&self) -> ModeResponse {
        let conj = |v: &[Complex64]| v.iter().map(|c| c.conj()).collect::<Vec<_>>();
        ModeResponse {
            n: -self.n,
            beta: -self.beta,
            big_z: conj(&self.big_z),
            s: conj(&self.s),
            g: conj(&self.g),
            k: conj(&self.k),
            ..self.clone()
        }
    }

    /// Prefix on `[0, t_intervals]`.
    pub fn truncate(&self, intervals: usize) -> ModeResponse {
        let len = intervals + 1;
        ModeResponse {
            grid: self.grid.truncate(intervals),
            z: self.z[..len].to_vec(),
            nz: self.nz[..len].to_vec(),
            npz: self.npz[..len].to_vec(),
            big_z: self.big_z[..len].to_vec(),
            s: self.s[..len].to_vec(),
            g: self.g[..len].to_vec(),
            k: self.k[..len].to_vec(),
            ..self.clone()
        }
    }

    /// `sup_t |S(t) - e^{i beta t}|`.
    pub fn asymptotic_residual(&self) -> f64 {
        self.grid
            .times()
            .iter()
            .zip(&self.s)
            .map(|(t, s)| (s - (Complex64::i() * self.beta * *t).exp()).norm())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, Re Z, Im Z, Re S, Im S, Re G, Im G`.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: Option<&str>) -> Result<()> {
        if let Some(p) = provenance {
            writeln!(out, "# {p}")?;
        }
        writeln!(out, "# mode {}", self.n)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "re_Z", "im_Z", "re_S", "im_S", "re_G", "im_G"])?;
        for k in 0..self.grid.len() {
            w.write_record([
                format!("{:.15e}", self.grid.time(k)),
                format!("{:.15e}", self.big_z[k].re),
                format!("{:.15e}", self.big_z[k].im),
                format!("{:.15e}", self.s[k].re),
                format!("{:.15e}", self.s[k].im),
                format!("{:.15e}", self.g[k].re),
                format!("{:.15e}", self.g[k].im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fit of `sup |S_n - e^{i beta_n t}|` against `beta_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub indices: Vec<i64>,
    pub betas: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `sup_t |S_n(t)|` per mode.
    pub envelopes: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Fitted slope of the envelope against `n` over the top half of modes.
    pub envelope_trend: f64,
    pub max_route_gap: f64,
}

/// Needs at least 8 responses with real positive `beta`.
pub fn asymptotic_residual(responses: &[ModeResponse]) -> Result<ResidualReport> {
    let usable: Vec<&ModeResponse> = responses
        .iter()
        .filter(|r| r.n > 0 && !r.in_j && r.beta.im == 0.0 && r.beta.re > 0.0)
        .collect();
    if usable.len() < 8 {
        return Err(Error::Precondition(format!(
            "asymptotic residual fit needs at least 8 modes with real beta, got {}",
            usable.len()
        )));
    }
    let betas: Vec<f64> = usable.iter().map(|r| r.beta.re).collect();
    let residuals: Vec<f64> = usable.iter().map(|r| r.asymptotic_residual()).collect();
    let envelopes: Vec<f64> = usable
        .iter()
        .map(|r| r.s.iter().map(|s| s.norm()).fold(0.0, f64::max))
        .collect();
    let fit = loglog_fit(&betas, &residuals).unwrap_or(crate::fit::LineFit {
        slope: f64::NEG_INFINITY,
        intercept: f64::NEG_INFINITY,
    });
    let half = usable.len() / 2;
    let idx: Vec<f64> = usable[half..].iter().map(|r| r.n as f64).collect();
    let trend = loglog_fit(&idx, &envelopes[half..])
        .map(|f| f.slope)
        .unwrap_or(0.0);
    Ok(ResidualReport {
        indices: usable.iter().map(|r| r.n).collect(),
        betas,
        residuals,
        envelopes,
        slope: fit.slope,
        intercept: fit.intercept,
        envelope_trend: trend,
        max_route_gap: usable.iter().map(|r| r.route_gap).fold(0.0, f64::max),
    })
}
