//! Modal forward simulation of the controlled system.
//!
//! With zero initial data, `theta_n(T)` and `theta_n'(T)` are computed by the
//! closed convolution formulas against `N * z_n` and `z_n + N' * z_n`, and
//! independently by marching the forced modal Volterra equation.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::kernel::NormalizedKernel;
use crate::moment::{ControlSignal, TargetState};
use crate::par;
use crate::spectral::{EigenPair, Spectrum};
use crate::spline::UniformSpline;
use crate::volterra::{ModeResponse, VolterraSolver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub theta: Vec<f64>,
    pub theta_dt: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub grid: TimeGrid,
    pub gamma: f64,
    /// Simulated modes `1..=K_sim`.
    pub modes: Vec<usize>,
    pub kappas: Vec<f64>,
    pub theta_t: Vec<f64>,
    pub theta_dt_t: Vec<f64>,
    pub w_t: Vec<f64>,
    pub w_dt_t: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<Vec<Trajectory>>,
}

impl SimResult {
    fn new(
        grid: TimeGrid,
        gamma: f64,
        pairs: &[&EigenPair],
        theta: Vec<f64>,
        theta_dt: Vec<f64>,
    ) -> Self {
        let (w, wt) = back_transform(&theta, &theta_dt, gamma, grid.horizon());
        Self {
            grid,
            gamma,
            modes: pairs.iter().map(|p| p.index).collect(),
            kappas: pairs.iter().map(|p| p.kappa).collect(),
            theta_t: theta,
            theta_dt_t: theta_dt,
            w_t: w,
            w_dt_t: wt,
            trajectories: None,
        }
    }

    /// Achieved `(xi_n, eta_n)` with `eta_n = theta_n'(T) / kappa_n`.
    pub fn achieved(&self) -> (Vec<f64>, Vec<f64>) {
        let eta = self
            .theta_dt_t
            .iter()
            .zip(&self.kappas)
            .map(|(d, k)| d / k)
            .collect();
        (self.theta_t.clone(), eta)
    }

    /// Relative l2 error over modes `1..=K` of the target.
    pub fn target_error(&self, target: &TargetState) -> Result<f64> {
        let k = target.truncation();
        if self.modes.len() < k {
            return Err(Error::Shape(format!(
                "simulated {} modes, target has {k}",
                self.modes.len()
            )));
        }
        let (xi, eta) = self.achieved();
        let mut diff = 0.0;
        let mut norm = 0.0;
        for n in 0..k {
            diff += (xi[n] - target.xi[n]).powi(2) + (eta[n] - target.eta[n]).powi(2);
            norm += target.xi[n].powi(2) + target.eta[n].powi(2);
        }
        Ok(if norm > 0.0 {
            (diff / norm).sqrt()
        } else {
            diff.sqrt()
        })
    }

    /// `sum (theta_n^2 + (theta_n'/kappa_n)^2)` over modes `lo+1..=hi`.
    pub fn band_energy(&self, lo: usize, hi: usize) -> f64 {
        let (xi, eta) = self.achieved();
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| **m > lo && **m <= hi)
            .map(|(i, _)| xi[i].powi(2) + eta[i].powi(2))
            .sum()
    }

    /// Energy in the uncontrolled modes `K+1..=K_sim`.
    pub fn tail_energy(&self, controlled: usize) -> f64 {
        self.band_energy(controlled, usize::MAX)
    }

    /// Rows `n, theta, theta_t, w, w_t` at `T`.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: Option<&str>) -> Result<()> {
        if let Some(p) = provenance {
            writeln!(out, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "theta", "theta_t", "w", "w_t"])?;
        for i in 0..self.modes.len() {
            w.write_record([
                self.modes[i].to_string(),
                format!("{:.15e}", self.theta_t[i]),
                format!("{:.15e}", self.theta_dt_t[i]),
                format!("{:.15e}", self.w_t[i]),
                format!("{:.15e}", self.w_dt_t[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `w = e^{-2 gamma t} theta`, `w_t = e^{-2 gamma t}(theta_t - 2 gamma theta)`.
pub fn back_transform(theta: &[f64], theta_dt: &[f64], gamma: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let e = (-2.0 * gamma * t).exp();
    let w = theta.iter().map(|v| e * v).collect();
    let wt = theta
        .iter()
        .zip(theta_dt)
        .map(|(v, d)| e * (d - 2.0 * gamma * v))
        .collect();
    (w, wt)
}

/// Inverse of [`back_transform`].
pub fn forward_transform(w: &[f64], w_dt: &[f64], gamma: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let e = (2.0 * gamma * t).exp();
    let theta = w.iter().map(|v| e * v).collect();
    let theta_dt = w
        .iter()
        .zip(w_dt)
        .map(|(v, d)| e * (d + 2.0 * gamma * v))
        .collect();
    (theta, theta_dt)
}

/// Pointwise back-transformation of a trajectory on its grid.
pub fn back_transform_trajectory(grid: &TimeGrid, traj: &Trajectory, gamma: f64) -> Trajectory {
    let mut out = Trajectory {
        theta: Vec::with_capacity(traj.theta.len()),
        theta_dt: Vec::with_capacity(traj.theta.len()),
    };
    for (k, (v, d)) in traj.theta.iter().zip(&traj.theta_dt).enumerate() {
        let (w, wt) = back_transform(&[*v], &[*d], gamma, grid.time(k));
        out.theta.push(w[0]);
        out.theta_dt.push(wt[0]);
    }
    out
}

/// `F_n(t) = int_Gamma (a dphi_n/dnu) f(x, t)`.
pub fn modal_forcing(pair: &EigenPair, control: &ControlSignal) -> Vec<f64> {
    let nodes = control.nodes();
    (0..control.grid.len())
        .map(|k| {
            control
                .boundary
                .nodes
                .iter()
                .enumerate()
                .map(|(j, node)| node.weight * pair.trace[j] * control.values[k * nodes + j])
                .sum()
        })
        .collect()
}

fn simulated_pairs(spectrum: &Spectrum, k_sim: usize) -> Result<Vec<&EigenPair>> {
    if k_sim == 0 || k_sim > spectrum.len() {
        return Err(Error::Precondition(format!(
            "K_sim = {k_sim} outside 1..={}",
            spectrum.len()
        )));
    }
    Ok(spectrum.pairs[..k_sim].iter().collect())
}

fn check_control(grid: &TimeGrid, spectrum: &Spectrum, control: &ControlSignal) -> Result<()> {
    grid.ensure_same(&control.grid)?;
    if control.boundary != spectrum.boundary {
        return Err(Error::Shape(
            "control and spectrum use different boundary quadratures".into(),
        ));
    }
    Ok(())
}

/// `theta_n(T) = -int N*z_n (s) F_n(T-s) ds`, `theta_n'(T) = -int (z_n + N'*z_n)(s) F_n(T-s) ds`.
pub fn simulate_convolution(
    responses: &[ModeResponse],
    kernel: &NormalizedKernel,
    spectrum: &Spectrum,
    control: &ControlSignal,
    k_sim: usize,
) -> Result<SimResult> {
    let pairs = simulated_pairs(spectrum, k_sim)?;
    let first = responses
        .first()
        .ok_or_else(|| Error::Precondition("no responses".into()))?;
    let grid = first.grid;
    check_control(&grid, spectrum, control)?;
    let by_mode: Vec<&ModeResponse> = pairs
        .iter()
        .map(|p| {
            let r = responses
                .iter()
                .find(|r| r.n == p.index as i64)
                .ok_or_else(|| Error::Precondition(format!("no response for mode {}", p.index)))?;
            grid.ensure_same(&r.grid)?;
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let w = grid.trapezoid_weights();
    let last = grid.intervals();
    let values = par::map_range(pairs.len(), |i| {
        let f = modal_forcing(pairs[i], control);
        let r = by_mode[i];
        let mut theta = 0.0;
        let mut theta_dt = 0.0;
        for (s, ws) in w.iter().enumerate() {
            let fs = f[last - s] * ws;
            theta -= r.nz[s] * fs;
            theta_dt -= (r.z[s] + r.npz[s]) * fs;
        }
        (theta, theta_dt)
    });
    let (theta, theta_dt) = values.into_iter().unzip();
    Ok(SimResult::new(grid, kernel.gamma, &pairs, theta, theta_dt))
}

/// Direct march of the forced modal equation; an independent route.
pub fn simulate_march(
    solver: &VolterraSolver,
    spectrum: &Spectrum,
    control: &ControlSignal,
    k_sim: usize,
    keep_trajectories: bool,
) -> Result<SimResult> {
    let pairs = simulated_pairs(spectrum, k_sim)?;
    let grid = *solver.grid();
    check_control(&grid, spectrum, control)?;
    let runs = par::try_map_slice(&pairs, |p| {
        let f = modal_forcing(p, control);
        let spline = UniformSpline::new(grid.horizon(), f.clone());
        solver.solve_forced(p.index, p.lambda_sq, |g: &TimeGrid| {
            if g.len() == f.len() {
                f.clone()
            } else {
                g.sample(|t| spline.eval(t))
            }
        })
    })?;
    let last = grid.intervals();
    let theta = runs.iter().map(|(t, _)| t[last]).collect();
    let theta_dt = runs.iter().map(|(_, d)| d[last]).collect();
    let mut result = SimResult::new(grid, solver.kernel().gamma, &pairs, theta, theta_dt);
    if keep_trajectories {
        result.trajectories = Some(
            runs.into_iter()
                .map(|(theta, theta_dt)| Trajectory { theta, theta_dt })
                .collect(),
        );
    }
    Ok(result)
}

/// JSON verification verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub target_error: f64,
    pub tail_energy: f64,
    pub route_gap: f64,
    pub route_tolerance: f64,
    pub controlled_modes: usize,
    pub simulated_modes: usize,
    pub passed: bool,
}

pub const TARGET_TOLERANCE: f64 = 1e-3;

/// Largest per-mode disagreement between two simulations, relative to the
/// largest coefficient.
pub fn route_gap(a: &SimResult, b: &SimResult) -> Result<f64> {
    if a.modes != b.modes {
        return Err(Error::Shape("simulations cover different modes".into()));
    }
    let scale = a
        .theta_t
        .iter()
        .chain(&a.theta_dt_t)
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let gap = a
        .theta_t
        .iter()
        .zip(&b.theta_t)
        .chain(a.theta_dt_t.iter().zip(&b.theta_dt_t))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(gap / scale)
}

/// `10 C h^2` with `C = T (1 + lambda_max^2) / 12`, for gaps relative to the
/// largest coefficient.
pub fn route_tolerance(grid: &TimeGrid, lambda_sq_max: f64) -> f64 {
    let t = grid.horizon();
    let c = t * (1.0 + lambda_sq_max) / 12.0;
    10.0 * c * grid.step().powi(2)
}

/// Runs both routes, checks their agreement and scores the target.
pub fn verify(
    solver: &VolterraSolver,
    responses: &[ModeResponse],
    spectrum: &Spectrum,
    control: &ControlSignal,
    target: &TargetState,
    k_sim: usize,
) -> Result<(Verdict, SimResult)> {
    let conv = simulate_convolution(responses, solver.kernel(), spectrum, control, k_sim)?;
    let march = simulate_march(solver, spectrum, control, k_sim, false)?;
    let gap = route_gap(&conv, &march)?;
    let lambda_sq_max = spectrum.pairs[k_sim - 1].lambda_sq;
    let tol = route_tolerance(&conv.grid, lambda_sq_max);
    if gap > tol {
        return Err(Error::InternalConsistency {
            what: "convolution and marching simulations".into(),
            gap,
            tol,
        });
    }
    let target_error = conv.target_error(target)?;
    let verdict = Verdict {
        target_error,
        tail_energy: conv.tail_energy(target.truncation()),
        route_gap: gap,
        route_tolerance: tol,
        controlled_modes: target.truncation(),
        simulated_modes: k_sim,
        passed: target_error <= TARGET_TOLERANCE,
    };
    Ok((verdict, conv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::observed_order;
    use crate::grid::Extrapolation;
    use crate::kernel::{normalize, KernelSpec};
    use crate::moment::{synthesize, viscoelastic_family, MomentProblem};
    use crate::spectral::{compute_eigenpairs, DomainSpec, Face};
    use std::f64::consts::PI;

    fn setup(
        spec: &KernelSpec,
        horizon: f64,
        h: f64,
        modes: usize,
        extrap: Extrapolation,
    ) -> (VolterraSolver, Spectrum) {
        let grid = TimeGrid::new(horizon, h).unwrap();
        let kernel = normalize(spec, &grid).unwrap();
        let spectrum = compute_eigenpairs(
            &DomainSpec::interval(PI, vec![Face::Right]),
            modes,
            kernel.alpha,
        )
        .unwrap();
        (VolterraSolver::new(&kernel, extrap).unwrap(), spectrum)
    }

    #[test]
    fn zero_control_gives_zero_state() {
        let (solver, spectrum) = setup(
            &KernelSpec::exponential(1.0, 1.0, 0.2),
            2.0,
            1e-2,
            4,
            Extrapolation::default(),
        );
        let responses = solver.responses(&spectrum.pairs).unwrap();
        let control = ControlSignal::zero(*solver.grid(), spectrum.boundary.clone());
        let a = simulate_convolution(&responses, solver.kernel(), &spectrum, &control, 4).unwrap();
        let b = simulate_march(&solver, &spectrum, &control, 4, true).unwrap();
        for r in [&a, &b] {
            assert!(r.theta_t.iter().chain(&r.theta_dt_t).all(|v| *v == 0.0));
        }
        assert!(b
            .trajectories
            .unwrap()
            .iter()
            .all(|t| t.theta.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn memoryless_sine_formula() {
        let t_end = 2.0;
        let (solver, spectrum) = setup(
            &KernelSpec::zero(0.0),
            t_end,
            1e-3,
            5,
            Extrapolation::default(),
        );
        let responses = solver.responses(&spectrum.pairs).unwrap();
        let control =
            ControlSignal::from_fn(*solver.grid(), spectrum.boundary.clone(), |t, _| t * t);
        let a = simulate_convolution(&responses, solver.kernel(), &spectrum, &control, 5).unwrap();
        for (i, p) in spectrum.pairs.iter().enumerate() {
            let b = p.beta.re;
            let (s, c) = (b * t_end).sin_cos();
            let sine = t_end * t_end / b - 2.0 * (1.0 - c) / b.powi(3);
            let cosine = 2.0 / b * (t_end / b - s / (b * b));
            assert!(
                (a.theta_t[i] + p.trace[0] / b * sine).abs() < 1e-5,
                "mode {}",
                p.index
            );
            assert!(
                (a.theta_dt_t[i] + p.trace[0] * cosine).abs() < 1e-5,
                "mode {}",
                p.index
            );
        }
    }

    fn route_gap_at(h: f64) -> f64 {
        let (solver, spectrum) = setup(
            &KernelSpec::exponential(1.0, 1.0, 0.0),
            2.0,
            h,
            4,
            Extrapolation::NONE,
        );
        let responses = solver.responses(&spectrum.pairs).unwrap();
        let control = ControlSignal::from_fn(*solver.grid(), spectrum.boundary.clone(), |t, _| {
            (1.0 + t).sin() * t
        });
        let a = simulate_convolution(&responses, solver.kernel(), &spectrum, &control, 4).unwrap();
        let b = simulate_march(&solver, &spectrum, &control, 4, false).unwrap();
        route_gap(&a, &b).unwrap()
    }

    #[test]
    fn routes_agree_at_second_order() {
        let gaps: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|h| route_gap_at(*h))
            .collect();
        let order = observed_order(&gaps).unwrap();
        assert!(order >= 1.9, "{gaps:?} order {order}");
    }

    #[test]
    fn wave_energy_is_conserved_after_switch_off() {
        let t_on = 2.0;
        let horizon = t_on + 2.0 * PI;
        let (solver, spectrum) = setup(
            &KernelSpec::zero(0.0),
            horizon,
            1e-3,
            4,
            Extrapolation::default(),
        );
        let control = ControlSignal::from_fn(*solver.grid(), spectrum.boundary.clone(), |t, _| {
            if t < t_on {
                (PI * t / t_on).sin().powi(2)
            } else {
                0.0
            }
        });
        let r = simulate_march(&solver, &spectrum, &control, 4, true).unwrap();
        let grid = solver.grid();
        let start = (t_on / grid.step()).ceil() as usize;
        let trajs = r.trajectories.unwrap();
        let energy = |k: usize| -> f64 {
            trajs
                .iter()
                .zip(&spectrum.pairs)
                .map(|(t, p)| t.theta_dt[k].powi(2) + p.lambda_sq * t.theta[k].powi(2))
                .sum()
        };
        let e0 = energy(start);
        assert!(e0 > 1e-3);
        let drift = (start..grid.len())
            .map(|k| (energy(k) - e0).abs())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-4 * e0, "drift {drift} of {e0}");
    }

    #[test]
    fn back_transformation() {
        let theta = [0.3, -1.2, 2.5];
        let dt = [1.0, 0.5, -0.25];
        let (w, wt) = back_transform(&theta, &dt, 0.0, 4.0);
        assert_eq!((w.as_slice(), wt.as_slice()), (&theta[..], &dt[..]));
        let (w, wt) = back_transform(&theta, &dt, -0.5, 3.0);
        let (t2, d2) = forward_transform(&w, &wt, -0.5, 3.0);
        for i in 0..3 {
            assert!((t2[i] - theta[i]).abs() <= 1e-12 && (d2[i] - dt[i]).abs() <= 1e-12);
        }
        let grid = TimeGrid::new(1.0, 0.5).unwrap();
        let kernel = normalize(&KernelSpec::exponential(1.0, 1.0, 0.0), &grid).unwrap();
        assert_eq!(kernel.gamma, -0.5);
        let traj = Trajectory {
            theta: vec![1.0; 3],
            theta_dt: vec![0.0; 3],
        };
        let w = back_transform_trajectory(&grid, &traj, kernel.gamma);
        for (k, (v, d)) in w.theta.iter().zip(&w.theta_dt).enumerate() {
            let e = grid.time(k).exp();
            assert!((v - e).abs() < 1e-15 && (d - e).abs() < 1e-15);
        }
    }

    #[test]
    fn superposition() {
        let (solver, spectrum) = setup(
            &KernelSpec::exponential(1.0, 1.0, 0.3),
            1.5,
            1e-2,
            3,
            Extrapolation::default(),
        );
        let responses = solver.responses(&spectrum.pairs).unwrap();
        let f1 = ControlSignal::from_fn(*solver.grid(), spectrum.boundary.clone(), |t, _| t.cos());
        let f2 = ControlSignal::from_fn(*solver.grid(), spectrum.boundary.clone(), |t, _| {
            t * t - 1.0
        });
        let sum = f1.add(&f2).unwrap();
        let sim = |f: &ControlSignal| {
            simulate_convolution(&responses, solver.kernel(), &spectrum, f, 3).unwrap()
        };
        let (a, b, c) = (sim(&f1), sim(&f2), sim(&sum));
        for i in 0..3 {
            assert!((a.theta_t[i] + b.theta_t[i] - c.theta_t[i]).abs() < 1e-10);
            assert!((a.theta_dt_t[i] + b.theta_dt_t[i] - c.theta_dt_t[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn synthesized_control_hits_target() {
        let k = 6;
        let (solver, spectrum) = setup(
            &KernelSpec::exponential(1.0, 1.0, 0.0),
            2.5 * PI,
            2e-3,
            4 * k,
            Extrapolation::default(),
        );
        let responses = solver.responses(&spectrum.pairs).unwrap();
        let family = viscoelastic_family(&responses[..k], &spectrum).unwrap();
        let target = TargetState::random(k, 3).unwrap();
        let control = synthesize(&MomentProblem::new(family, &target, 0.0).unwrap()).unwrap();
        let (verdict, result) =
            verify(&solver, &responses, &spectrum, &control, &target, 4 * k).unwrap();
        assert!(verdict.target_error <= 1e-3, "{verdict:?}");
        assert!(verdict.passed);
        let two =
            simulate_convolution(&responses, solver.kernel(), &spectrum, &control, 2 * k).unwrap();
        assert!(result.band_energy(2 * k, 4 * k) <= two.band_energy(k, 2 * k));
        assert!(result.tail_energy(k).is_finite());
    }
}
