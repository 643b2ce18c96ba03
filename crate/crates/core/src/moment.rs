//! Moment problems and synthesis of real boundary controls.
//!
//! A family member `e_n` with moment data `c_n` asks for a real `u` on
//! `[0, T] x Gamma` with `int e_n u = c_n`. The physical control is
//! `f(T - s) = e^{-d s} u(s)`, where `d` is the damping weight of the
//! problem (the telegraph parameter `c` for the telegraph family, zero for
//! the viscoelastic one).

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::par;
use crate::riesz::{
    certify, gram_matrix, GridFunction, Member, SequenceFamily, DEFAULT_CONDITION_CAP,
};
use crate::spectral::{BoundaryQuadrature, EigenPair, Spectrum};
use crate::volterra::{ModeResponse, VolterraSolver};

/// Target coefficients of `theta(T)` in `{phi_n}` and of `theta_t(T)` in
/// `{kappa_n phi_n}`, for modes `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl TargetState {
    pub fn new(xi: Vec<f64>, eta: Vec<f64>) -> Result<Self> {
        if xi.len() != eta.len() || xi.is_empty() {
            return Err(Error::Shape(format!(
                "xi has {} entries, eta has {}",
                xi.len(),
                eta.len()
            )));
        }
        if xi.iter().chain(&eta).any(|v| !v.is_finite()) {
            return Err(Error::Precondition(
                "target coefficients must be finite".into(),
            ));
        }
        Ok(Self { xi, eta })
    }

    /// Position `e_mode` and zero velocity, over `k` modes.
    pub fn unit_position(k: usize, mode: usize) -> Result<Self> {
        let mut xi = vec![0.0; k];
        *xi.get_mut(mode.wrapping_sub(1))
            .ok_or_else(|| Error::Precondition(format!("mode {mode} outside 1..={k}")))? = 1.0;
        Self::new(xi, vec![0.0; k])
    }

    /// Uniform random coefficients in `[-1, 1]`.
    pub fn random(k: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let eta = (0..k).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Self::new(xi, eta)
    }

    pub fn truncation(&self) -> usize {
        self.xi.len()
    }

    /// Converts a physical target `(w(T), w_t(T))` into `theta` coordinates,
    /// `theta = e^{2 gamma T} w`, `theta_t = e^{2 gamma T}(w_t + 2 gamma w)`.
    pub fn from_physical(
        w: &[f64],
        wt: &[f64],
        kappas: &[f64],
        gamma: f64,
        horizon: f64,
    ) -> Result<Self> {
        if kappas.len() < w.len() {
            return Err(Error::Shape("fewer kappa values than target modes".into()));
        }
        let e = (2.0 * gamma * horizon).exp();
        let xi = w.iter().map(|v| e * v).collect();
        let eta = w
            .iter()
            .zip(wt)
            .zip(kappas)
            .map(|((x, v), k)| e * (k * v + 2.0 * gamma * x) / k)
            .collect();
        Self::new(xi, eta)
    }
}

/// `-1` when `Psi_{-n} = -Psi_n` (real nonzero `beta`), `+1` otherwise.
pub fn conjugation_sign(beta: Complex64, in_j: bool) -> f64 {
    if !in_j && beta.im == 0.0 && beta.re != 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `c_n = -(eta_n + i xi_n)` for `n > 0` and `c_{-n} = s_n conj(c_n)`,
/// aligned with the members of `family`.
pub fn assemble_rhs(target: &TargetState, family: &SequenceFamily) -> Result<Vec<Complex64>> {
    family
        .members
        .iter()
        .map(|m| {
            let n = m.index.unsigned_abs() as usize;
            if n == 0 || n > target.truncation() {
                return Err(Error::Precondition(format!(
                    "member {} has no target coefficient (K = {})",
                    m.index,
                    target.truncation()
                )));
            }
            let c = -Complex64::new(target.eta[n - 1], target.xi[n - 1]);
            Ok(if m.index > 0 {
                c
            } else {
                c.conj() * conjugation_sign(-m.beta, false)
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProblem {
    pub family: SequenceFamily,
    pub rhs: Vec<Complex64>,
    pub horizon: f64,
    /// `u(s) = e^{d s} f(T - s)`.
    pub damping: f64,
}

impl MomentProblem {
    pub fn new(family: SequenceFamily, target: &TargetState, damping: f64) -> Result<Self> {
        let k = target.truncation();
        let family = family.leading(k);
        if family.max_mode() < k {
            return Err(Error::Precondition(format!(
                "family has {} modes, target needs {k}",
                family.max_mode()
            )));
        }
        let rhs = assemble_rhs(target, &family)?;
        Ok(Self {
            horizon: family.grid.horizon(),
            family,
            rhs,
            damping,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub grid: TimeGrid,
    pub boundary: BoundaryQuadrature,
    /// `f(t_k, x_j)` at `values[k * nodes + j]`, physical time.
    pub values: Vec<f64>,
    pub indices: Vec<i64>,
    pub coefficients: Vec<Complex64>,
    /// `|int e_n u - c_n|` per index.
    pub residuals: Vec<f64>,
    pub condition: f64,
    pub lower: f64,
    pub max_imag: f64,
    pub norm: f64,
}

/// JSON synthesis report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub k: usize,
    pub horizon: f64,
    pub condition: f64,
    pub m_n: f64,
    pub max_residual: f64,
    pub residual_bound: f64,
    pub norm: f64,
    pub max_imag: f64,
    pub min_norm_checks: Option<Vec<MinNormCheck>>,
}

impl ControlSignal {
    pub fn nodes(&self) -> usize {
        self.boundary.len()
    }

    pub fn zero(grid: TimeGrid, boundary: BoundaryQuadrature) -> Self {
        Self {
            values: vec![0.0; grid.len() * boundary.len()],
            grid,
            boundary,
            indices: Vec::new(),
            coefficients: Vec::new(),
            residuals: Vec::new(),
            condition: 1.0,
            lower: 1.0,
            max_imag: 0.0,
            norm: 0.0,
        }
    }

    /// A control given by a closure of `(t, node)`.
    pub fn from_fn(
        grid: TimeGrid,
        boundary: BoundaryQuadrature,
        f: impl Fn(f64, usize) -> f64,
    ) -> Self {
        let nodes = boundary.len();
        let mut c = Self::zero(grid, boundary);
        for k in 0..grid.len() {
            for j in 0..nodes {
                c.values[k * nodes + j] = f(grid.time(k), j);
            }
        }
        c.norm = c.l2_norm();
        c
    }

    pub fn at(&self, k: usize, node: usize) -> f64 {
        self.values[k * self.nodes() + node]
    }

    pub fn l2_norm(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        let nodes = self.nodes();
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            for (j, node) in self.boundary.nodes.iter().enumerate() {
                acc += wk * node.weight * self.values[k * nodes + j].powi(2);
            }
        }
        acc.sqrt()
    }

    /// `f_1 + f_2` on a shared grid.
    pub fn add(&self, other: &ControlSignal) -> Result<ControlSignal> {
        self.grid.ensure_same(&other.grid)?;
        if self.boundary != other.boundary {
            return Err(Error::Shape(
                "controls live on different boundary quadratures".into(),
            ));
        }
        let mut c = ControlSignal::zero(self.grid, self.boundary.clone());
        c.values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        c.norm = c.l2_norm();
        Ok(c)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    pub fn report(&self, min_norm_checks: Option<Vec<MinNormCheck>>) -> SynthesisReport {
        SynthesisReport {
            k: self
                .indices
                .iter()
                .map(|i| i.unsigned_abs() as usize)
                .max()
                .unwrap_or(0),
            horizon: self.grid.horizon(),
            condition: self.condition,
            m_n: self.lower,
            max_residual: self.max_residual(),
            residual_bound: 1e-8 * self.condition,
            norm: self.norm,
            max_imag: self.max_imag,
            min_norm_checks,
        }
    }

    /// Rows `t, node, f`.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: Option<&str>) -> Result<()> {
        if let Some(p) = provenance {
            writeln!(out, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "node", "f"])?;
        for k in 0..self.grid.len() {
            for j in 0..self.nodes() {
                w.write_record([
                    format!("{:.10}", self.grid.time(k)),
                    j.to_string(),
                    format!("{:.17e}", self.at(k, j)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `t, node, f` layout back onto a grid and quadrature.
    pub fn read_csv<R: std::io::Read>(
        input: R,
        grid: TimeGrid,
        boundary: BoundaryQuadrature,
    ) -> Result<ControlSignal> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(input);
        let mut c = ControlSignal::zero(grid, boundary);
        let nodes = c.nodes();
        let mut seen = 0;
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Shape(format!("malformed control row {seen}")))
            };
            let k = grid.index_of(parse(0)?)?;
            let j = parse(1)? as usize;
            if j >= nodes {
                return Err(Error::Shape(format!("node {j} outside 0..{nodes}")));
            }
            c.values[k * nodes + j] = parse(2)?;
            seen += 1;
        }
        if seen != c.values.len() {
            return Err(Error::Shape(format!(
                "control has {seen} samples, expected {}",
                c.values.len()
            )));
        }
        c.norm = c.l2_norm();
        Ok(c)
    }
}

/// A perturbation orthogonal to the span and the resulting norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinNormCheck {
    pub base_norm: f64,
    pub perturbed_norm: f64,
    pub moment_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    pub condition_cap: f64,
    /// Random directions for the minimum-norm spot check (0 disables it).
    pub min_norm_directions: usize,
    pub seed: u64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            condition_cap: DEFAULT_CONDITION_CAP,
            min_norm_directions: 5,
            seed: 0x5eed,
        }
    }
}

/// Minimum-norm synthesis through a Cholesky solve of `G b = conj(c)`.
pub fn synthesize(problem: &MomentProblem) -> Result<ControlSignal> {
    synthesize_with(problem, &SynthesisOptions::default()).map(|(c, _)| c)
}

pub fn synthesize_with(
    problem: &MomentProblem,
    options: &SynthesisOptions,
) -> Result<(ControlSignal, Option<Vec<MinNormCheck>>)> {
    let family = &problem.family;
    let (g, _) = gram_matrix(family)?;
    let (lower, condition) = certify(&g, options.condition_cap).map_err(|e| match e {
        Error::NearDegenerate {
            lower,
            condition,
            cap,
        } => Error::NotControllable {
            horizon: problem.horizon,
            lower,
            condition,
            cap,
        },
        other => other,
    })?;
    let n = family.len();
    let gm = DMatrix::from_fn(n, n, |i, j| g[i][j]);
    let chol = Cholesky::new(gm).ok_or(Error::NotControllable {
        horizon: problem.horizon,
        lower,
        condition,
        cap: options.condition_cap,
    })?;
    let rhs = DVector::from_iterator(n, problem.rhs.iter().map(|c| c.conj()));
    let b = chol.solve(&rhs);
    let coefficients: Vec<Complex64> = b.iter().cloned().collect();
    let u = family.combine(&coefficients);
    let max_imag = u.max_imag();
    let mut real = u.clone();
    for v in &mut real.values {
        *v = Complex64::new(v.re, 0.0);
    }
    let residuals = moment_residuals(family, &real, &problem.rhs);

    let grid = family.grid;
    let nodes = family.boundary.len();
    let last = grid.intervals();
    let mut values = vec![0.0; grid.len() * nodes];
    for k in 0..grid.len() {
        let s = grid.time(last - k);
        let w = (-problem.damping * s).exp();
        for j in 0..nodes {
            values[k * nodes + j] = w * real.at(last - k, j).re;
        }
    }
    let mut control = ControlSignal {
        grid,
        boundary: family.boundary.clone(),
        values,
        indices: family.indices(),
        coefficients,
        residuals,
        condition,
        lower,
        max_imag,
        norm: 0.0,
    };
    control.norm = control.l2_norm();

    let checks = (options.min_norm_directions > 0).then(|| {
        min_norm_spot_check(
            family,
            &chol,
            &real,
            &problem.rhs,
            options.min_norm_directions,
            options.seed,
        )
    });
    Ok((control, checks))
}

fn moment_residuals(family: &SequenceFamily, u: &GridFunction, rhs: &[Complex64]) -> Vec<f64> {
    par::map_range(family.len(), |i| {
        (family.inner_with(u, i).conj() - rhs[i]).norm()
    })
}

/// Adds random real directions orthogonal to the span and records the norms.
fn min_norm_spot_check(
    family: &SequenceFamily,
    chol: &Cholesky<Complex64, nalgebra::Dyn>,
    u: &GridFunction,
    rhs: &[Complex64],
    directions: usize,
    seed: u64,
) -> Vec<MinNormCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boundary = &family.boundary;
    let base_norm = u.norm(boundary);
    let base_drift = moment_residuals(family, u, rhs)
        .into_iter()
        .fold(0.0, f64::max);
    (0..directions)
        .map(|_| {
            let mut r = GridFunction::zeros(family.grid, boundary.len());
            for v in &mut r.values {
                *v = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
            }
            let proj = DVector::from_iterator(
                family.len(),
                (0..family.len()).map(|i| family.inner_with(&r, i)),
            );
            let a: Vec<Complex64> = chol.solve(&proj).iter().cloned().collect();
            let span = family.combine(&a);
            let scale = base_norm.max(1.0) / r.norm(boundary);
            let mut p = u.clone();
            for ((pv, rv), sv) in p.values.iter_mut().zip(&r.values).zip(&span.values) {
                *pv += (rv - sv.re) * scale;
            }
            let drift = moment_residuals(family, &p, rhs)
                .into_iter()
                .fold(0.0, f64::max);
            MinNormCheck {
                base_norm,
                perturbed_norm: p.norm(boundary),
                moment_drift: (drift - base_drift).max(0.0),
            }
        })
        .collect()
}

fn time_profile(pair: &EigenPair, gamma_param: f64, t: f64) -> Complex64 {
    if pair.in_j {
        return Complex64::new(1.0 + gamma_param * t, t);
    }
    let (c, s) = if pair.beta.im == 0.0 {
        let b = pair.beta.re;
        ((b * t).cos(), (b * t).sin() / b)
    } else {
        let b = pair.beta.im;
        ((b * t).cosh(), (b * t).sinh() / b)
    };
    Complex64::new(c + gamma_param * s, pair.kappa * s)
}

/// Adds the conjugate member at `-n`, with `Psi_{-n} = s_n Psi_n`.
fn with_conjugates(items: Vec<(&EigenPair, Vec<Complex64>)>) -> Vec<Member> {
    let mut members = Vec::with_capacity(2 * items.len());
    for (p, time) in items {
        let sign = conjugation_sign(p.beta, p.in_j);
        members.push(Member {
            index: -(p.index as i64),
            beta: -p.beta,
            time: time.iter().map(|v| v.conj()).collect(),
            space: p.psi.iter().map(|v| v * sign).collect(),
        });
        members.push(Member {
            index: p.index as i64,
            beta: p.beta,
            time,
            space: p.psi.clone(),
        });
    }
    members
}

/// Members `(C_n(t) + (i kappa_n + gamma) S_n(t)) Psi_n`, where
/// `C_n = cos(beta_n t)`, `S_n = sin(beta_n t)/beta_n` (hyperbolic for
/// imaginary `beta_n`, `C_n = 1`, `S_n = t` on the degenerate set), over `Z'`.
pub fn telegraph_family(
    spectrum: &Spectrum,
    grid: TimeGrid,
    gamma_param: f64,
) -> Result<SequenceFamily> {
    let times = par::map_slice(&spectrum.pairs, |p| {
        grid.sample(|t| time_profile(p, gamma_param, t))
    });
    let items = spectrum.pairs.iter().zip(times).collect();
    SequenceFamily::new(
        format!("telegraph(gamma={gamma_param})"),
        grid,
        spectrum.boundary.clone(),
        with_conjugates(items),
    )
}

fn pairs_for<'a>(responses: &[ModeResponse], spectrum: &'a Spectrum) -> Result<Vec<&'a EigenPair>> {
    responses
        .iter()
        .map(|r| {
            if r.n <= 0 {
                return Err(Error::Precondition(format!(
                    "response {} must have a positive index",
                    r.n
                )));
            }
            let p = spectrum
                .pairs
                .iter()
                .find(|p| p.index as i64 == r.n)
                .ok_or_else(|| Error::Shape(format!("no eigenpair for response {}", r.n)))?;
            if (p.beta - r.beta).norm() > 1e-12 * p.beta.norm().max(1.0) {
                return Err(Error::Shape(format!(
                    "eigenpair {} uses alpha different from the responses",
                    r.n
                )));
            }
            Ok(p)
        })
        .collect()
}

fn shared_grid(responses: &[ModeResponse]) -> Result<TimeGrid> {
    let grid = responses
        .first()
        .ok_or_else(|| Error::Precondition("no responses".into()))?
        .grid;
    for r in responses {
        grid.ensure_same(&r.grid)?;
    }
    Ok(grid)
}

/// `{Z_n(t) Psi_n}` over `Z'`, with `Z_{-n} = conj(Z_n)`.
pub fn viscoelastic_family(
    responses: &[ModeResponse],
    spectrum: &Spectrum,
) -> Result<SequenceFamily> {
    let grid = shared_grid(responses)?;
    let pairs = pairs_for(responses, spectrum)?;
    let items = pairs
        .into_iter()
        .zip(responses)
        .map(|(p, r)| (p, r.big_z.clone()))
        .collect();
    SequenceFamily::new(
        "viscoelastic",
        grid,
        spectrum.boundary.clone(),
        with_conjugates(items),
    )
}

/// `{S_n(t) Psi_n}` with `S_n = e^{-alpha t} Z_n`.
pub fn transformed_family(
    responses: &[ModeResponse],
    spectrum: &Spectrum,
) -> Result<SequenceFamily> {
    let grid = shared_grid(responses)?;
    let pairs = pairs_for(responses, spectrum)?;
    let items = pairs
        .into_iter()
        .zip(responses)
        .map(|(p, r)| (p, r.s.clone()))
        .collect();
    SequenceFamily::new(
        "transformed viscoelastic",
        grid,
        spectrum.boundary.clone(),
        with_conjugates(items),
    )
}

/// The exponential comparator of `S_n`, on the modes off the degenerate set.
pub fn comparator_family(solver: &VolterraSolver, spectrum: &Spectrum) -> Result<SequenceFamily> {
    let pairs: Vec<&EigenPair> = spectrum.pairs.iter().filter(|p| !p.in_j).collect();
    let times = par::try_map_slice(&pairs, |p| solver.comparator(p))?;
    let items = pairs.into_iter().zip(times).collect();
    SequenceFamily::new(
        "comparator",
        *solver.grid(),
        spectrum.boundary.clone(),
        with_conjugates(items),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Extrapolation;
    use crate::kernel::{normalize, KernelSpec};
    use crate::riesz::{gram, inner_functions};
    use crate::spectral::{compute_eigenpairs, DomainSpec, Face};
    use std::f64::consts::PI;

    fn interval_spectrum(k: usize, alpha: f64) -> Spectrum {
        compute_eigenpairs(&DomainSpec::interval(PI, vec![Face::Right]), k, alpha).unwrap()
    }

    #[test]
    fn rhs_by_substitution() {
        let s = interval_spectrum(3, 0.0);
        let fam = telegraph_family(&s, TimeGrid::new(1.0, 0.1).unwrap(), 0.0).unwrap();
        let rhs = assemble_rhs(&TargetState::unit_position(3, 1).unwrap(), &fam).unwrap();
        let by_index = |n: i64| rhs[fam.indices().iter().position(|i| *i == n).unwrap()];
        assert_eq!(by_index(1), Complex64::new(0.0, -1.0));
        assert_eq!(by_index(-1), Complex64::new(0.0, -1.0));
        assert_eq!(by_index(2), Complex64::default());
        let rhs = assemble_rhs(
            &TargetState::new(vec![0.0; 3], vec![1.0, 0.0, 0.0]).unwrap(),
            &fam,
        )
        .unwrap();
        assert_eq!(by_index_of(&fam, &rhs, 1), Complex64::new(-1.0, 0.0));
        assert_eq!(by_index_of(&fam, &rhs, -1), Complex64::new(1.0, 0.0));
        let mixed = TargetState::new(vec![0.5, -2.0, 0.0], vec![1.5, 0.0, 3.0]).unwrap();
        let rhs = assemble_rhs(&mixed, &fam).unwrap();
        assert_eq!(by_index_of(&fam, &rhs, 2), Complex64::new(0.0, 2.0));
        assert_eq!(by_index_of(&fam, &rhs, 3), Complex64::new(-3.0, 0.0));
    }

    fn by_index_of(fam: &SequenceFamily, rhs: &[Complex64], n: i64) -> Complex64 {
        rhs[fam.indices().iter().position(|i| *i == n).unwrap()]
    }

    #[test]
    fn memoryless_telegraph_members_are_exponentials() {
        let s = interval_spectrum(5, 0.0);
        let grid = TimeGrid::new(2.0, 1e-2).unwrap();
        let fam = telegraph_family(&s, grid, 0.0).unwrap();
        for m in &fam.members {
            for (k, v) in m.time.iter().enumerate() {
                let e = (Complex64::i() * m.beta * grid.time(k)).exp();
                assert!((v - e).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_member_profile() {
        let s = interval_spectrum(2, 1.0);
        assert!(s.pairs[0].in_j);
        let grid = TimeGrid::new(1.0, 0.25).unwrap();
        let fam = telegraph_family(&s, grid, 0.7).unwrap();
        let m = fam.members.iter().find(|m| m.index == 1).unwrap();
        for (k, v) in m.time.iter().enumerate() {
            let t = grid.time(k);
            assert!((v - Complex64::new(1.0 + 0.7 * t, t)).norm() < 1e-15);
        }
        assert_eq!(m.space, s.pairs[0].trace);
    }

    #[test]
    fn orthonormal_family_returns_its_member() {
        let grid = TimeGrid::new(2.0 * PI, 2.0 * PI / 4000.0).unwrap();
        let members = (1..=3i64)
            .flat_map(|n| [n, -n])
            .map(|n| Member {
                index: n,
                beta: Complex64::new(n as f64, 0.0),
                time: grid.sample(|t| Complex64::new(0.0, n as f64 * t).exp() / (2.0 * PI).sqrt()),
                space: vec![1.0],
            })
            .collect();
        let fam =
            SequenceFamily::new("fourier", grid, BoundaryQuadrature::scalar(), members).unwrap();
        let mut rhs = vec![Complex64::default(); fam.len()];
        rhs[0] = Complex64::new(1.0, 0.0);
        let problem = MomentProblem {
            family: fam.clone(),
            rhs,
            horizon: grid.horizon(),
            damping: 0.0,
        };
        let (c, _) = synthesize_with(
            &problem,
            &SynthesisOptions {
                min_norm_directions: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((c.coefficients[0] - 1.0).norm() < 1e-12);
        assert!(c.coefficients[1..].iter().all(|b| b.norm() < 1e-12));
    }

    #[test]
    fn telegraph_synthesis_is_real_and_consistent() {
        let s = interval_spectrum(12, 0.0);
        let grid = TimeGrid::new(2.5 * PI, 2e-3).unwrap();
        let fam = telegraph_family(&s, grid, 0.0).unwrap();
        let target = TargetState::unit_position(12, 1).unwrap();
        let problem = MomentProblem::new(fam, &target, 0.0).unwrap();
        let (c, checks) = synthesize_with(&problem, &SynthesisOptions::default()).unwrap();
        assert!(c.max_imag <= 1e-12, "{}", c.max_imag);
        assert!(c.max_residual() <= 1e-8 * c.condition);
        for ch in checks.unwrap() {
            assert!(ch.perturbed_norm > ch.base_norm);
            assert!(ch.moment_drift < 1e-8);
        }
    }

    #[test]
    fn short_horizon_is_not_controllable() {
        let s = interval_spectrum(12, 0.0);
        let grid = TimeGrid::new(0.5 * PI, 2e-3).unwrap();
        let fam = telegraph_family(&s, grid, 0.0).unwrap();
        let problem =
            MomentProblem::new(fam, &TargetState::unit_position(12, 1).unwrap(), 0.0).unwrap();
        match synthesize(&problem) {
            Err(Error::NotControllable {
                lower,
                condition,
                cap,
                ..
            }) => {
                assert!(condition > cap);
                assert!(lower < 1e-4, "{lower} {condition}");
            }
            other => panic!("expected refusal, got {:?}", other.map(|c| c.condition)),
        }
    }

    #[test]
    fn feasibility_is_monotone_in_horizon() {
        let s = interval_spectrum(8, 0.0);
        let target = TargetState::random(8, 7).unwrap();
        let mut last_lower = 0.0;
        let mut feasible = false;
        for t in [0.5 * PI, 1.5 * PI, 2.2 * PI, 2.6 * PI, 3.0 * PI] {
            let fam = telegraph_family(&s, TimeGrid::new(t, 5e-3).unwrap(), 0.0).unwrap();
            let level = gram(&fam, 8).unwrap().last().clone();
            let lower = level.m_n;
            assert!(
                lower >= last_lower - 1e-12 * level.big_m_n,
                "{lower} < {last_lower}"
            );
            let ok = synthesize(&MomentProblem::new(fam, &target, 0.0).unwrap()).is_ok();
            assert!(ok || !feasible, "feasibility lost at T = {t}");
            feasible |= ok;
            last_lower = lower;
        }
        assert!(feasible);
    }

    #[test]
    fn gamma_choice_gives_same_dichotomy() {
        let s = interval_spectrum(20, 0.3);
        for (t, plateau) in [(1.2 * PI, false), (2.5 * PI, true)] {
            let grid = TimeGrid::new(t, 2e-3).unwrap();
            let ratios: Vec<f64> = [0.0, 0.3]
                .iter()
                .map(|g| {
                    let r = gram(&telegraph_family(&s, grid, *g).unwrap(), 20).unwrap();
                    r.lower_ratio(20, 5).unwrap()
                })
                .collect();
            for r in ratios {
                assert_eq!(r >= 0.5, plateau, "T = {t}, ratio {r}");
            }
        }
    }

    #[test]
    fn viscoelastic_family_conjugates_and_memoryless_limit() {
        let grid = TimeGrid::new(PI, 1e-3).unwrap();
        let kernel = normalize(&KernelSpec::zero(0.0), &grid).unwrap();
        let s = interval_spectrum(6, kernel.alpha);
        let solver = VolterraSolver::new(&kernel, Extrapolation::default()).unwrap();
        let responses = solver.responses(&s.pairs).unwrap();
        let visco = viscoelastic_family(&responses, &s).unwrap();
        let tele = telegraph_family(&s, grid, 0.0).unwrap();
        assert_eq!(visco.indices(), tele.indices());
        for (a, b) in visco.members.iter().zip(&tele.members) {
            let gap = a
                .time
                .iter()
                .zip(&b.time)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
            assert!(gap < 1e-5, "member {}: {gap}", a.index);
            assert_eq!(a.space, b.space);
        }
        for m in visco.members.iter().filter(|m| m.index > 0) {
            let partner = visco.members.iter().find(|o| o.index == -m.index).unwrap();
            assert!(m
                .time
                .iter()
                .zip(&partner.time)
                .all(|(x, y)| *x == y.conj()));
        }
    }

    #[test]
    fn physical_target_conversion() {
        let t =
            TargetState::from_physical(&[1.0, 2.0], &[0.0, 1.0], &[1.0, 2.0], 0.0, 3.0).unwrap();
        assert_eq!(t.xi, vec![1.0, 2.0]);
        assert_eq!(t.eta, vec![0.0, 1.0]);
        let g = -0.5;
        let t = TargetState::from_physical(&[1.0], &[0.0], &[1.0], g, 2.0).unwrap();
        let e = (2.0 * g * 2.0f64).exp();
        assert!((t.xi[0] - e).abs() < 1e-15);
        assert!((t.eta[0] - e * 2.0 * g).abs() < 1e-15);
    }

    #[test]
    fn control_csv_round_trip() {
        let grid = TimeGrid::new(1.0, 0.125).unwrap();
        let c = ControlSignal::from_fn(grid, BoundaryQuadrature::scalar(), |t, _| t * t - 0.25);
        let mut buf = Vec::new();
        c.write_csv(&mut buf, Some("hash abc")).unwrap();
        let back =
            ControlSignal::read_csv(buf.as_slice(), grid, BoundaryQuadrature::scalar()).unwrap();
        assert_eq!(back.values, c.values);
        let twice = c.add(&c).unwrap();
        assert!((twice.norm - 2.0 * c.norm).abs() < 1e-14);
        let u = GridFunction::zeros(grid, 1);
        let fam = telegraph_family(&interval_spectrum(1, 0.0), grid, 0.0).unwrap();
        assert_eq!(inner_functions(&fam, &u, &u), Complex64::default());
    }
}
