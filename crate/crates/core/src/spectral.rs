//! Spectral decomposition of `A w = div(a grad w) + q w` with Dirichlet
//! conditions, and the boundary traces `a dphi/dnu` on the controlled part
//! of the boundary.
//!
//! Constant coefficients use the closed-form sine spectra of the interval
//! and the rectangle. Variable coefficients on an interval go through a
//! symmetric three-point Sturm-Liouville discretisation: eigenvalues by
//! Sturm-sequence bisection on nested meshes followed by Richardson
//! extrapolation, eigenvectors by inverse iteration on the finest mesh.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::grid::romberg;
use crate::par;
use crate::spline::UniformSpline;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

impl Geometry {
    pub fn dimension(&self) -> usize {
        match self {
            Geometry::Interval { .. } => 1,
            Geometry::Rectangle { .. } => 2,
        }
    }
}

/// A coefficient: a constant, or uniform samples over the interval
/// (endpoints included), interpolated by a natural cubic spline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Constant(f64),
    Sampled(Vec<f64>),
}

impl Default for Coefficient {
    fn default() -> Self {
        Coefficient::Constant(0.0)
    }
}

impl Coefficient {
    fn constant(&self) -> Option<f64> {
        match self {
            Coefficient::Constant(v) => Some(*v),
            Coefficient::Sampled(_) => None,
        }
    }

    fn evaluator(&self, length: f64) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
        Ok(match self {
            Coefficient::Constant(v) => {
                let v = *v;
                Box::new(move |_| v)
            }
            Coefficient::Sampled(s) => {
                if s.len() < 2 {
                    return Err(Error::InvalidDomain(
                        "sampled coefficient needs at least two samples".into(),
                    ));
                }
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidDomain(
                        "sampled coefficient has non-finite values".into(),
                    ));
                }
                let spline = UniformSpline::new(length, s.clone());
                Box::new(move |x| spline.eval(x))
            }
        })
    }
}

/// Boundary face. On an interval `Left` is `x = 0` and `Right` is `x = length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub geometry: Geometry,
    #[serde(default = "unit_coefficient")]
    pub a: Coefficient,
    #[serde(default)]
    pub q: Coefficient,
    #[serde(default)]
    pub c: f64,
    pub gamma: Vec<Face>,
}

fn unit_coefficient() -> Coefficient {
    Coefficient::Constant(1.0)
}

impl DomainSpec {
    pub fn interval(length: f64, gamma: Vec<Face>) -> Self {
        Self {
            geometry: Geometry::Interval { length },
            a: Coefficient::Constant(1.0),
            q: Coefficient::Constant(0.0),
            c: 0.0,
            gamma,
        }
    }

    pub fn rectangle(lx: f64, ly: f64, gamma: Vec<Face>) -> Self {
        Self {
            geometry: Geometry::Rectangle { lx, ly },
            a: Coefficient::Constant(1.0),
            q: Coefficient::Constant(0.0),
            c: 0.0,
            gamma,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.geometry {
            Geometry::Interval { length } => {
                if !(length > 0.0) {
                    return Err(Error::InvalidDomain(format!(
                        "interval length {length} must be positive"
                    )));
                }
                if self
                    .gamma
                    .iter()
                    .any(|f| matches!(f, Face::Bottom | Face::Top))
                {
                    return Err(Error::InvalidDomain(
                        "an interval only has left/right endpoints".into(),
                    ));
                }
            }
            Geometry::Rectangle { lx, ly } => {
                if !(lx > 0.0 && ly > 0.0) {
                    return Err(Error::InvalidDomain(
                        "rectangle sides must be positive".into(),
                    ));
                }
                if self.a.constant().is_none() || self.q.constant().is_none() {
                    return Err(Error::Precondition(
                        "rectangle geometry requires constant a and q".into(),
                    ));
                }
            }
        }
        if self.gamma.is_empty() {
            return Err(Error::InvalidDomain(
                "the controlled boundary part is empty".into(),
            ));
        }
        match &self.a {
            Coefficient::Constant(a) if !(*a > 0.0) => {
                return Err(Error::InvalidDomain(format!(
                    "diffusion coefficient a = {a} must be positive"
                )))
            }
            Coefficient::Sampled(s) if s.iter().any(|v| !(*v > 0.0)) => {
                return Err(Error::InvalidDomain(
                    "diffusion coefficient a must be positive everywhere".into(),
                ))
            }
            _ => {}
        }
        if !self.c.is_finite() {
            return Err(Error::InvalidDomain(
                "velocity coefficient c must be finite".into(),
            ));
        }
        Ok(())
    }

    fn faces(&self) -> Vec<Face> {
        let mut f = self.gamma.clone();
        f.sort();
        f.dedup();
        f
    }
}

/// One node of the quadrature rule on the controlled boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryNode {
    pub face: Face,
    /// Coordinate along the face (0 for interval endpoints).
    pub coord: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryQuadrature {
    pub nodes: Vec<BoundaryNode>,
}

impl BoundaryQuadrature {
    /// Single node of unit weight (a scalar trace space).
    pub fn scalar() -> Self {
        Self {
            nodes: vec![BoundaryNode {
                face: Face::Right,
                coord: 0.0,
                weight: 1.0,
            }],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.weight).collect()
    }

    /// `L^2(Gamma)` norm of nodal values.
    pub fn norm<T: Copy + Into<Complex64>>(&self, values: &[T]) -> f64 {
        self.nodes
            .iter()
            .zip(values)
            .map(|(n, v)| n.weight * (*v).into().norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Which eigenfunction a pair refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModeShape {
    /// `sqrt(2/l) sin(n pi x / l)`.
    Sine { length: f64, n: usize },
    /// `2/sqrt(lx ly) sin(j pi x/lx) sin(k pi y/ly)`.
    SineProduct {
        lx: f64,
        ly: f64,
        j: usize,
        k: usize,
    },
    /// Normalised finite-difference eigenvector on a uniform mesh (endpoints included).
    Mesh { length: f64, values: Vec<f64> },
}

impl ModeShape {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            ModeShape::Sine { length, n } => {
                (2.0 / length).sqrt() * (*n as f64 * PI * x / length).sin()
            }
            ModeShape::SineProduct { lx, ly, j, k } => {
                2.0 / (lx * ly).sqrt()
                    * (*j as f64 * PI * x / lx).sin()
                    * (*k as f64 * PI * y / ly).sin()
            }
            ModeShape::Mesh { length, values } => {
                let m = values.len() - 1;
                let pos = (x / length * m as f64).clamp(0.0, m as f64);
                let i = (pos.floor() as usize).min(m - 1);
                let u = pos - i as f64;
                values[i] * (1.0 - u) + values[i + 1] * u
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    /// 1-based, contiguous, sorted by `lambda_sq`.
    pub index: usize,
    /// `lambda_n^2`, where `A phi_n = -lambda_n^2 phi_n`.
    pub lambda_sq: f64,
    /// `sqrt(lambda_n^2 - alpha^2)`, principal branch.
    pub beta: Complex64,
    /// Real scale used for the moment coordinates: `beta` when real,
    /// `|beta|` when imaginary, 1 on the degenerate set `J`.
    pub kappa: f64,
    /// `a dphi_n/dnu` at the boundary quadrature nodes.
    pub trace: Vec<f64>,
    /// `trace / kappa` (unscaled on `J`).
    pub psi: Vec<f64>,
    pub in_j: bool,
    pub in_o: bool,
    pub multiplicity: usize,
    pub shape: ModeShape,
}

impl EigenPair {
    /// `beta` is real and positive (the generic large-`n` situation).
    pub fn beta_is_real(&self) -> bool {
        !self.in_j && self.beta.im == 0.0
    }

    /// Re-derives `beta`, `kappa` and `psi` for another damping value.
    pub fn with_alpha(&self, alpha: f64) -> EigenPair {
        let mut p = self.clone();
        let (beta, in_j, kappa) = beta_for(self.lambda_sq, alpha);
        p.beta = beta;
        p.in_j = in_j;
        p.kappa = kappa;
        p.psi = p.trace.iter().map(|t| t / kappa).collect();
        p
    }
}

fn beta_for(lambda_sq: f64, alpha: f64) -> (Complex64, bool, f64) {
    let d = lambda_sq - alpha * alpha;
    let tol = 1e-12 * lambda_sq.abs().max(alpha * alpha).max(1.0);
    if d.abs() <= tol {
        (Complex64::new(0.0, 0.0), true, 1.0)
    } else if d > 0.0 {
        (Complex64::new(d.sqrt(), 0.0), false, d.sqrt())
    } else {
        (Complex64::new(0.0, (-d).sqrt()), false, (-d).sqrt())
    }
}

/// Options of the variable-coefficient Sturm-Liouville solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Mesh intervals on the coarsest level.
    pub base_intervals: usize,
    /// Number of nested meshes (each halving the step) used for Richardson extrapolation.
    pub levels: usize,
    /// Use the finite-difference path even when closed forms exist.
    pub force_numeric: bool,
    /// Quadrature intervals per rectangle face (0 = automatic).
    pub face_intervals: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            base_intervals: 1024,
            levels: 3,
            force_numeric: false,
            face_intervals: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub pairs: Vec<EigenPair>,
    pub boundary: BoundaryQuadrature,
    pub alpha: f64,
}

impl Spectrum {
    pub fn with_alpha(&self, alpha: f64) -> Spectrum {
        Spectrum {
            pairs: self.pairs.iter().map(|p| p.with_alpha(alpha)).collect(),
            boundary: self.boundary.clone(),
            alpha,
        }
    }

    pub fn truncate(&self, count: usize) -> Spectrum {
        Spectrum {
            pairs: self.pairs[..count.min(self.pairs.len())].to_vec(),
            boundary: self.boundary.clone(),
            alpha: self.alpha,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn compute_eigenpairs(domain: &DomainSpec, count: usize, alpha: f64) -> Result<Spectrum> {
    compute_eigenpairs_with(domain, count, alpha, &SolverOptions::default())
}

pub fn compute_eigenpairs_with(
    domain: &DomainSpec,
    count: usize,
    alpha: f64,
    options: &SolverOptions,
) -> Result<Spectrum> {
    domain.validate()?;
    if count == 0 {
        return Err(Error::Precondition(
            "eigenpair count must be at least 1".into(),
        ));
    }
    let faces = domain.faces();
    let (raw, boundary) = match domain.geometry {
        Geometry::Interval { length } => {
            let boundary = BoundaryQuadrature {
                nodes: faces
                    .iter()
                    .map(|f| BoundaryNode {
                        face: *f,
                        coord: 0.0,
                        weight: 1.0,
                    })
                    .collect(),
            };
            let constant = domain.a.constant().zip(domain.q.constant());
            let raw = match constant {
                Some((a, q)) if !options.force_numeric => {
                    interval_closed_form(length, a, q, &faces, count)
                }
                _ => sturm_liouville(domain, length, &faces, count, options)?,
            };
            (raw, boundary)
        }
        Geometry::Rectangle { lx, ly } => {
            let a = domain.a.constant().expect("validated");
            let q = domain.q.constant().expect("validated");
            rectangle_closed_form(lx, ly, a, q, &faces, count, options.face_intervals)
        }
    };
    let pairs = raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let (beta, in_j, kappa) = beta_for(r.lambda_sq, alpha);
            let in_o = r.lambda_sq.abs() <= 1e-12 * r.lambda_sq.abs().max(1.0);
            EigenPair {
                index: i + 1,
                lambda_sq: r.lambda_sq,
                beta,
                kappa,
                psi: r.trace.iter().map(|t| t / kappa).collect(),
                trace: r.trace,
                in_j,
                in_o,
                multiplicity: r.multiplicity,
                shape: r.shape,
            }
        })
        .collect();
    Ok(Spectrum {
        pairs,
        boundary,
        alpha,
    })
}

struct RawPair {
    lambda_sq: f64,
    trace: Vec<f64>,
    multiplicity: usize,
    shape: ModeShape,
}

fn interval_closed_form(length: f64, a: f64, q: f64, faces: &[Face], count: usize) -> Vec<RawPair> {
    (1..=count)
        .map(|n| {
            let k = n as f64 * PI / length;
            let amp = a * (2.0 / length).sqrt() * k;
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let trace = faces
                .iter()
                .map(|f| match f {
                    Face::Left => -amp,
                    _ => amp * sign,
                })
                .collect();
            RawPair {
                lambda_sq: a * k * k - q,
                trace,
                multiplicity: 1,
                shape: ModeShape::Sine { length, n },
            }
        })
        .collect()
}

fn rectangle_closed_form(
    lx: f64,
    ly: f64,
    a: f64,
    q: f64,
    faces: &[Face],
    count: usize,
    face_intervals: usize,
) -> (Vec<RawPair>, BoundaryQuadrature) {
    let mut modes: Vec<(f64, usize, usize)> = Vec::with_capacity(count * count);
    for j in 1..=count {
        for k in 1..=count {
            let kx = j as f64 * PI / lx;
            let ky = k as f64 * PI / ly;
            modes.push((a * (kx * kx + ky * ky) - q, j, k));
        }
    }
    modes.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let max_index = modes[..count]
        .iter()
        .map(|m| m.1.max(m.2))
        .max()
        .unwrap_or(1);
    let m = if face_intervals > 0 {
        face_intervals
    } else {
        (4 * max_index).max(64)
    };
    let mut nodes = Vec::new();
    for face in faces {
        let len = match face {
            Face::Left | Face::Right => ly,
            Face::Bottom | Face::Top => lx,
        };
        let h = len / m as f64;
        for i in 0..=m {
            let w = if i == 0 || i == m { 0.5 * h } else { h };
            nodes.push(BoundaryNode {
                face: *face,
                coord: i as f64 * h,
                weight: w,
            });
        }
    }
    let norm = 2.0 / (lx * ly).sqrt();
    let same = |u: f64, v: f64| (u - v).abs() <= 1e-12 * u.abs().max(1.0);
    let raw = modes[..count]
        .iter()
        .map(|&(lambda_sq, j, k)| {
            let kx = j as f64 * PI / lx;
            let ky = k as f64 * PI / ly;
            let trace = nodes
                .iter()
                .map(|nd| {
                    let s = nd.coord;
                    match nd.face {
                        Face::Left => -a * norm * kx * (ky * s).sin(),
                        Face::Right => a * norm * kx * (j as f64 * PI).cos() * (ky * s).sin(),
                        Face::Bottom => -a * norm * ky * (kx * s).sin(),
                        Face::Top => a * norm * ky * (k as f64 * PI).cos() * (kx * s).sin(),
                    }
                })
                .collect();
            let multiplicity = modes.iter().filter(|m| same(m.0, lambda_sq)).count();
            RawPair {
                lambda_sq,
                trace,
                multiplicity,
                shape: ModeShape::SineProduct { lx, ly, j, k },
            }
        })
        .collect();
    (raw, BoundaryQuadrature { nodes })
}

/// Symmetric tridiagonal discretisation of `-(a u')' - q u` on `m` intervals.
struct Tridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    step: f64,
    a_half: Vec<f64>,
    q_nodes: Vec<f64>,
}

impl Tridiagonal {
    fn new(
        length: f64,
        m: usize,
        a: &(dyn Fn(f64) -> f64 + Send + Sync),
        q: &(dyn Fn(f64) -> f64 + Send + Sync),
    ) -> Result<Self> {
        let h = length / m as f64;
        let a_half: Vec<f64> = (0..m).map(|i| a((i as f64 + 0.5) * h)).collect();
        if let Some(bad) = a_half.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::InvalidDomain(format!(
                "diffusion coefficient must be positive, found {bad} inside the interval"
            )));
        }
        let q_nodes: Vec<f64> = (0..=m).map(|i| q(i as f64 * h)).collect();
        let h2 = h * h;
        let diag = (1..m)
            .map(|i| (a_half[i - 1] + a_half[i]) / h2 - q_nodes[i])
            .collect();
        let off = (1..m - 1).map(|i| -a_half[i] / h2).collect();
        Ok(Self {
            diag,
            off,
            step: h,
            a_half,
            q_nodes,
        })
    }

    /// Number of eigenvalues strictly below `x`.
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut p = self.diag[0] - x;
        if p < 0.0 {
            count += 1;
        }
        for i in 1..self.diag.len() {
            let denom = if p == 0.0 {
                f64::EPSILON * self.off[i - 1].abs().max(1e-300)
            } else {
                p
            };
            p = self.diag[i] - x - self.off[i - 1] * self.off[i - 1] / denom;
            if p < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    fn eigenvalue(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * u[i];
                if i > 0 {
                    v += self.off[i - 1] * u[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * u[i + 1];
                }
                v
            })
            .collect()
    }

    /// Solves `(T - shift) x = b` by Gaussian elimination with partial pivoting.
    fn shifted_solve(&self, shift: f64, b: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        // Row i holds up to three nonzeros starting at column i after pivoting.
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - shift).collect();
        let mut u1: Vec<f64> = (0..n)
            .map(|i| if i + 1 < n { self.off[i] } else { 0.0 })
            .collect();
        let mut u2 = vec![0.0; n];
        let mut l: Vec<f64> = (0..n)
            .map(|i| if i > 0 { self.off[i - 1] } else { 0.0 })
            .collect();
        let mut x = b.to_vec();
        for i in 0..n.saturating_sub(1) {
            let below = l[i + 1];
            if below.abs() > d[i].abs() {
                // swap rows i and i+1
                let (ri0, ri1, ri2) = (d[i], u1[i], u2[i]);
                d[i] = below;
                u1[i] = d[i + 1];
                u2[i] = u1[i + 1];
                let factor = ri0 / below;
                d[i + 1] = ri1 - factor * u1[i];
                u1[i + 1] = ri2 - factor * u2[i];
                x.swap(i, i + 1);
                x[i + 1] -= factor * x[i];
            } else {
                let piv = if d[i] == 0.0 { f64::EPSILON } else { d[i] };
                d[i] = piv;
                let factor = below / piv;
                d[i + 1] -= factor * u1[i];
                u1[i + 1] -= factor * u2[i];
                x[i + 1] -= factor * x[i];
            }
            l[i + 1] = 0.0;
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = f64::EPSILON;
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            if i + 1 < n {
                v -= u1[i] * x[i + 1];
            }
            if i + 2 < n {
                v -= u2[i] * x[i + 2];
            }
            x[i] = v / d[i];
        }
        x
    }

    fn eigenvector(&self, lambda: f64, mode: usize) -> Result<Vec<f64>> {
        let n = self.diag.len();
        let scale = lambda.abs().max(1.0);
        let shift = lambda + 1e-10 * scale;
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64)
            .collect();
        for _ in 0..4 {
            v = self.shifted_solve(shift, &v);
            let norm = (v.iter().map(|x| x * x).sum::<f64>() * self.step).sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
        }
        let av = self.apply(&v);
        let residual = (av
            .iter()
            .zip(&v)
            .map(|(a, x)| (a - lambda * x).powi(2))
            .sum::<f64>()
            * self.step)
            .sqrt();
        if !(residual <= 1e-6 * scale) {
            return Err(Error::Convergence { mode, residual });
        }
        if v[0] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        Ok(v)
    }
}

/// Raw (non-extrapolated) finite-difference eigenvalues on a mesh of `m`
/// intervals; exposed for convergence studies.
pub fn finite_difference_eigenvalues(
    domain: &DomainSpec,
    m: usize,
    count: usize,
) -> Result<Vec<f64>> {
    domain.validate()?;
    let Geometry::Interval { length } = domain.geometry else {
        return Err(Error::Precondition(
            "finite differences are implemented for intervals".into(),
        ));
    };
    if m < count + 2 {
        return Err(Error::Precondition(format!(
            "mesh of {m} intervals is too coarse for {count} modes"
        )));
    }
    let a = domain.a.evaluator(length)?;
    let q = domain.q.evaluator(length)?;
    let t = Tridiagonal::new(length, m, a.as_ref(), q.as_ref())?;
    Ok(par::map_range(count, |k| t.eigenvalue(k)))
}

fn sturm_liouville(
    domain: &DomainSpec,
    length: f64,
    faces: &[Face],
    count: usize,
    options: &SolverOptions,
) -> Result<Vec<RawPair>> {
    let levels = options.levels.max(1);
    let base = options.base_intervals.max(4 * count + 8);
    let a = domain.a.evaluator(length)?;
    let q = domain.q.evaluator(length)?;
    let mut rows = Vec::with_capacity(levels);
    let mut finest = None;
    for level in 0..levels {
        let m = base << level;
        let t = Tridiagonal::new(length, m, a.as_ref(), q.as_ref())?;
        rows.push(par::map_range(count, |k| t.eigenvalue(k)));
        finest = Some(t);
    }
    let finest = finest.expect("at least one level");
    let raw_finest = rows.last().cloned().expect("at least one level");
    let extrapolated = romberg(rows);
    let h = finest.step;
    let m = finest.diag.len() + 1;
    let vectors: Vec<Result<Vec<f64>>> =
        par::map_range(count, |k| finest.eigenvector(raw_finest[k], k + 1));
    let mut out = Vec::with_capacity(count);
    for (k, v) in vectors.into_iter().enumerate() {
        let v = v?;
        let lam = raw_finest[k];
        // Conormal flux from the half cell next to each endpoint.
        let left_flux = finest.a_half[0] * v[0] / h + (lam + finest.q_nodes[0]) * v[0] * h / 8.0;
        let right_flux =
            -finest.a_half[m - 1] * v[m - 2] / h - (lam + finest.q_nodes[m]) * v[m - 2] * h / 8.0;
        let trace = faces
            .iter()
            .map(|f| match f {
                Face::Left => -left_flux,
                _ => right_flux,
            })
            .collect();
        let mut values = Vec::with_capacity(m + 1);
        values.push(0.0);
        values.extend_from_slice(&v);
        values.push(0.0);
        out.push(RawPair {
            lambda_sq: extrapolated[k],
            trace,
            multiplicity: 1,
            shape: ModeShape::Mesh { length, values },
        });
    }
    Ok(out)
}

/// Per-mode boundary trace norms `||Psi_n||_{L^2(Gamma)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub norms: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Indices whose trace norm is below the threshold.
    pub flagged: Vec<usize>,
    pub threshold: f64,
}

pub const DEFAULT_TRACE_THRESHOLD: f64 = 1e-10;

pub fn trace_diagnostics(spectrum: &Spectrum, threshold: f64) -> Result<TraceReport> {
    if spectrum.pairs.is_empty() {
        return Err(Error::Precondition(
            "trace diagnostics need at least one eigenpair".into(),
        ));
    }
    let norms: Vec<f64> = spectrum
        .pairs
        .iter()
        .map(|p| spectrum.boundary.norm(&p.psi))
        .collect();
    let flagged = spectrum
        .pairs
        .iter()
        .zip(&norms)
        .filter(|(_, n)| **n < threshold)
        .map(|(p, _)| p.index)
        .collect();
    Ok(TraceReport {
        min: norms.iter().cloned().fold(f64::INFINITY, f64::min),
        max: norms.iter().cloned().fold(0.0, f64::max),
        norms,
        flagged,
        threshold,
    })
}

/// Slope of `log lambda_n^2` against `log n` over the top half of the modes.
pub fn growth_exponent(spectrum: &Spectrum) -> Option<f64> {
    let n = spectrum.pairs.len();
    let top = &spectrum.pairs[n / 2..];
    let x: Vec<f64> = top.iter().map(|p| p.index as f64).collect();
    let y: Vec<f64> = top.iter().map(|p| p.lambda_sq).collect();
    loglog_fit(&x, &y).map(|f| f.slope)
}

/// Sums of `1/lambda_n^4` over consecutive blocks of `block` modes.
pub fn inverse_quartic_blocks(spectrum: &Spectrum, block: usize) -> Vec<f64> {
    spectrum
        .pairs
        .chunks(block)
        .filter(|c| c.len() == block)
        .map(|c| {
            c.iter()
                .filter(|p| !p.in_o)
                .map(|p| 1.0 / (p.lambda_sq * p.lambda_sq))
                .sum()
        })
        .collect()
}

/// CSV with columns `n, lambda_sq, beta_re, beta_im, trace_norm, in_J, in_O`.
pub fn write_eigenpairs_csv<W: Write>(
    mut out: W,
    spectrum: &Spectrum,
    provenance: Option<&str>,
) -> Result<()> {
    if let Some(p) = provenance {
        writeln!(out, "# {p}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n",
        "lambda_sq",
        "beta_re",
        "beta_im",
        "trace_norm",
        "in_J",
        "in_O",
    ])?;
    for p in &spectrum.pairs {
        w.write_record([
            p.index.to_string(),
            format!("{:.15e}", p.lambda_sq),
            format!("{:.15e}", p.beta.re),
            format!("{:.15e}", p.beta.im),
            format!("{:.15e}", spectrum.boundary.norm(&p.psi)),
            (p.in_j as u8).to_string(),
            (p.in_o as u8).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
