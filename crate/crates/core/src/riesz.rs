//! Gram matrices and frame bounds of families in `L^2(0,T; L^2(Gamma))`.
//!
//! Inner products conjugate the second argument. Members are separable,
//! `e_n(t, x) = a_n(t) psi_n(x)`; general grid functions (controls, duals)
//! are stored node-major per time sample.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::grid::TimeGrid;
use crate::par;
use crate::spectral::{BoundaryQuadrature, EigenPair};

pub const DEFAULT_CONDITION_CAP: f64 = 1e8;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub index: i64,
    pub beta: Complex64,
    pub time: Vec<Complex64>,
    /// Values at the boundary quadrature nodes.
    pub space: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceFamily {
    pub label: String,
    pub grid: TimeGrid,
    pub boundary: BoundaryQuadrature,
    pub members: Vec<Member>,
}

/// A function on `[0, T] x Gamma`, `values[k * nodes + j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: TimeGrid,
    pub nodes: usize,
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn zeros(grid: TimeGrid, nodes: usize) -> Self {
        Self {
            grid,
            nodes,
            values: vec![Complex64::default(); grid.len() * nodes],
        }
    }

    pub fn at(&self, k: usize, node: usize) -> Complex64 {
        self.values[k * self.nodes + node]
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    pub fn norm(&self, boundary: &BoundaryQuadrature) -> f64 {
        let w = self.grid.trapezoid_weights();
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            for (j, node) in boundary.nodes.iter().enumerate() {
                acc += wk * node.weight * self.at(k, j).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Samples at one boundary node.
    pub fn node_series(&self, node: usize) -> Vec<Complex64> {
        (0..self.grid.len()).map(|k| self.at(k, node)).collect()
    }
}

impl SequenceFamily {
    /// Validates shapes and orders members by `|index|`, positive first.
    pub fn new(
        label: impl Into<String>,
        grid: TimeGrid,
        boundary: BoundaryQuadrature,
        mut members: Vec<Member>,
    ) -> Result<Self> {
        for m in &members {
            if m.time.len() != grid.len() || m.space.len() != boundary.len() {
                return Err(Error::Shape(format!(
                    "member {} has {}x{} samples, expected {}x{}",
                    m.index,
                    m.time.len(),
                    m.space.len(),
                    grid.len(),
                    boundary.len()
                )));
            }
        }
        members.sort_by_key(|m| (m.index.unsigned_abs(), m.index < 0));
        let family = Self {
            label: label.into(),
            grid,
            boundary,
            members,
        };
        for (i, m) in family.members.iter().enumerate() {
            let n = family.inner(i, i).re;
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::Precondition(format!(
                    "member {} has norm {n}",
                    m.index
                )));
            }
        }
        Ok(family)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn indices(&self) -> Vec<i64> {
        self.members.iter().map(|m| m.index).collect()
    }

    /// Largest `|index|`.
    pub fn max_mode(&self) -> usize {
        self.members
            .iter()
            .map(|m| m.index.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Number of members with `|index| <= n`.
    pub fn size_at(&self, n: usize) -> usize {
        self.members
            .iter()
            .filter(|m| m.index.unsigned_abs() as usize <= n)
            .count()
    }

    fn space_product(&self, a: &[f64], b: &[f64]) -> f64 {
        self.boundary
            .nodes
            .iter()
            .zip(a.iter().zip(b))
            .map(|(n, (x, y))| n.weight * x * y)
            .sum()
    }

    /// `<e_i, e_j>`.
    pub fn inner(&self, i: usize, j: usize) -> Complex64 {
        let a = &self.members[i];
        let b = &self.members[j];
        let s = self.space_product(&a.space, &b.space);
        if s == 0.0 {
            return Complex64::default();
        }
        time_inner(&self.grid, &a.time, &b.time) * s
    }

    /// `<f, e_i>`.
    pub fn inner_with(&self, f: &GridFunction, i: usize) -> Complex64 {
        let m = &self.members[i];
        let w = self.grid.trapezoid_weights();
        let mut acc = Complex64::default();
        for (k, wk) in w.iter().enumerate() {
            let mut s = Complex64::default();
            for (j, node) in self.boundary.nodes.iter().enumerate() {
                s += f.at(k, j) * (node.weight * m.space[j]);
            }
            acc += s * m.time[k].conj() * *wk;
        }
        acc
    }

    /// `sum_i coeffs[i] e_i`.
    pub fn combine(&self, coeffs: &[Complex64]) -> GridFunction {
        let nodes = self.boundary.len();
        let mut f = GridFunction::zeros(self.grid, nodes);
        for (c, m) in coeffs.iter().zip(&self.members) {
            if *c == Complex64::default() {
                continue;
            }
            for k in 0..self.grid.len() {
                let a = m.time[k] * *c;
                for j in 0..nodes {
                    f.values[k * nodes + j] += a * m.space[j];
                }
            }
        }
        f
    }

    /// The family restricted to `[0, t_intervals]`.
    pub fn truncate_time(&self, intervals: usize) -> SequenceFamily {
        let len = intervals + 1;
        SequenceFamily {
            label: self.label.clone(),
            grid: self.grid.truncate(intervals),
            boundary: self.boundary.clone(),
            members: self
                .members
                .iter()
                .map(|m| Member {
                    time: m.time[..len].to_vec(),
                    ..m.clone()
                })
                .collect(),
        }
    }

    /// Members with `|index| <= n`.
    pub fn leading(&self, n: usize) -> SequenceFamily {
        SequenceFamily {
            members: self.members[..self.size_at(n)].to_vec(),
            ..self.clone()
        }
    }

    /// Members with `|index| > n`.
    pub fn tail(&self, n: usize) -> SequenceFamily {
        SequenceFamily {
            members: self.members[self.size_at(n)..].to_vec(),
            ..self.clone()
        }
    }
}

fn time_inner(grid: &TimeGrid, a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let n = a.len();
    let mut acc = Complex64::default();
    for k in 1..n - 1 {
        acc += a[k] * b[k].conj();
    }
    acc += (a[0] * b[0].conj() + a[n - 1] * b[n - 1].conj()) * 0.5;
    acc * grid.step()
}

/// Frame bounds of the nested section `|index| <= n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramLevel {
    pub n: usize,
    pub size: usize,
    pub m_n: f64,
    pub big_m_n: f64,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub label: String,
    pub levels: Vec<GramLevel>,
    /// `gram[j][k] = <e_k, e_j>`.
    #[serde(skip)]
    pub gram: Vec<Vec<Complex64>>,
    pub hermitian_defect: f64,
}

impl GramReport {
    pub fn level(&self, n: usize) -> Option<&GramLevel> {
        self.levels.iter().find(|l| l.n == n)
    }

    pub fn last(&self) -> &GramLevel {
        self.levels.last().expect("at least one level")
    }

    /// `m_a / m_b`, the scale-free plateau indicator.
    pub fn lower_ratio(&self, a: usize, b: usize) -> Option<f64> {
        Some(self.level(a)?.m_n / self.level(b)?.m_n)
    }

    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.gram.len();
        DMatrix::from_fn(n, n, |i, j| self.gram[i][j])
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Gram matrix `G[j][k] = <e_k, e_j>` assembled from both triangles.
pub fn gram_matrix(family: &SequenceFamily) -> Result<(Vec<Vec<Complex64>>, f64)> {
    let n = family.len();
    let rows: Vec<Vec<Complex64>> =
        par::map_range(n, |j| (0..n).map(|k| family.inner(k, j)).collect());
    let scale = (0..n)
        .map(|i| rows[i][i].norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut defect: f64 = 0.0;
    for j in 0..n {
        for k in 0..n {
            defect = defect.max((rows[j][k] - rows[k][j].conj()).norm() / scale);
        }
    }
    if defect > HERMITIAN_TOL {
        return Err(Error::QuadratureInconsistency(defect));
    }
    let mut g = rows;
    for j in 0..n {
        g[j][j] = Complex64::new(g[j][j].re, 0.0);
        for k in j + 1..n {
            let avg = (g[j][k] + g[k][j].conj()) * 0.5;
            g[j][k] = avg;
            g[k][j] = avg.conj();
        }
    }
    Ok((g, defect))
}

fn extreme_eigenvalues(g: &[Vec<Complex64>], size: usize) -> (f64, f64) {
    if size == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = DMatrix::from_fn(size, size, |i, j| g[i][j]);
    let eig = SymmetricEigen::new(m);
    let lo = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Gram report for nested sections `|index| <= n`, `n = 1..=truncation`.
pub fn gram(family: &SequenceFamily, truncation: usize) -> Result<GramReport> {
    if truncation == 0 || truncation > family.max_mode() {
        return Err(Error::Precondition(format!(
            "truncation {truncation} outside 1..={}",
            family.max_mode()
        )));
    }
    let section = family.leading(truncation);
    let (g, defect) = gram_matrix(&section)?;
    let sizes: Vec<(usize, usize)> = (1..=truncation)
        .map(|n| (n, section.size_at(n)))
        .filter(|(_, s)| *s > 0)
        .collect();
    let levels = par::map_slice(&sizes, |&(n, size)| {
        let (lo, hi) = extreme_eigenvalues(&g, size);
        GramLevel {
            n,
            size,
            m_n: lo,
            big_m_n: hi,
            condition: hi / lo,
        }
    });
    Ok(GramReport {
        label: family.label.clone(),
        levels,
        gram: g,
        hermitian_defect: defect,
    })
}

fn condition_of(lo: f64, hi: f64) -> f64 {
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Checks the condition cap on a Gram section and returns `(lower, condition)`.
pub fn certify(g: &[Vec<Complex64>], cap: f64) -> Result<(f64, f64)> {
    let (lo, hi) = extreme_eigenvalues(g, g.len());
    let condition = condition_of(lo, hi);
    if !(condition <= cap) {
        return Err(Error::NearDegenerate {
            lower: lo,
            condition,
            cap,
        });
    }
    Ok((lo, condition))
}

/// Biorthogonal family in the span of the first `truncation` modes.
#[derive(Debug, Clone)]
pub struct Biorthogonal {
    /// `duals[k] = sum_n coefficients[k][n] e_n`.
    pub coefficients: DMatrix<Complex64>,
    pub duals: Vec<GridFunction>,
    pub lower: f64,
    pub condition: f64,
    /// `max |<psi_k, e_m> - delta_km|`, computed from the dual grid functions.
    pub residual: f64,
}

pub fn biorthogonal(family: &SequenceFamily, truncation: usize, cap: f64) -> Result<Biorthogonal> {
    let section = family.leading(truncation);
    if section.is_empty() {
        return Err(Error::Precondition("empty section".into()));
    }
    let (g, _) = gram_matrix(&section)?;
    let (lower, condition) = certify(&g, cap)?;
    let n = section.len();
    let gt = DMatrix::from_fn(n, n, |i, j| g[j][i]);
    let c = gt.try_inverse().ok_or(Error::NearDegenerate {
        lower,
        condition,
        cap,
    })?;
    let duals: Vec<GridFunction> = par::map_range(n, |k| {
        let row: Vec<Complex64> = (0..n).map(|j| c[(k, j)]).collect();
        section.combine(&row)
    });
    let residual = par::map_range(n, |k| {
        (0..n)
            .map(|m| {
                let d = if k == m { 1.0 } else { 0.0 };
                (section.inner_with(&duals[k], m) - d).norm()
            })
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max);
    Ok(Biorthogonal {
        coefficients: c,
        duals,
        lower,
        condition,
        residual,
    })
}

/// Per-index squared distances and their tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosenessReport {
    pub indices: Vec<i64>,
    pub distance_sq: Vec<f64>,
    /// Sums over consecutive blocks of `block` positive modes (both signs).
    pub block_sums: Vec<f64>,
    pub block: usize,
    /// `tail[n] = sum over |index| > n`, for `n = 0..=max mode`.
    pub tail: Vec<f64>,
}

impl ClosenessReport {
    /// Fitted slope of the per-index distance (not squared) against `beta`.
    pub fn slope_against(&self, betas: &[f64]) -> Option<f64> {
        let d: Vec<f64> = self.distance_sq.iter().map(|v| v.sqrt()).collect();
        loglog_fit(betas, &d).map(|f| f.slope)
    }

    pub fn blocks_decrease(&self) -> bool {
        self.block_sums.windows(2).all(|w| w[1] < w[0])
    }

    pub fn write_csv<W: Write>(&self, mut out: W, provenance: Option<&str>) -> Result<()> {
        if let Some(p) = provenance {
            writeln!(out, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "distance_sq"])?;
        for (i, d) in self.indices.iter().zip(&self.distance_sq) {
            w.write_record([i.to_string(), format!("{d:.15e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const DEFAULT_BLOCK: usize = 10;

pub fn quadratic_closeness(
    a: &SequenceFamily,
    b: &SequenceFamily,
    block: usize,
) -> Result<ClosenessReport> {
    if a.indices() != b.indices() {
        return Err(Error::Shape("families have different index sets".into()));
    }
    a.grid.ensure_same(&b.grid)?;
    if a.boundary != b.boundary {
        return Err(Error::Shape(
            "families use different boundary quadratures".into(),
        ));
    }
    let w = a.grid.trapezoid_weights();
    let distance_sq: Vec<f64> = par::map_range(a.len(), |i| {
        let (x, y) = (&a.members[i], &b.members[i]);
        let mut acc = 0.0;
        for (k, wk) in w.iter().enumerate() {
            for (j, node) in a.boundary.nodes.iter().enumerate() {
                acc +=
                    wk * node.weight * (x.time[k] * x.space[j] - y.time[k] * y.space[j]).norm_sqr();
            }
        }
        acc
    });
    let max_mode = a.max_mode();
    let mut per_mode = vec![0.0; max_mode + 1];
    for (m, d) in a.members.iter().zip(&distance_sq) {
        per_mode[m.index.unsigned_abs() as usize] += d;
    }
    let mut tail = vec![0.0; max_mode + 1];
    for n in (0..max_mode).rev() {
        tail[n] = tail[n + 1] + per_mode[n + 1];
    }
    let block = block.max(1);
    let block_sums = per_mode[1..]
        .chunks(block)
        .filter(|c| c.len() == block)
        .map(|c| c.iter().sum())
        .collect();
    Ok(ClosenessReport {
        indices: a.indices(),
        distance_sq,
        block_sums,
        block,
        tail,
    })
}

/// `{k_n e^{i beta_n (t - shift)}}` over `n in Z'` with `beta_{-n} = -beta_n`
/// and `k_{-n} = k_n`, where `k_n = psi_n`.
pub fn exponential_family(
    pairs: &[EigenPair],
    grid: TimeGrid,
    boundary: &BoundaryQuadrature,
    shift: f64,
) -> Result<SequenceFamily> {
    let mut members = Vec::with_capacity(2 * pairs.len());
    for p in pairs {
        for sign in [1i64, -1] {
            let b = p.beta * sign as f64;
            members.push(Member {
                index: sign * p.index as i64,
                beta: b,
                time: grid.sample(|t| (Complex64::i() * b * (t - shift)).exp()),
                space: p.psi.clone(),
            });
        }
    }
    SequenceFamily::new("pure exponentials", grid, boundary.clone(), members)
}

/// The cosine and sine families `{k_n cos(beta_n t)}`, `{k_n sin(beta_n t)}`
/// built from a conjugate-symmetric exponential family.
pub fn sine_cosine_family(
    exponentials: &SequenceFamily,
) -> Result<(SequenceFamily, SequenceFamily)> {
    let mut cos = Vec::new();
    let mut sin = Vec::new();
    for m in exponentials.members.iter().filter(|m| m.index > 0) {
        let partner = exponentials
            .members
            .iter()
            .find(|o| o.index == -m.index)
            .ok_or_else(|| {
                Error::Precondition(format!("index {} has no partner {}", m.index, -m.index))
            })?;
        if (partner.beta + m.beta).norm() > 1e-12 * m.beta.norm().max(1.0)
            || partner.space != m.space
        {
            return Err(Error::Precondition(format!(
                "index {} breaks beta_(-n) = -beta_n, k_(-n) = k_n",
                m.index
            )));
        }
        let half = |f: &dyn Fn(Complex64, Complex64) -> Complex64| -> Vec<Complex64> {
            m.time
                .iter()
                .zip(&partner.time)
                .map(|(a, b)| f(*a, *b))
                .collect()
        };
        cos.push(Member {
            index: m.index,
            beta: m.beta,
            time: half(&|a, b| (a + b) * 0.5),
            space: m.space.clone(),
        });
        sin.push(Member {
            index: m.index,
            beta: m.beta,
            time: half(&|a, b| (a - b) / Complex64::new(0.0, 2.0)),
            space: m.space.clone(),
        });
    }
    if exponentials
        .members
        .iter()
        .any(|m| m.index < 0 && !exponentials.members.iter().any(|o| o.index == -m.index))
    {
        return Err(Error::Precondition("asymmetric index set".into()));
    }
    Ok((
        SequenceFamily::new(
            "cosines",
            exponentials.grid,
            exponentials.boundary.clone(),
            cos,
        )?,
        SequenceFamily::new(
            "sines",
            exponentials.grid,
            exponentials.boundary.clone(),
            sin,
        )?,
    ))
}

/// Coefficients recovered against the biorthogonal family and their decay fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub indices: Vec<i64>,
    pub recovered: Vec<Complex64>,
    pub exponent: f64,
    pub condition: f64,
}

/// Recovers `alpha_n = <Phi, psi_n>` and fits `log |alpha_n|` against `log |beta_n|`.
pub fn coefficient_decay_check(
    family: &SequenceFamily,
    phi: &GridFunction,
    truncation: usize,
    cap: f64,
) -> Result<DecayReport> {
    let bio = biorthogonal(family, truncation, cap)?;
    let section = family.leading(truncation);
    let recovered: Vec<Complex64> =
        par::map_slice(&bio.duals, |d| inner_functions(&section, phi, d));
    let (betas, mags): (Vec<f64>, Vec<f64>) = section
        .members
        .iter()
        .zip(&recovered)
        .map(|(m, a)| (m.beta.norm(), a.norm()))
        .unzip();
    let exponent = loglog_fit(&betas, &mags).map(|f| f.slope).ok_or_else(|| {
        Error::Precondition("not enough nonzero coefficients to fit a decay rate".into())
    })?;
    Ok(DecayReport {
        indices: section.indices(),
        recovered,
        exponent,
        condition: bio.condition,
    })
}

/// `<f, g>` for two grid functions on the family's quadrature.
pub fn inner_functions(family: &SequenceFamily, f: &GridFunction, g: &GridFunction) -> Complex64 {
    let w = family.grid.trapezoid_weights();
    let mut acc = Complex64::default();
    for (k, wk) in w.iter().enumerate() {
        for (j, node) in family.boundary.nodes.iter().enumerate() {
            acc += f.at(k, j) * g.at(k, j).conj() * (wk * node.weight);
        }
    }
    acc
}

/// Outcome of the numerical Paley-Wiener test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaleyWienerReport {
    /// Smallest cut with tail closeness below the comparator's lower bound.
    pub n0: Option<usize>,
    pub tail: f64,
    pub comparator_lower: f64,
    /// Lower frame bound of the perturbed family restricted to `|n| > n0`.
    pub perturbed_tail_lower: f64,
    /// `(sqrt(m) - sqrt(tail))^2`, the bound the theorem guarantees.
    pub guaranteed_lower: f64,
    pub holds: bool,
}

/// If the tail closeness beyond `N0` is below the comparator's lower frame
/// bound, the perturbed tail family must have a positive lower bound.
pub fn paley_wiener_check(
    perturbed: &SequenceFamily,
    comparator: &SequenceFamily,
    closeness: &ClosenessReport,
) -> Result<PaleyWienerReport> {
    let max_mode = comparator.max_mode();
    for n0 in 0..max_mode {
        let tail = closeness.tail[n0];
        let cmp_tail = comparator.tail(n0);
        let (g, _) = gram_matrix(&cmp_tail)?;
        let (lo, _) = extreme_eigenvalues(&g, g.len());
        if tail < lo {
            let (gp, _) = gram_matrix(&perturbed.tail(n0))?;
            let (plo, _) = extreme_eigenvalues(&gp, gp.len());
            let guaranteed = (lo.sqrt() - tail.sqrt()).powi(2);
            return Ok(PaleyWienerReport {
                n0: Some(n0),
                tail,
                comparator_lower: lo,
                perturbed_tail_lower: plo,
                guaranteed_lower: guaranteed,
                holds: plo > 0.0 && plo >= guaranteed * (1.0 - 1e-9),
            });
        }
    }
    Ok(PaleyWienerReport {
        n0: None,
        tail: f64::NAN,
        comparator_lower: f64::NAN,
        perturbed_tail_lower: f64::NAN,
        guaranteed_lower: f64::NAN,
        holds: true,
    })
}

/// Linear-independence smoke test: the only solution of `G x = 0` found by
/// a Cholesky solve is `x = 0` when the section passes the condition cap.
pub fn independence_smoke_test(report: &GramReport, cap: f64) -> Result<bool> {
    let (lo, hi) = extreme_eigenvalues(&report.gram, report.gram.len());
    if !(condition_of(lo, hi) <= cap) {
        return Ok(false);
    }
    let m = report.matrix();
    let chol = nalgebra::Cholesky::new(m).ok_or(Error::NearDegenerate {
        lower: lo,
        condition: condition_of(lo, hi),
        cap,
    })?;
    let zero = nalgebra::DVector::from_element(report.gram.len(), Complex64::default());
    let x = chol.solve(&zero);
    Ok(x.iter().all(|v| v.norm() == 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{compute_eigenpairs, DomainSpec, Face};
    use std::f64::consts::PI;

    fn fourier(horizon: f64, modes: usize, h: f64) -> SequenceFamily {
        let grid = TimeGrid::new(horizon, h).unwrap();
        let members = (1..=modes as i64)
            .flat_map(|n| [n, -n])
            .map(|n| Member {
                index: n,
                beta: Complex64::new(n as f64, 0.0),
                time: grid.sample(|t| Complex64::new(0.0, n as f64 * t).exp() / (2.0 * PI).sqrt()),
                space: vec![1.0],
            })
            .collect();
        SequenceFamily::new("fourier", grid, BoundaryQuadrature::scalar(), members).unwrap()
    }

    #[test]
    fn orthonormal_fourier_family() {
        let f = fourier(2.0 * PI, 10, 2.0 * PI / 2000.0);
        let r = gram(&f, 10).unwrap();
        for (i, row) in r.gram.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((v - d).norm() < 1e-10);
            }
        }
        assert!((r.last().m_n - 1.0).abs() < 1e-10 && (r.last().big_m_n - 1.0).abs() < 1e-10);
        let b = biorthogonal(&f, 10, DEFAULT_CONDITION_CAP).unwrap();
        assert!(b.residual < 1e-10);
        for (k, d) in b.duals.iter().enumerate() {
            for (t, v) in d.values.iter().enumerate() {
                assert!((v - f.members[k].time[t]).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn short_horizon_collapses_and_interlaces() {
        let f = fourier(PI, 12, 1e-3);
        let r = gram(&f, 12).unwrap();
        assert!(r.levels.last().unwrap().m_n < 0.05 * r.levels[0].m_n);
        for w in r.levels.windows(2) {
            assert!(w[1].m_n <= w[0].m_n * (1.0 + 1e-12));
            assert!(w[1].big_m_n >= w[0].big_m_n * (1.0 - 1e-12));
        }
    }

    #[test]
    fn two_member_hilbert_segment() {
        let grid = TimeGrid::new(1.0, 1e-4).unwrap();
        let members = vec![
            Member {
                index: 1,
                beta: Complex64::new(1.0, 0.0),
                time: vec![Complex64::new(1.0, 0.0); grid.len()],
                space: vec![1.0],
            },
            Member {
                index: 2,
                beta: Complex64::new(2.0, 0.0),
                time: grid.sample(|t| Complex64::new(t, 0.0)),
                space: vec![1.0],
            },
        ];
        let f =
            SequenceFamily::new("segment", grid, BoundaryQuadrature::scalar(), members).unwrap();
        let b = biorthogonal(&f, 2, DEFAULT_CONDITION_CAP).unwrap();
        // Trapezoid Gram [[1, 1/2], [1/2, 1/3 + h^2/6]]; the duals are 4 - 6t and 12t - 6 up to O(h^2).
        assert!(b.residual < 1e-12);
        assert!(f.inner_with(&b.duals[0], 1).norm() < 1e-12);
        let d0 = &b.duals[0];
        assert!((d0.values[0].re - 4.0).abs() < 1e-6);
        assert!((d0.values[grid.intervals()].re + 2.0).abs() < 1e-6);
    }

    #[test]
    fn near_degenerate_is_refused() {
        let f = fourier(PI / 2.0, 12, 1e-3);
        match biorthogonal(&f, 12, 1e6) {
            Err(Error::NearDegenerate {
                lower,
                condition,
                cap,
            }) => {
                assert!(condition > cap && lower < 1e-3);
            }
            other => panic!("expected refusal, got {:?}", other.map(|b| b.condition)),
        }
    }

    #[test]
    fn sine_and_cosine_families() {
        let d = DomainSpec::interval(PI, vec![Face::Right]);
        let mut s = compute_eigenpairs(&d, 8, 0.0).unwrap();
        for p in &mut s.pairs {
            p.psi = vec![1.0];
        }
        let grid = TimeGrid::new(PI, 1e-3).unwrap();
        let e = exponential_family(&s.pairs, grid, &BoundaryQuadrature::scalar(), 0.0).unwrap();
        let (cos, sin) = sine_cosine_family(&e).unwrap();
        for fam in [&cos, &sin] {
            let r = gram(fam, 8).unwrap();
            assert!((r.last().m_n - PI / 2.0).abs() < 1e-6, "{}", r.last().m_n);
            assert!((r.last().big_m_n - PI / 2.0).abs() < 1e-6);
        }
        let mut broken = e.clone();
        broken.members.retain(|m| m.index != -3);
        assert!(sine_cosine_family(&broken).is_err());
    }

    #[test]
    fn closeness_of_identical_families() {
        let f = fourier(2.0 * PI, 10, 1e-2);
        let r = quadratic_closeness(&f, &f, 5).unwrap();
        assert!(r.distance_sq.iter().all(|d| *d == 0.0));
        assert_eq!(r.block_sums.len(), 2);
        let g = fourier(2.0 * PI, 9, 1e-2);
        assert!(matches!(
            quadratic_closeness(&f, &g, 5),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn decay_of_recovered_coefficients() {
        let f = fourier(2.0 * PI, 20, 2.0 * PI / 4000.0);
        let alphas: Vec<Complex64> = f
            .members
            .iter()
            .map(|m| Complex64::new(1.0 / (m.index as f64).powi(2), 0.0))
            .collect();
        let phi = f.combine(&alphas);
        let r = coefficient_decay_check(&f, &phi, 20, DEFAULT_CONDITION_CAP).unwrap();
        assert!((r.exponent + 2.0).abs() < 1e-6);
        let mut single = vec![Complex64::default(); f.len()];
        single[5] = Complex64::new(0.3, -0.7);
        let bio = biorthogonal(&f, 20, DEFAULT_CONDITION_CAP).unwrap();
        let phi = f.combine(&single);
        for (k, d) in bio.duals.iter().enumerate() {
            let a = inner_functions(&f, &phi, d);
            assert!((a - single[k]).norm() < 1e-10);
        }
    }

    #[test]
    fn independence_of_certified_family() {
        let f = fourier(2.0 * PI, 5, 1e-2);
        let r = gram(&f, 5).unwrap();
        assert!(independence_smoke_test(&r, DEFAULT_CONDITION_CAP).unwrap());
    }

    #[test]
    fn gram_json_fields() {
        let f = fourier(2.0 * PI, 2, 1e-2);
        let r = gram(&f, 2).unwrap();
        let mut buf = Vec::new();
        r.write_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["label"], "fourier");
        assert!(v["levels"][1]["m_n"].is_number());
        assert!(v["levels"][1]["condition"].is_number());
    }
}
