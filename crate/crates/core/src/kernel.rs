//! Relaxation kernels `M(t)` and their normalisation
//! `N(t) = e^{2 gamma t}(1 + int_0^t M)`, `gamma = -M(0)/2`, which makes
//! `N(0) = 1` and `N'(0) = 0`.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::conv;
use crate::error::{Error, Result};
use crate::grid::{integrate_high_order, TimeGrid};
use crate::spline::UniformSpline;

/// Minimum number of tabulated samples for differentiating `M` numerically.
pub const MIN_DIFFERENTIABLE_SAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    #[default]
    Zero,
    /// `M(t) = sum_k a_k e^{-b_k t}`.
    ExponentialSum {
        coefficients: Vec<f64>,
        rates: Vec<f64>,
    },
    /// `M(t) = sum_k p_k t^k`.
    Polynomial {
        coefficients: Vec<f64>,
    },
    /// Uniform samples of `M` (and optionally `M'`, `M''`) from `t = 0`.
    Tabulated {
        step: f64,
        m: Vec<f64>,
        #[serde(default)]
        dm: Option<Vec<f64>>,
        #[serde(default)]
        ddm: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Velocity coefficient of the equation.
    pub c: f64,
}

/// `M`, `int_0^t M`, `M'`, `M''` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValues {
    pub m: f64,
    pub integral: f64,
    pub dm: f64,
    pub ddm: f64,
}

impl KernelSpec {
    pub fn zero(c: f64) -> Self {
        Self {
            family: KernelFamily::Zero,
            c,
        }
    }

    /// `M(t) = a e^{-b t}`.
    pub fn exponential(a: f64, b: f64, c: f64) -> Self {
        Self {
            family: KernelFamily::ExponentialSum {
                coefficients: vec![a],
                rates: vec![b],
            },
            c,
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.family {
            KernelFamily::Zero => true,
            KernelFamily::ExponentialSum { coefficients, .. }
            | KernelFamily::Polynomial { coefficients } => coefficients.iter().all(|a| *a == 0.0),
            KernelFamily::Tabulated { m, .. } => m.iter().all(|v| *v == 0.0),
        }
    }

    /// True when all derivatives come from closed forms or supplied samples.
    pub fn exact_derivatives(&self) -> bool {
        match &self.family {
            KernelFamily::Tabulated { dm, ddm, .. } => dm.is_some() && ddm.is_some(),
            _ => true,
        }
    }

    pub fn evaluator(&self, horizon: f64) -> Result<KernelEvaluator> {
        if !self.c.is_finite() {
            return Err(Error::Precondition(
                "velocity coefficient c must be finite".into(),
            ));
        }
        let inner = match &self.family {
            KernelFamily::Zero => Inner::Zero,
            KernelFamily::ExponentialSum {
                coefficients,
                rates,
            } => {
                if coefficients.len() != rates.len() {
                    return Err(Error::Precondition(format!(
                        "exponential kernel has {} coefficients but {} rates",
                        coefficients.len(),
                        rates.len()
                    )));
                }
                if coefficients.iter().chain(rates).any(|v| !v.is_finite()) {
                    return Err(Error::Precondition(
                        "exponential kernel parameters must be finite".into(),
                    ));
                }
                Inner::Exp(
                    coefficients
                        .iter()
                        .cloned()
                        .zip(rates.iter().cloned())
                        .collect(),
                )
            }
            KernelFamily::Polynomial { coefficients } => {
                if coefficients.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Precondition(
                        "polynomial kernel coefficients must be finite".into(),
                    ));
                }
                Inner::Poly(coefficients.clone())
            }
            KernelFamily::Tabulated { step, m, dm, ddm } => {
                tabulated(*step, m, dm.as_deref(), ddm.as_deref(), horizon)?
            }
        };
        Ok(KernelEvaluator { inner })
    }
}

enum Inner {
    Zero,
    Exp(Vec<(f64, f64)>),
    Poly(Vec<f64>),
    Table {
        m: UniformSpline,
        dm: UniformSpline,
        ddm: UniformSpline,
    },
}

/// Pointwise evaluation of a kernel family.
pub struct KernelEvaluator {
    inner: Inner,
}

impl KernelEvaluator {
    pub fn at(&self, t: f64) -> KernelValues {
        match &self.inner {
            Inner::Zero => KernelValues {
                m: 0.0,
                integral: 0.0,
                dm: 0.0,
                ddm: 0.0,
            },
            Inner::Exp(terms) => {
                let mut v = KernelValues {
                    m: 0.0,
                    integral: 0.0,
                    dm: 0.0,
                    ddm: 0.0,
                };
                for &(a, b) in terms {
                    let e = (-b * t).exp();
                    v.m += a * e;
                    v.integral += if b == 0.0 {
                        a * t
                    } else {
                        a * (-(-b * t).exp_m1()) / b
                    };
                    v.dm -= a * b * e;
                    v.ddm += a * b * b * e;
                }
                v
            }
            Inner::Poly(p) => {
                let mut v = KernelValues {
                    m: 0.0,
                    integral: 0.0,
                    dm: 0.0,
                    ddm: 0.0,
                };
                for (k, a) in p.iter().enumerate() {
                    let kf = k as f64;
                    v.m += a * t.powi(k as i32);
                    v.integral += a * t.powi(k as i32 + 1) / (kf + 1.0);
                    if k >= 1 {
                        v.dm += a * kf * t.powi(k as i32 - 1);
                    }
                    if k >= 2 {
                        v.ddm += a * kf * (kf - 1.0) * t.powi(k as i32 - 2);
                    }
                }
                v
            }
            Inner::Table { m, dm, ddm } => KernelValues {
                m: m.eval(t),
                integral: m.integral(t),
                dm: dm.eval(t),
                ddm: ddm.eval(t),
            },
        }
    }
}

/// Fourth-order finite-difference derivative of uniform samples.
fn differentiate(v: &[f64], h: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (v[i - 2] - 8.0 * v[i - 1] + 8.0 * v[i + 1] - v[i + 2]) / (12.0 * h)
            } else if i + 4 < n {
                (-25.0 * v[i] + 48.0 * v[i + 1] - 36.0 * v[i + 2] + 16.0 * v[i + 3]
                    - 3.0 * v[i + 4])
                    / (12.0 * h)
            } else {
                (25.0 * v[i] - 48.0 * v[i - 1] + 36.0 * v[i - 2] - 16.0 * v[i - 3] + 3.0 * v[i - 4])
                    / (12.0 * h)
            }
        })
        .collect()
}

fn tabulated(
    step: f64,
    m: &[f64],
    dm: Option<&[f64]>,
    ddm: Option<&[f64]>,
    horizon: f64,
) -> Result<Inner> {
    if !(step > 0.0) {
        return Err(Error::Precondition(format!(
            "tabulated kernel step {step} must be positive"
        )));
    }
    if m.len() < 2 || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition(
            "tabulated kernel needs at least two finite samples".into(),
        ));
    }
    for (name, s) in [("dm", dm), ("ddm", ddm)] {
        if let Some(s) = s {
            if s.len() != m.len() || s.iter().any(|v| !v.is_finite()) {
                return Err(Error::Precondition(format!(
                    "tabulated {name} must have {} finite samples",
                    m.len()
                )));
            }
        }
    }
    let span = step * (m.len() - 1) as f64;
    if span < horizon * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "tabulated kernel covers [0, {span}] but the grid needs [0, {horizon}]"
        )));
    }
    let needs_fd = dm.is_none() || ddm.is_none();
    if needs_fd && m.len() < MIN_DIFFERENTIABLE_SAMPLES {
        return Err(Error::KernelDerivative(format!(
            "{} samples are too few to differentiate M stably (need {} or supply dm/ddm)",
            m.len(),
            MIN_DIFFERENTIABLE_SAMPLES
        )));
    }
    let d1 = dm
        .map(|d| d.to_vec())
        .unwrap_or_else(|| differentiate(m, step));
    let d2 = ddm
        .map(|d| d.to_vec())
        .unwrap_or_else(|| differentiate(&d1, step));
    Ok(Inner::Table {
        m: UniformSpline::new(span, m.to_vec()),
        dm: UniformSpline::new(span, d1),
        ddm: UniformSpline::new(span, d2),
    })
}

/// Normalised kernel sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedKernel {
    pub spec: KernelSpec,
    /// `-M(0)/2`.
    pub gamma: f64,
    /// `c + gamma`.
    pub alpha: f64,
    pub grid: TimeGrid,
    pub n: Vec<f64>,
    pub np: Vec<f64>,
    pub npp: Vec<f64>,
    /// `N_1 = e^{-alpha t} N'`.
    pub n1: Vec<f64>,
    pub n1p: Vec<f64>,
    pub n1pp: Vec<f64>,
    /// Resolvent of `N_1`: `L + N_1 * L = N_1`.
    pub l: Vec<f64>,
}

pub fn normalize(spec: &KernelSpec, grid: &TimeGrid) -> Result<NormalizedKernel> {
    let eval = spec.evaluator(grid.horizon())?;
    let m0 = eval.at(0.0).m;
    let gamma = -0.5 * m0;
    let alpha = spec.c + gamma;
    let len = grid.len();
    let mut n = Vec::with_capacity(len);
    let mut np = Vec::with_capacity(len);
    let mut npp = Vec::with_capacity(len);
    let mut n1 = Vec::with_capacity(len);
    let mut n1p = Vec::with_capacity(len);
    let mut n1pp = Vec::with_capacity(len);
    for k in 0..len {
        let t = grid.time(k);
        let v = eval.at(t);
        let nt = 1.0 + v.integral;
        let g2 = 2.0 * gamma;
        let e = (g2 * t).exp();
        let d0 = e * nt;
        let d1 = if k == 0 { 0.0 } else { e * (g2 * nt + v.m) };
        let d2 = e * (g2 * g2 * nt + 2.0 * g2 * v.m + v.dm);
        let d3 = e * (g2 * g2 * g2 * nt + 3.0 * g2 * g2 * v.m + 3.0 * g2 * v.dm + v.ddm);
        let ea = (-alpha * t).exp();
        n.push(if k == 0 { 1.0 } else { d0 });
        np.push(d1);
        npp.push(d2);
        n1.push(ea * d1);
        n1p.push(ea * (d2 - alpha * d1));
        n1pp.push(ea * (d3 - 2.0 * alpha * d2 + alpha * alpha * d1));
    }
    if let Some(k) = n
        .iter()
        .chain(&npp)
        .chain(&n1pp)
        .position(|v| !v.is_finite())
    {
        return Err(Error::Precondition(format!(
            "normalised kernel overflows on the grid (sample {})",
            k % len
        )));
    }
    let l = resolvent_of(&n1, grid.step());
    Ok(NormalizedKernel {
        spec: spec.clone(),
        gamma,
        alpha,
        grid: *grid,
        n,
        np,
        npp,
        n1,
        n1p,
        n1pp,
        l,
    })
}

fn resolvent_of(n1: &[f64], h: f64) -> Vec<f64> {
    conv::march::<f64, _>(n1, n1.len(), |m, hist| n1[m] - h * hist)
}

/// Resolvent of `N_1` by product-trapezoid marching.
pub fn resolvent(kernel: &NormalizedKernel) -> Vec<f64> {
    resolvent_of(&kernel.n1, kernel.grid.step())
}

/// Max of `|L + N_1 * L - N_1|` over (at most `probes`) grid nodes, with the
/// convolution evaluated by a high-order rule independent of the marching.
pub fn resolvent_residual(n1: &[f64], l: &[f64], step: f64, probes: usize) -> f64 {
    let n = n1.len();
    let stride = (n / probes.max(1)).max(1);
    (0..n)
        .step_by(stride)
        .map(|k| {
            let prod: Vec<f64> = (0..=k).map(|j| n1[k - j] * l[j]).collect();
            (l[k] + integrate_high_order(&prod, step) - n1[k]).abs()
        })
        .fold(0.0, f64::max)
}

impl NormalizedKernel {
    /// The same kernel resampled on another grid.
    pub fn on_grid(&self, grid: &TimeGrid) -> Result<NormalizedKernel> {
        normalize(&self.spec, grid)
    }

    pub fn is_memoryless(&self) -> bool {
        self.spec.is_zero()
    }

    /// Prefix of the kernel on `[0, t_intervals]`.
    pub fn truncate(&self, intervals: usize) -> NormalizedKernel {
        let len = intervals + 1;
        NormalizedKernel {
            spec: self.spec.clone(),
            gamma: self.gamma,
            alpha: self.alpha,
            grid: self.grid.truncate(intervals),
            n: self.n[..len].to_vec(),
            np: self.np[..len].to_vec(),
            npp: self.npp[..len].to_vec(),
            n1: self.n1[..len].to_vec(),
            n1p: self.n1p[..len].to_vec(),
            n1pp: self.n1pp[..len].to_vec(),
            l: self.l[..len].to_vec(),
        }
    }

    /// CSV with columns `t, N, Np, N1, L`.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: Option<&str>) -> Result<()> {
        if let Some(p) = provenance {
            writeln!(out, "# {p}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "N", "Np", "N1", "L"])?;
        for k in 0..self.grid.len() {
            w.write_record([
                format!("{:.15e}", self.grid.time(k)),
                format!("{:.15e}", self.n[k]),
                format!("{:.15e}", self.np[k]),
                format!("{:.15e}", self.n1[k]),
                format!("{:.15e}", self.l[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memoryless_kernel() {
        let g = TimeGrid::new(1.0, 0.01).unwrap();
        let k = normalize(&KernelSpec::zero(0.0), &g).unwrap();
        assert_eq!(k.gamma, 0.0);
        assert_eq!(k.alpha, 0.0);
        assert!(k.n.iter().all(|v| *v == 1.0));
        assert!(k.n1.iter().all(|v| *v == 0.0));
        assert!(k.l.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exponential_kernel_closed_form() {
        let g = TimeGrid::new(3.0, 0.01).unwrap();
        for c in [0.0, 1.0] {
            let k = normalize(&KernelSpec::exponential(1.0, 1.0, c), &g).unwrap();
            assert_eq!(k.gamma, -0.5);
            assert_eq!(k.alpha, c - 0.5);
            assert_eq!(k.n[0], 1.0);
            assert_eq!(k.np[0], 0.0);
            assert_eq!(k.n1[0], 0.0);
            assert_eq!(k.l[0], 0.0);
            for (i, t) in g.times().iter().enumerate() {
                let exact = 2.0 * (-t).exp() - (-2.0 * t).exp();
                let dexact = -2.0 * (-t).exp() + 2.0 * (-2.0 * t).exp();
                let ddexact = 2.0 * (-t).exp() - 4.0 * (-2.0 * t).exp();
                assert!((k.n[i] - exact).abs() < 1e-14);
                assert!((k.np[i] - dexact).abs() < 1e-14);
                assert!((k.npp[i] - ddexact).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn n1_derivatives_match_differences() {
        let g = TimeGrid::new(2.0, 1e-3).unwrap();
        let spec = KernelSpec {
            family: KernelFamily::ExponentialSum {
                coefficients: vec![0.7, -0.3],
                rates: vec![1.5, 0.4],
            },
            c: 0.3,
        };
        let k = normalize(&spec, &g).unwrap();
        let h = g.step();
        for i in 1..g.len() - 1 {
            let d1 = (k.n1[i + 1] - k.n1[i - 1]) / (2.0 * h);
            let d2 = (k.n1p[i + 1] - k.n1p[i - 1]) / (2.0 * h);
            assert!((d1 - k.n1p[i]).abs() < 1e-5);
            assert!((d2 - k.n1pp[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn polynomial_kernel() {
        let g = TimeGrid::new(1.0, 0.1).unwrap();
        let spec = KernelSpec {
            family: KernelFamily::Polynomial {
                coefficients: vec![0.0, 1.0],
            },
            c: 0.0,
        };
        let k = normalize(&spec, &g).unwrap();
        // M(t) = t: gamma = 0, N = 1 + t^2/2.
        for (i, t) in g.times().iter().enumerate() {
            assert!((k.n[i] - (1.0 + t * t / 2.0)).abs() < 1e-14);
            assert!((k.n1[i] - t).abs() < 1e-14);
        }
    }

    #[test]
    fn resolvent_of_linear_kernel_is_sine() {
        // N_1(t) = t has resolvent sin t.
        for h in [1e-2, 5e-3] {
            let g = TimeGrid::new(4.0, h).unwrap();
            let n1 = g.times();
            let l = resolvent_of(&n1, g.step());
            let err = g
                .times()
                .iter()
                .zip(&l)
                .map(|(t, v)| (t.sin() - v).abs())
                .fold(0.0, f64::max);
            assert!(err < 2.0 * h * h, "h={h}: {err}");
        }
        assert!(resolvent_of(&[0.0; 10], 0.1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn resolvent_residual_is_second_order() {
        let spec = KernelSpec::exponential(2.0, 3.0, 0.4);
        let res: Vec<f64> = [0.02, 0.01]
            .iter()
            .map(|h| {
                let k = normalize(&spec, &TimeGrid::new(3.0, *h).unwrap()).unwrap();
                resolvent_residual(&k.n1, &k.l, k.grid.step(), 300)
            })
            .collect();
        assert!(res[0] / res[1] >= 3.6, "{res:?}");
    }

    #[test]
    fn tabulated_kernel() {
        let h = 0.01;
        let m: Vec<f64> = (0..=400).map(|i| (-(i as f64) * h).exp()).collect();
        let spec = KernelSpec {
            family: KernelFamily::Tabulated {
                step: h,
                m: m.clone(),
                dm: None,
                ddm: None,
            },
            c: 0.0,
        };
        assert!(!spec.exact_derivatives());
        let g = TimeGrid::new(3.0, 0.005).unwrap();
        let k = normalize(&spec, &g).unwrap();
        let exact = normalize(&KernelSpec::exponential(1.0, 1.0, 0.0), &g).unwrap();
        let gap = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        assert!(gap(&k.n, &exact.n) < 1e-7);
        assert!(gap(&k.n1, &exact.n1) < 1e-5);
        assert!(gap(&k.n1p, &exact.n1p) < 1e-4);

        let coarse = KernelSpec {
            family: KernelFamily::Tabulated {
                step: 0.5,
                m: m.iter().step_by(50).cloned().collect(),
                dm: None,
                ddm: None,
            },
            c: 0.0,
        };
        assert!(matches!(
            normalize(&coarse, &g),
            Err(Error::KernelDerivative(_))
        ));
        let short = KernelSpec {
            family: KernelFamily::Tabulated {
                step: h,
                m: m[..100].to_vec(),
                dm: None,
                ddm: None,
            },
            c: 0.0,
        };
        assert!(normalize(&short, &g).is_err());
    }

    #[test]
    fn mismatched_exponential_parameters() {
        let spec = KernelSpec {
            family: KernelFamily::ExponentialSum {
                coefficients: vec![1.0],
                rates: vec![],
            },
            c: 0.0,
        };
        assert!(normalize(&spec, &TimeGrid::new(1.0, 0.1).unwrap()).is_err());
    }

    #[test]
    fn csv_header() {
        let k = normalize(&KernelSpec::zero(0.0), &TimeGrid::new(1.0, 0.5).unwrap()).unwrap();
        let mut buf = Vec::new();
        k.write_csv(&mut buf, None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,N,Np,N1,L\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
