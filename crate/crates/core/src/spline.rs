/// Natural cubic spline through uniformly spaced samples on `[0, span]`.
#[derive(Debug, Clone)]
pub struct UniformSpline {
    step: f64,
    values: Vec<f64>,
    second: Vec<f64>,
    cumulative: Vec<f64>,
}

impl UniformSpline {
    pub fn new(span: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n >= 2, "spline needs at least two samples");
        let step = span / (n - 1) as f64;
        let mut second = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas).
            let m = n - 2;
            let mut diag = vec![4.0; m];
            let mut rhs: Vec<f64> = (1..n - 1)
                .map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (step * step))
                .collect();
            for i in 1..m {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                rhs[i] -= w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = (rhs[i] - second[i + 2]) / diag[i];
            }
        }
        let mut spline = Self {
            step,
            values,
            second,
            cumulative: Vec::new(),
        };
        let mut acc = 0.0;
        spline.cumulative.push(0.0);
        for k in 0..n - 1 {
            acc += spline.cell_integral(k, 1.0);
            spline.cumulative.push(acc);
        }
        spline
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.values.len();
        let pos = (x / self.step).clamp(0.0, (n - 1) as f64);
        let i = (pos.floor() as usize).min(n - 2);
        (i, pos - i as f64)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, u) = self.locate(x);
        let h2 = self.step * self.step;
        let a = 1.0 - u;
        a * self.values[i]
            + u * self.values[i + 1]
            + h2 / 6.0 * ((a * a * a - a) * self.second[i] + (u * u * u - u) * self.second[i + 1])
    }

    fn cell_integral(&self, k: usize, u: f64) -> f64 {
        let h = self.step;
        let a = 1.0 - u;
        h * (self.values[k] * (u - 0.5 * u * u)
            + self.values[k + 1] * 0.5 * u * u
            + h * h / 6.0
                * ((-0.25 * a.powi(4) + 0.5 * a * a - 0.25) * self.second[k]
                    + (0.25 * u.powi(4) - 0.5 * u * u) * self.second[k + 1]))
    }

    /// `int_0^x s(t) dt`.
    pub fn integral(&self, x: f64) -> f64 {
        let (i, u) = self.locate(x);
        self.cumulative[i] + self.cell_integral(i, u)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (i, u) = self.locate(x);
        let h = self.step;
        let a = 1.0 - u;
        (self.values[i + 1] - self.values[i]) / h
            + h / 6.0
                * (-(3.0 * a * a - 1.0) * self.second[i] + (3.0 * u * u - 1.0) * self.second[i + 1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_nodes_and_smooth_functions() {
        let span = 2.0;
        let n = 201;
        let vals: Vec<f64> = (0..n)
            .map(|i| (span * i as f64 / (n - 1) as f64).sin())
            .collect();
        let s = UniformSpline::new(span, vals.clone());
        for (i, v) in vals.iter().enumerate() {
            assert!((s.eval(span * i as f64 / (n - 1) as f64) - v).abs() < 1e-14);
        }
        for k in 0..50 {
            let x = 0.2 + 1.6 * k as f64 / 49.0;
            assert!((s.eval(x) - x.sin()).abs() < 1e-8);
            assert!((s.derivative(x) - x.cos()).abs() < 1e-5);
            assert!((s.integral(x) - (1.0 - x.cos())).abs() < 1e-8);
        }
    }
}
