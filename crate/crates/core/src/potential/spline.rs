//! Natural cubic spline used by tabulated potentials.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let n = knots.len();
        if n != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} knots but {} values",
                n,
                values.len()
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData { needed: 2, got: n });
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        if knots.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("table contains non-finite values".into()));
        }

        let mut second = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for the interior second derivatives.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for k in 0..m {
                let i = k + 1;
                let h0 = knots[i] - knots[i - 1];
                let h1 = knots[i + 1] - knots[i];
                diag[k] = 2.0 * (h0 + h1);
                upper[k] = h1;
                rhs[k] = 6.0 * ((values[i + 1] - values[i]) / h1 - (values[i] - values[i - 1]) / h0);
            }
            // Thomas sweep; the lower diagonal equals the previous upper entry.
            for k in 1..m {
                let factor = upper[k - 1] / diag[k - 1];
                diag[k] -= factor * upper[k - 1];
                rhs[k] -= factor * rhs[k - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for k in (0..m - 1).rev() {
                second[k + 1] = (rhs[k] - upper[k] * second[k + 2]) / diag[k];
            }
        }
        Ok(Self {
            knots,
            values,
            second,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn knot_second_derivatives(&self) -> &[f64] {
        &self.second
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Value and first two derivatives. Outside the knot range the spline is
    /// continued linearly, matching its zero end curvature.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.knots.len();
        let (lo, hi) = self.range();
        if x <= lo {
            let (v, d, _) = self.eval_segment(0, lo);
            return (v + d * (x - lo), d, 0.0);
        }
        if x >= hi {
            let (v, d, _) = self.eval_segment(n - 2, hi);
            return (v + d * (x - hi), d, 0.0);
        }
        let seg = match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&x).expect("finite knots"))
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        self.eval_segment(seg, x)
    }

    fn eval_segment(&self, i: usize, x: f64) -> (f64, f64, f64) {
        let (x0, x1) = (self.knots[i], self.knots[i + 1]);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let value = a * y0 + b * y1 + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m0 + (3.0 * b * b - 1.0) / 6.0 * h * m1;
        let d2 = a * m0 + b * m1;
        (value, d1, d2)
    }
}
