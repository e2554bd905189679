//! Symmetric tridiagonal eigenvalues by Sturm-sequence bisection, and
//! eigenvectors by inverse iteration.

#[derive(Debug, Clone)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length");
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    fn pivot_min(&self) -> f64 {
        let e2 = self.off.iter().fold(1.0_f64, |m, e| m.max(e * e));
        f64::MIN_POSITIVE * e2
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
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

    /// Number of eigenvalues strictly below `lambda` (negative LDLᵀ pivots).
    pub fn sturm_count(&self, lambda: f64) -> usize {
        let pivmin = self.pivot_min();
        let mut count = 0;
        let mut q = self.diag[0] - lambda;
        for i in 0..self.len() {
            if i > 0 {
                q = self.diag[i] - lambda - self.off[i - 1] * self.off[i - 1] / q;
            }
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// The `k`-th smallest eigenvalue (0-based), bisected to round-off.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.len());
        let (mut lo, mut hi) = self.gershgorin();
        let pad = f64::EPSILON * (lo.abs() + hi.abs()) + self.pivot_min();
        lo -= pad;
        hi += pad;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sturm_count(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `(A − shift·I) x = rhs` by Gaussian elimination with partial pivoting.
    pub fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        let n = self.len();
        let tiny = f64::EPSILON * self.gershgorin().1.abs().max(f64::MIN_POSITIVE);
        // rows hold (sub, diag, sup, sup2) after pivoting
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - shift).collect();
        let mut du: Vec<f64> = self.off.clone();
        let mut dl: Vec<f64> = self.off.clone();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let f = dl[i] / d[i];
                d[i + 1] -= f * du[i];
                b[i + 1] -= f * b[i];
                dl[i] = 0.0;
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                let tmp = d[i + 1];
                d[i + 1] = du[i] - f * tmp;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -f;
                }
                du[i] = tmp;
                b.swap(i, i + 1);
                b[i + 1] -= f * b[i];
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = b[n - 1] / d[n - 1];
        if n > 1 {
            x[n - 2] = (b[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
        }
        x
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.off[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Unit eigenvector for the eigenvalue closest to `lambda`, kept
    /// orthogonal to the unit vectors in `deflate`.
    pub fn eigenvector(&self, lambda: f64, deflate: &[&[f64]]) -> Vec<f64> {
        let n = self.len();
        let mut x: Vec<f64> = (0..n)
            .map(|i| 1.0 + ((i as f64) * 0.618_033_988_75).fract() + i as f64 / n as f64)
            .collect();
        let project = |x: &mut Vec<f64>| {
            for d in deflate {
                let c: f64 = x.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
                for (xi, di) in x.iter_mut().zip(d.iter()) {
                    *xi -= c * di;
                }
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for xi in x.iter_mut() {
                *xi /= norm;
            }
        };
        project(&mut x);
        for _ in 0..4 {
            x = self.solve_shifted(lambda, &x);
            project(&mut x);
        }
        x
    }

    pub fn residual(&self, lambda: f64, x: &[f64]) -> f64 {
        self.apply(x)
            .iter()
            .zip(x)
            .map(|(ax, xi)| (ax - lambda * xi).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
