//! Poincaré constant `C₂(μ) = 1/λ¹` from the discrete spectral gap of the
//! generator `L = d²/dx² − V' d/dx`, plus the Bakry–Émery upper bound.
//!
//! The Dirichlet form `Σ_e m_e ((u_{i+1} − u_i)/h)²` (zero-flux ends) and the
//! mass `diag(w)` are combined into `A = M^{-1/2} K M^{-1/2}`, which is
//! symmetric tridiagonal with `√w` spanning its kernel. Entries are formed
//! from log-weights so that tails with underflowing density stay finite.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals;
use crate::measure::{GridFunction, GridMeasure};
use crate::potential::PotentialSpec;
use crate::report::ext_f64;
use crate::tridiag::SymTridiag;

pub const MIN_SPECTRAL_NODES: usize = 64;
const LAMBDA0_TOL: f64 = 1e-6;
const GAP_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EstimateKind {
    C2,
    Cp { p: f64 },
    C1,
    CpBound { p: f64 },
    Lambda1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Eigensolve,
    VariationalLower,
    ClosedForm,
    Theorem1Bound,
    BakryEmery,
}

/// Which side of the true optimal constant a number sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundSide {
    Lower,
    Upper,
    Exact,
    /// Converges to the constant under grid refinement.
    Discretized,
}

impl Method {
    pub fn side(self) -> BoundSide {
        match self {
            Method::Eigensolve => BoundSide::Discretized,
            Method::VariationalLower => BoundSide::Lower,
            Method::ClosedForm => BoundSide::Exact,
            Method::Theorem1Bound | Method::BakryEmery => BoundSide::Upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridInfo {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl GridInfo {
    pub fn of(mu: &GridMeasure) -> Self {
        let (a, b) = mu.domain();
        Self { a, b, n: mu.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantEstimate {
    pub kind: EstimateKind,
    /// May be `+∞` (bound not applicable, or gap too small).
    #[serde(serialize_with = "ext_f64")]
    pub value: f64,
    pub method: Method,
    pub side: BoundSide,
    /// Eigen-residual, relative improvement at exit, or 0 for closed forms.
    #[serde(serialize_with = "ext_f64")]
    pub residual: f64,
    pub grid: Option<GridInfo>,
    pub flags: Vec<String>,
}

impl ConstantEstimate {
    pub fn new(kind: EstimateKind, value: f64, method: Method) -> Self {
        Self {
            kind,
            value,
            method,
            side: method.side(),
            residual: 0.0,
            grid: None,
            flags: Vec::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// Both ends of the discrete spectrum we need.
#[derive(Debug, Clone)]
pub struct SpectralGap {
    pub estimate: ConstantEstimate,
    pub lambda0: f64,
    pub lambda1: f64,
    pub eigenfunction: GridFunction,
}

pub(crate) fn assemble(mu: &GridMeasure) -> SymTridiag {
    let n = mu.len();
    let x = mu.nodes();
    let lw = mu.log_weights();
    let lm = mu.log_mid_weights();
    // log k_e with k_e = m_e / h_e²
    let lk: Vec<f64> = (0..n - 1)
        .map(|e| lm[e] - 2.0 * (x[e + 1] - x[e]).ln())
        .collect();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n - 1];
    for i in 0..n {
        if i > 0 {
            diag[i] += (lk[i - 1] - lw[i]).exp();
        }
        if i + 1 < n {
            diag[i] += (lk[i] - lw[i]).exp();
            off[i] = -(lk[i] - 0.5 * (lw[i] + lw[i + 1])).exp();
        }
    }
    SymTridiag::new(diag, off)
}

/// Computes `λ⁰ ≈ 0`, `λ¹` and the normalized gap eigenfunction.
pub fn solve_gap(mu: &Arc<GridMeasure>) -> Result<SpectralGap> {
    let n = mu.len();
    if n < MIN_SPECTRAL_NODES {
        return Err(Error::GridTooSmall {
            n,
            min: MIN_SPECTRAL_NODES,
        });
    }
    let a = assemble(mu);
    let lambda0 = a.eigenvalue(0);
    if lambda0.abs() > LAMBDA0_TOL {
        return Err(Error::DiscretizationInconsistency { lambda0 });
    }
    let lambda1 = a.eigenvalue(1);

    let half_lw: Vec<f64> = mu.log_weights().iter().map(|l| 0.5 * l).collect();
    let mut ground: Vec<f64> = half_lw.iter().map(|l| l.exp()).collect();
    let gnorm = ground.iter().map(|g| g * g).sum::<f64>().sqrt();
    for g in &mut ground {
        *g /= gnorm;
    }
    let y = a.eigenvector(lambda1, &[&ground]);
    let residual = a.residual(lambda1, &y);

    let mut u: Vec<f64> = y
        .iter()
        .zip(&half_lw)
        .map(|(yi, l)| {
            let v = yi * (-l).exp();
            if v.is_finite() {
                v
            } else {
                0.0
            }
        })
        .collect();
    let w = mu.weights();
    let mean: f64 = w.iter().zip(&u).map(|(w, u)| w * u).sum();
    for ui in &mut u {
        *ui -= mean;
    }
    let norm = w.iter().zip(&u).map(|(w, u)| w * u * u).sum::<f64>().sqrt();
    let sign = if u[n - 1] < 0.0 { -1.0 } else { 1.0 };
    for ui in &mut u {
        *ui *= sign / norm;
    }
    let eigenfunction = GridFunction::new(Arc::clone(mu), u)?;

    let mut estimate = if lambda1 < GAP_FLOOR {
        let mut e = ConstantEstimate::new(EstimateKind::C2, f64::INFINITY, Method::Eigensolve);
        e.flags.push("gap_too_small".into());
        e
    } else {
        ConstantEstimate::new(EstimateKind::C2, 1.0 / lambda1, Method::Eigensolve)
    };
    estimate.residual = residual;
    estimate.grid = Some(GridInfo::of(mu));
    if !mu.skipped_nodes().is_empty() {
        estimate.flags.push("singular_point_in_domain".into());
    }
    Ok(SpectralGap {
        estimate,
        lambda0,
        lambda1,
        eigenfunction,
    })
}

/// `C₂(μ)` as the inverse of the smallest nonzero eigenvalue.
pub fn spectral_gap(mu: &Arc<GridMeasure>) -> Result<ConstantEstimate> {
    solve_gap(mu).map(|g| g.estimate)
}

/// Eigenfunction of `λ¹`, with `∫v dμ = 0`, `∫v² dμ = 1` and `v(x_{n−1}) > 0`.
pub fn gap_eigenfunction(mu: &Arc<GridMeasure>) -> Result<GridFunction> {
    solve_gap(mu).map(|g| g.eigenfunction)
}

/// `variance(u) / dirichlet(u)`; equals `C₂` at the gap eigenfunction.
pub fn rayleigh_ratio(u: &GridFunction) -> f64 {
    functionals::variance(u) / functionals::dirichlet(u)
}

/// Bakry–Émery upper bound `2/(p λ₁)` with `λ₁ = inf V''` over the line.
/// Returns `+∞` with a flag when `λ₁ ≤ 0`.
pub fn bakry_emery_bound(v: &PotentialSpec, p: f64) -> Result<ConstantEstimate> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p must lie in [1, 2], got {p}")));
    }
    let lambda1 = v.bakry_emery_lambda1(None)?;
    let kind = EstimateKind::CpBound { p };
    if lambda1.value > 0.0 {
        Ok(ConstantEstimate::new(kind, 2.0 / (p * lambda1.value), Method::BakryEmery))
    } else {
        let mut e = ConstantEstimate::new(kind, f64::INFINITY, Method::BakryEmery);
        e.flags.push("bound_not_applicable".into());
        if let Some(note) = lambda1.note {
            e.flags.push(note);
        }
        Ok(e)
    }
}
