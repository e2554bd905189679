//! Variational lower bounds for the Beckner constants `C_p(μ)` and the
//! log-Sobolev constant `C₁(μ)`.
//!
//! Any non-constant grid function certifies `C_p ≥ deficit/dirichlet`. The
//! estimator climbs that quotient from a fixed list of seeds with gradient
//! ascent in the discrete `H¹(μ)` metric (the Euclidean gradient is mapped
//! through `(K + M)^{-1}`, `K` the Dirichlet form and `M = diag(w)`), with an
//! Armijo backtracking step. Every reported value is the quotient of the
//! returned witness.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{self, entropy_raw};
use crate::measure::{GridFunction, GridMeasure};
use crate::report::ext_f64;
use crate::spectral::{self, ConstantEstimate, EstimateKind, GridInfo, Method};

/// Relative size of the Dirichlet energy below which a function counts as constant.
const CONSTANT_TOL: f64 = 1e-14;
/// Successive-ratio threshold of the p-sweep; a heuristic.
pub const DIVERGENCE_RATIO: f64 = 1.2;
pub const C1_SWEEP: [f64; 5] = [1.5, 1.25, 1.1, 1.05, 1.02];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Unrestricted,
    /// Mean-zero functions only.
    Restricted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Objective {
    Beckner { p: f64 },
    Entropy,
}

impl Objective {
    /// Numerator of the quotient and, when asked, its gradient. The value is
    /// computed with the same operations as the public functionals.
    fn numerator(self, w: &[f64], u: &[f64], grad: Option<&mut [f64]>) -> f64 {
        match self {
            Objective::Beckner { p } => {
                let q = 2.0 / p;
                let (mut s2, mut sq) = (0.0, 0.0);
                let mut powers = grad.as_ref().map(|_| vec![0.0; u.len()]);
                for (i, (w, u)) in w.iter().zip(u).enumerate() {
                    let a = u.abs();
                    s2 += w * a * a;
                    if a > 0.0 {
                        let aq = a.powf(q);
                        sq += w * aq;
                        if let Some(pw) = powers.as_mut() {
                            pw[i] = aq;
                        }
                    }
                }
                if let (Some(out), Some(pw)) = (grad, powers) {
                    let c = sq.powf(p - 1.0);
                    for i in 0..u.len() {
                        // sign(u)|u|^{q-1} = |u|^q / u
                        let pow = if u[i] == 0.0 { 0.0 } else { pw[i] / u[i] };
                        out[i] = 2.0 * w[i] * (u[i] - c * pow) / (p - 1.0);
                    }
                }
                (s2 - sq.powf(p)) / (p - 1.0)
            }
            Objective::Entropy => {
                let value = entropy_raw(w, u).unwrap_or(0.0);
                if let Some(out) = grad {
                    let s2: f64 = w.iter().zip(u).map(|(w, u)| w * u * u).sum();
                    let ln_s2 = s2.ln();
                    for ((o, w), u) in out.iter_mut().zip(w).zip(u) {
                        *o = if *u == 0.0 {
                            0.0
                        } else {
                            2.0 * w * u * ((u * u).ln() - ln_s2)
                        };
                    }
                }
                value
            }
        }
    }

    fn kind(self) -> EstimateKind {
        match self {
            Objective::Beckner { p } => EstimateKind::Cp { p },
            Objective::Entropy => EstimateKind::C1,
        }
    }
}

/// `beckner_deficit(u, p) / dirichlet(u)`.
pub fn beckner_quotient(u: &GridFunction, p: f64) -> Result<f64> {
    let d = nonconstant_dirichlet(u)?;
    Ok(functionals::beckner_deficit(u, p)? / d)
}

/// `log_sobolev_entropy(u) / dirichlet(u)`.
pub fn entropy_quotient(u: &GridFunction) -> Result<f64> {
    let d = nonconstant_dirichlet(u)?;
    Ok(functionals::log_sobolev_entropy(u)? / d)
}

fn nonconstant_dirichlet(u: &GridFunction) -> Result<f64> {
    let d = functionals::dirichlet(u);
    let l2: f64 = u.map(|v| v * v).integrate();
    if !(d > CONSTANT_TOL * l2) {
        return Err(Error::DegenerateInput("quotient of a constant function".into()));
    }
    Ok(d)
}

/// Quotient evaluation and gradients on raw node values of one measure.
pub struct QuotientModel<'a> {
    mu: &'a GridMeasure,
    objective: Objective,
    /// `k_e = m_e / h_e²` so that `dirichlet(u) = Σ k_e (u_{e+1} − u_e)²`.
    stiffness: Vec<f64>,
}

impl<'a> QuotientModel<'a> {
    pub fn new(mu: &'a GridMeasure, objective: Objective) -> Result<Self> {
        if let Objective::Beckner { p } = objective {
            if !(p > 1.0 && p <= 2.0) {
                return Err(Error::InvalidInput(format!("p must lie in (1, 2], got {p}")));
            }
        }
        let x = mu.nodes();
        let stiffness = mu
            .mid_weights()
            .iter()
            .zip(x.windows(2))
            .map(|(m, x)| m / ((x[1] - x[0]) * (x[1] - x[0])))
            .collect();
        Ok(Self {
            mu,
            objective,
            stiffness,
        })
    }

    pub fn dirichlet(&self, u: &[f64]) -> f64 {
        self.stiffness
            .iter()
            .zip(u.windows(2))
            .map(|(k, u)| k * (u[1] - u[0]) * (u[1] - u[0]))
            .sum()
    }

    fn dirichlet_gradient(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (e, k) in self.stiffness.iter().enumerate() {
            let g = 2.0 * k * (u[e + 1] - u[e]);
            out[e + 1] += g;
            out[e] -= g;
        }
    }

    /// Quotient value, `None` for (numerically) constant functions.
    pub fn value(&self, u: &[f64]) -> Option<f64> {
        let w = self.mu.weights();
        let d = self.dirichlet(u);
        let l2: f64 = w.iter().zip(u).map(|(w, u)| w * u * u).sum();
        if !(d > CONSTANT_TOL * l2) {
            return None;
        }
        Some(self.objective.numerator(w, u, None) / d)
    }

    /// Value and Euclidean gradient with respect to the node values.
    pub fn value_and_gradient(&self, u: &[f64]) -> Option<(f64, Vec<f64>)> {
        let w = self.mu.weights();
        let d = self.dirichlet(u);
        let l2: f64 = w.iter().zip(u).map(|(w, u)| w * u * u).sum();
        if !(d > CONSTANT_TOL * l2) {
            return None;
        }
        let mut gn = vec![0.0; u.len()];
        let mut gd = vec![0.0; u.len()];
        let q = self.objective.numerator(w, u, Some(&mut gn)) / d;
        self.dirichlet_gradient(u, &mut gd);
        let grad = gn.iter().zip(&gd).map(|(a, b)| (a - q * b) / d).collect();
        Some((q, grad))
    }

    /// `K + M`, the Riesz map of the discrete `H¹(μ)` inner product.
    fn h1_operator(&self) -> Factorized {
        let n = self.mu.len();
        let w = self.mu.weights();
        let mut diag: Vec<f64> = w.to_vec();
        let mut off = vec![0.0; n - 1];
        for (e, k) in self.stiffness.iter().enumerate() {
            diag[e] += k;
            diag[e + 1] += k;
            off[e] = -k;
        }
        // nodes whose weight underflowed must not make the system singular
        let floor = f64::MIN_POSITIVE / f64::EPSILON;
        for d in &mut diag {
            if *d < floor {
                *d = floor;
            }
        }
        Factorized::new(&diag, &off)
    }
}

/// `LDLᵀ` factors of a symmetric positive definite tridiagonal matrix.
struct Factorized {
    /// Pivots `dᵢ`.
    pivots: Vec<f64>,
    /// Subdiagonal of `L`.
    lower: Vec<f64>,
}

impl Factorized {
    fn new(diag: &[f64], off: &[f64]) -> Self {
        let n = diag.len();
        let mut pivots = vec![0.0; n];
        let mut lower = vec![0.0; n.saturating_sub(1)];
        pivots[0] = diag[0];
        for i in 1..n {
            lower[i - 1] = off[i - 1] / pivots[i - 1];
            pivots[i] = diag[i] - lower[i - 1] * off[i - 1];
        }
        Self { pivots, lower }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut x = rhs.to_vec();
        for i in 1..n {
            x[i] -= self.lower[i - 1] * x[i - 1];
        }
        for (x, d) in x.iter_mut().zip(&self.pivots) {
            *x /= d;
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.lower[i] * x[i + 1];
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct Seed {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct AscentOptions {
    pub max_iter: usize,
    /// Stop once an accepted step improves the quotient by less than this, relatively.
    pub rel_tol: f64,
    pub armijo: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            rel_tol: 1e-8,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub label: String,
    #[serde(serialize_with = "ext_f64")]
    pub initial: f64,
    #[serde(serialize_with = "ext_f64")]
    pub value: f64,
    pub iterations: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct VariationalEstimate {
    pub estimate: ConstantEstimate,
    pub witness: GridFunction,
    pub best_seed: String,
    pub seeds: Vec<SeedOutcome>,
}

/// The seed list: `1 + ε v_gap`, exponentials `e^{ax}`, and `1, x, x² − m₂`.
/// In restricted mode the mean is removed and seeds that coincide after
/// that are dropped.
pub fn default_seeds(mu: &Arc<GridMeasure>, gap_function: &GridFunction, mode: Mode) -> Vec<Seed> {
    let x = mu.nodes();
    let v = gap_function.values();
    let m2: f64 = mu.weights().iter().zip(x).map(|(w, x)| w * x * x).sum();
    let mut seeds = Vec::new();
    for eps in [1e-2, 1e-1, 1.0] {
        seeds.push(Seed {
            label: format!("1+{eps}*v_gap"),
            values: v.iter().map(|v| 1.0 + eps * v).collect(),
        });
    }
    // on a symmetric measure e^{-ax} is the mirror image of e^{ax}
    let symmetric = is_symmetric(mu);
    for a in [0.1, -0.1, 0.5, -0.5, 1.0, -1.0] {
        if symmetric && a < 0.0 {
            continue;
        }
        seeds.push(Seed {
            label: format!("exp({a}*x)"),
            values: x.iter().map(|x| (a * x).exp()).collect(),
        });
    }
    seeds.push(Seed {
        label: "1".into(),
        values: vec![1.0; x.len()],
    });
    seeds.push(Seed {
        label: "x".into(),
        values: x.to_vec(),
    });
    seeds.push(Seed {
        label: "x^2-m2".into(),
        values: x.iter().map(|x| x * x - m2).collect(),
    });
    if mode == Mode::Restricted {
        let w = mu.weights();
        for s in &mut seeds {
            remove_mean(w, &mut s.values);
        }
        // the 1 + ε v_gap family collapses onto multiples of v_gap
        seeds.retain(|s| !s.label.starts_with("1+0.1") && !s.label.starts_with("1+1*"));
        if let Some(s) = seeds.first_mut() {
            s.label = "v_gap".into();
        }
    }
    seeds
}

fn is_symmetric(mu: &GridMeasure) -> bool {
    let (x, w) = (mu.nodes(), mu.weights());
    let n = x.len();
    let scale = x[n - 1].abs().max(x[0].abs());
    (0..n / 2).all(|i| {
        (x[i] + x[n - 1 - i]).abs() <= 1e-12 * scale
            && (w[i] - w[n - 1 - i]).abs() <= 1e-12 * w[i].max(w[n - 1 - i])
    })
}

fn remove_mean(w: &[f64], u: &mut [f64]) {
    let mean: f64 = w.iter().zip(u.iter()).map(|(w, u)| w * u).sum();
    u.iter_mut().for_each(|v| *v -= mean);
}

fn normalize(w: &[f64], u: &mut [f64]) -> f64 {
    let norm = w.iter().zip(u.iter()).map(|(w, u)| w * u * u).sum::<f64>().sqrt();
    if norm > 0.0 && norm.is_finite() {
        u.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

struct AscentResult {
    initial: f64,
    value: f64,
    iterations: usize,
    point: Vec<f64>,
}

fn ascend(
    model: &QuotientModel<'_>,
    precond: &Factorized,
    mode: Mode,
    start: &[f64],
    options: &AscentOptions,
) -> Result<Option<AscentResult>> {
    let w = model.mu.weights();
    let mut u = start.to_vec();
    if mode == Mode::Restricted {
        remove_mean(w, &mut u);
    }
    let norm = normalize(w, &mut u);
    if !(norm > 0.0) {
        return Ok(None);
    }
    if !norm.is_finite() {
        return Err(Error::NumericalOverflow { norm });
    }
    let Some((mut q, mut grad)) = model.value_and_gradient(&u) else {
        return Ok(None);
    };
    if !q.is_finite() {
        return Err(Error::NumericalOverflow { norm });
    }
    let initial = q;
    let mut step = 1.0;
    let mut iterations = 0;
    let mut trial = vec![0.0; u.len()];
    while iterations < options.max_iter {
        let mut dir = precond.solve(&grad);
        if mode == Mode::Restricted {
            remove_mean(w, &mut dir);
        }
        let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        if !(slope > 0.0) {
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            for ((t, u), d) in trial.iter_mut().zip(&u).zip(&dir) {
                *t = u + step * d;
            }
            if mode == Mode::Restricted {
                remove_mean(w, &mut trial);
            }
            match model.value(&trial) {
                Some(qt) if qt.is_finite() && qt >= q + options.armijo * step * slope => {
                    accepted = Some(qt);
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some(q_new) = accepted else { break };
        iterations += 1;
        let improvement = (q_new - q) / q.abs().max(f64::MIN_POSITIVE);
        std::mem::swap(&mut u, &mut trial);
        normalize(w, &mut u);
        match model.value_and_gradient(&u) {
            Some((qv, g)) if qv.is_finite() => {
                q = qv;
                grad = g;
            }
            _ => {
                let norm = w.iter().zip(&u).map(|(w, u)| w * u * u).sum::<f64>().sqrt();
                return Err(Error::NumericalOverflow { norm });
            }
        }
        if improvement < options.rel_tol {
            break;
        }
        step *= 2.0;
    }
    Ok(Some(AscentResult {
        initial,
        value: q,
        iterations,
        point: u,
    }))
}

/// Runs the ascent from every seed and keeps the best witness. Seeds are
/// processed independently; ties go to the earliest seed in the list.
pub fn estimate_with_seeds(
    mu: &Arc<GridMeasure>,
    objective: Objective,
    mode: Mode,
    seeds: &[Seed],
    options: &AscentOptions,
) -> Result<VariationalEstimate> {
    let model = QuotientModel::new(mu, objective)?;
    let precond = model.h1_operator();
    let runs: Vec<Result<Option<AscentResult>>> = seeds
        .par_iter()
        .map(|s| {
            if s.values.len() != mu.len() {
                return Err(Error::InvalidInput(format!("seed `{}` has the wrong length", s.label)));
            }
            ascend(&model, &precond, mode, &s.values, options)
        })
        .collect();

    let mut outcomes = Vec::with_capacity(seeds.len());
    let mut best: Option<(usize, AscentResult)> = None;
    for (i, (seed, run)) in seeds.iter().zip(runs).enumerate() {
        match run? {
            None => outcomes.push(SeedOutcome {
                label: seed.label.clone(),
                initial: f64::NAN,
                value: f64::NAN,
                iterations: 0,
                degenerate: true,
            }),
            Some(r) => {
                outcomes.push(SeedOutcome {
                    label: seed.label.clone(),
                    initial: r.initial,
                    value: r.value,
                    iterations: r.iterations,
                    degenerate: false,
                });
                if best.as_ref().map_or(true, |(_, b)| r.value > b.value) {
                    best = Some((i, r));
                }
            }
        }
    }
    let (best_index, best) =
        best.ok_or_else(|| Error::DegenerateInput("every seed is constant".into()))?;
    let witness = GridFunction::new(Arc::clone(mu), best.point)?;
    // report exactly the quotient of the witness
    let value = model
        .value(witness.values())
        .ok_or_else(|| Error::DegenerateInput("witness became constant".into()))?;
    let mut estimate = ConstantEstimate::new(objective.kind(), value, Method::VariationalLower);
    estimate.grid = Some(GridInfo::of(mu));
    estimate.residual = outcomes[best_index].iterations as f64;
    if mode == Mode::Restricted {
        estimate.flags.push("restricted_mean_zero".into());
    }
    Ok(VariationalEstimate {
        estimate,
        witness,
        best_seed: seeds[best_index].label.clone(),
        seeds: outcomes,
    })
}

/// Lower bound on `C_p(μ)` from the default seeds.
pub fn estimate_cp(mu: &Arc<GridMeasure>, p: f64, mode: Mode) -> Result<VariationalEstimate> {
    let gap = spectral::gap_eigenfunction(mu)?;
    estimate_cp_from_gap(mu, &gap, p, mode)
}

pub fn estimate_cp_from_gap(
    mu: &Arc<GridMeasure>,
    gap_function: &GridFunction,
    p: f64,
    mode: Mode,
) -> Result<VariationalEstimate> {
    let seeds = default_seeds(mu, gap_function, mode);
    estimate_with_seeds(mu, Objective::Beckner { p }, mode, &seeds, &AscentOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Bounded,
    Divergent,
}

#[derive(Debug, Clone)]
pub struct C1Estimate {
    pub entropy: VariationalEstimate,
    pub sweep: Vec<(f64, ConstantEstimate)>,
    pub ratios: Vec<f64>,
    pub trend: Trend,
}

/// Classifies a decreasing-p sweep: bounded when the last two successive
/// ratios (the ones closest to `p = 1`) stay below [`DIVERGENCE_RATIO`].
pub fn classify_sweep(values: &[f64]) -> (Vec<f64>, Trend) {
    let ratios: Vec<f64> = values.windows(2).map(|v| v[1] / v[0]).collect();
    let tail = &ratios[ratios.len().saturating_sub(2)..];
    let trend = if !tail.is_empty() && tail.iter().all(|r| *r < DIVERGENCE_RATIO) {
        Trend::Bounded
    } else {
        Trend::Divergent
    };
    (ratios, trend)
}

/// Lower bound on `C₁(μ)` by the same ascent on the entropy quotient, plus the
/// `C_p` sweep toward `p = 1`.
pub fn estimate_c1_entropy(mu: &Arc<GridMeasure>) -> Result<C1Estimate> {
    estimate_c1_with_sweep(mu, &C1_SWEEP)
}

pub fn estimate_c1_with_sweep(mu: &Arc<GridMeasure>, p_list: &[f64]) -> Result<C1Estimate> {
    let gap = spectral::gap_eigenfunction(mu)?;
    let seeds = default_seeds(mu, &gap, Mode::Unrestricted);
    let entropy = estimate_with_seeds(
        mu,
        Objective::Entropy,
        Mode::Unrestricted,
        &seeds,
        &AscentOptions::default(),
    )?;
    let sweep = p_list
        .iter()
        .map(|&p| estimate_cp_from_gap(mu, &gap, p, Mode::Unrestricted).map(|e| (p, e.estimate)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = sweep.iter().map(|(_, e)| e.value).collect();
    let (ratios, trend) = classify_sweep(&values);
    Ok(C1Estimate {
        entropy,
        sweep,
        ratios,
        trend,
    })
}

/// Directional derivative of the quotient along `dir`: analytic value and a
/// central finite difference with step `h`.
pub fn directional_check(
    mu: &GridMeasure,
    objective: Objective,
    u: &[f64],
    dir: &[f64],
    h: f64,
) -> Result<(f64, f64)> {
    let model = QuotientModel::new(mu, objective)?;
    let (_, grad) = model
        .value_and_gradient(u)
        .ok_or_else(|| Error::DegenerateInput("constant function".into()))?;
    let analytic: f64 = grad.iter().zip(dir).map(|(g, d)| g * d).sum();
    let shifted = |t: f64| -> Vec<f64> { u.iter().zip(dir).map(|(u, d)| u + t * d).collect() };
    let plus = model.value(&shifted(h)).unwrap_or(f64::NAN);
    let minus = model.value(&shifted(-h)).unwrap_or(f64::NAN);
    Ok((analytic, (plus - minus) / (2.0 * h)))
}
