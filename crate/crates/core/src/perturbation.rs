//! Perturbation bound for `μ = e^{-V}` from a reference `ν = e^{-W}`.
//!
//! With `Z = (V − W)/2` and `δ = |Z'|² − Z'' + Z'W'`, a spectral gap of `μ`,
//! a finite `‖Z‖_{L^{p'}(ν)}` and `m = inf δ > −∞` give
//!
//! ```text
//! 𝒞_p* = C_p(ν) + C₂(μ)·(2‖Z‖ − m·C_p(ν))₊
//! 𝒞_p  = (2/p)·C₂(μ) + (2/p − 1)·𝒞_p*
//! ```
//!
//! `μ` and `ν` are discretized on one common node set so that `v = g·e^Z`
//! holds exactly at every node. Both potentials carry the normalization
//! constant computed by the trapezoid rule on that node set, which fixes the
//! additive constant in `Z`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals;
use crate::measure::{auto_domain, lq_norm, Domain, Grid, GridConfig, GridFunction, GridMeasure};
use crate::potential::tail::{PowerSeries, Side, TailLimit};
use crate::potential::{refine_min, PotentialSpec};
use crate::report::{ext_f64, opt_ext_f64};
use crate::spectral::{self, ConstantEstimate, EstimateKind, GridInfo, Method};

/// Relative gap between the two norms of `Z` above which a flag is raised.
const NORM_MISMATCH: f64 = 0.01;
/// Exponent beyond which `e^{±Z}` is evaluated with a common shift.
const RESCALE_EXP: f64 = 600.0;
pub const DEFAULT_P_LIST: [f64; 6] = [1.5, 1.25, 1.1, 1.05, 1.02, 1.01];
pub const DEFAULT_SIGMA_LIST: [f64; 7] = [0.5, 0.75, 0.9, 1.0, 1.25, 1.5, 2.0];

/// `δ(x)` from the analytic derivatives.
pub fn delta_at(v: &PotentialSpec, w: &PotentialSpec, x: f64) -> Result<f64> {
    let wp = w.d1(x);
    let zp = 0.5 * (v.d1(x) - wp);
    let zpp = 0.5 * (v.d2(x)? - w.d2(x)?);
    Ok(zp * zp - zpp + zp * wp)
}

/// `δ(s·r)` as a power series in `r`, for closed-form pairs.
pub fn delta_series(v: &PotentialSpec, w: &PotentialSpec, side: Side) -> Option<PowerSeries> {
    let vs = v.tail_series(side)?;
    let ws = w.tail_series(side)?;
    let zr = (&vs - &ws).scale(0.5).derivative();
    let zrr = zr.derivative();
    let wr = ws.derivative();
    Some(&(&(&zr * &zr) - &zrr) + &(&zr * &wr))
}

/// `(V')² − 2V'' − x²/σ⁴`, the quantity whose infimum decides the Gaussian
/// reference test.
pub fn gaussian_reference_energy(v: &PotentialSpec, sigma: f64, x: f64) -> Result<f64> {
    let d1 = v.d1(x);
    Ok(d1 * d1 - 2.0 * v.d2(x)? - x * x / sigma.powi(4))
}

pub fn gaussian_reference_series(v: &PotentialSpec, sigma: f64, side: Side) -> Option<PowerSeries> {
    let vr = v.tail_series(side)?.derivative();
    let vrr = vr.derivative();
    let quad = PowerSeries::monomial(-1.0 / sigma.powi(4), 2.0);
    Some(&(&(&vr * &vr) - &vrr.scale(2.0)) + &quad)
}

/// Node set containing both automatic domains at the finer of the two spacings.
pub fn shared_grid(v: &PotentialSpec, w: &PotentialSpec, config: &GridConfig) -> Result<Grid> {
    match config.domain {
        Domain::Interval(a, b) => Grid::new(a, b, config.n),
        Domain::Auto => {
            let (a1, b1) = auto_domain(v)?;
            let (a2, b2) = auto_domain(w)?;
            let cells = (config.n - 1) as f64;
            let h = ((b1 - a1) / cells).min((b2 - a2) / cells);
            let (a, b) = (a1.min(a2), b1.max(b2));
            let n = ((b - a) / h - 1e-9).ceil() as usize + 1;
            Grid::new(a, b, n)
        }
    }
}

/// `Z` and `δ` on the common node set of `μ` and `ν`.
#[derive(Debug, Clone)]
pub struct ZDelta {
    pub v: PotentialSpec,
    pub w: PotentialSpec,
    /// `μ` on the shared nodes.
    pub mu: Arc<GridMeasure>,
    /// `ν` on the shared nodes.
    pub nu: Arc<GridMeasure>,
    pub z: GridFunction,
    /// `NaN` at skipped nodes.
    pub delta: GridFunction,
    pub skipped: Vec<usize>,
    pub flags: Vec<String>,
}

impl ZDelta {
    fn singular_points(&self) -> Vec<f64> {
        let mut s = self.v.singular_points();
        s.extend(self.w.singular_points());
        s
    }
}

pub fn compute_z_delta(v: &PotentialSpec, w: &PotentialSpec, config: &GridConfig) -> Result<ZDelta> {
    let grid = shared_grid(v, w, config)?;
    let mu = GridMeasure::on_grid(v, grid, config.tail_tol)?;
    let nu = GridMeasure::on_grid(w, grid, config.tail_tol)?;
    let (vn, wn) = (mu.potential().expect("grid measure"), nu.potential().expect("grid measure"));
    let z = GridFunction::from_fn(&nu, |x| 0.5 * (vn.value(x) - wn.value(x)));

    let mut skipped: Vec<usize> = mu.skipped_nodes().iter().chain(nu.skipped_nodes()).copied().collect();
    skipped.sort_unstable();
    skipped.dedup();
    let values = nu
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if skipped.binary_search(&i).is_ok() {
                f64::NAN
            } else {
                delta_at(vn, wn, x).unwrap_or(f64::NAN)
            }
        })
        .collect();
    let delta = GridFunction::new(Arc::clone(&nu), values)?;
    let mut flags = Vec::new();
    if !skipped.is_empty() {
        flags.push("singular_point_skipped".to_string());
    }
    Ok(ZDelta {
        v: vn.clone(),
        w: wn.clone(),
        mu,
        nu,
        z,
        delta,
        skipped,
        flags,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaInfimum {
    #[serde(serialize_with = "ext_f64")]
    pub value: f64,
    #[serde(serialize_with = "opt_ext_f64")]
    pub attained_at: Option<f64>,
    pub bounded_below: bool,
    pub flags: Vec<String>,
}

/// Grid minimum of `f` refined between nodes, combined with the tail limits of
/// its power series. With no series the value is a truncated-domain infimum.
fn infimum(
    f: impl Fn(f64) -> f64,
    series: [Option<PowerSeries>; 2],
    grid: Grid,
    skip: &[f64],
) -> DeltaInfimum {
    let (x, v) = refine_min(f, grid.a, grid.b, grid.n, skip);
    let mut inf = DeltaInfimum {
        value: v,
        attained_at: Some(x).filter(|x| x.is_finite()),
        bounded_below: true,
        flags: Vec::new(),
    };
    if series.iter().any(Option::is_none) {
        inf.flags.push("truncated_domain_infimum".into());
        return inf;
    }
    for s in series.iter().flatten() {
        match s.limit() {
            TailLimit::MinusInfinity => {
                inf.value = f64::NEG_INFINITY;
                inf.attained_at = None;
                inf.bounded_below = false;
            }
            TailLimit::Finite(l) if l < inf.value => {
                inf.value = l;
                inf.attained_at = None;
                inf.flags.push("approached_at_infinity".into());
            }
            _ => {}
        }
    }
    inf
}

pub fn delta_infimum(zd: &ZDelta) -> DeltaInfimum {
    let grid = zd.nu.grid().expect("uniform grid");
    let series = Side::BOTH.map(|s| delta_series(&zd.v, &zd.w, s));
    infimum(
        |x| delta_at(&zd.v, &zd.w, x).unwrap_or(f64::INFINITY),
        series,
        grid,
        &zd.singular_points(),
    )
}

/// `C_p(ν)`: `(2/p)σ²` for a Gaussian reference (`2σ²` at `p = 1`), otherwise
/// the Bakry–Émery bound.
pub fn reference_constant(w: &PotentialSpec, p: f64) -> Result<ConstantEstimate> {
    let kind = if p == 1.0 { EstimateKind::C1 } else { EstimateKind::Cp { p } };
    if let Some(sigma) = w.as_gaussian_sigma() {
        return Ok(ConstantEstimate::new(kind, 2.0 / p * sigma * sigma, Method::ClosedForm));
    }
    let be = spectral::bakry_emery_bound(w, p)?;
    if !be.value.is_finite() {
        return Err(Error::ReferenceUnavailable(format!(
            "`{w}` is neither Gaussian nor uniformly convex"
        )));
    }
    Ok(be)
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// How the additive constant in `Z` is fixed.
    pub z_normalization: &'static str,
    pub shared_grid: GridInfo,
    /// Both sides of the comparison `𝒞_p − C₂ ≤ ((2 − p)/p)(C₂ − 𝒞_p*)`;
    /// reported only, not asserted.
    #[serde(serialize_with = "opt_ext_f64")]
    pub remark_lhs: Option<f64>,
    #[serde(serialize_with = "opt_ext_f64")]
    pub remark_rhs: Option<f64>,
    pub tail_mass_mu: f64,
    pub tail_mass_nu: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub p: f64,
    #[serde(serialize_with = "ext_f64")]
    pub p_prime: f64,
    #[serde(serialize_with = "ext_f64")]
    pub z_norm_nu: f64,
    #[serde(serialize_with = "ext_f64")]
    pub z_norm_mu: f64,
    #[serde(serialize_with = "ext_f64")]
    pub m: f64,
    #[serde(serialize_with = "opt_ext_f64")]
    pub m_attained_at: Option<f64>,
    pub m_bounded_below: bool,
    pub c2_mu: ConstantEstimate,
    pub cp_nu: ConstantEstimate,
    #[serde(serialize_with = "opt_ext_f64")]
    pub t_star: Option<f64>,
    #[serde(serialize_with = "opt_ext_f64")]
    pub cp_star: Option<f64>,
    #[serde(serialize_with = "opt_ext_f64")]
    pub cp_bound: Option<f64>,
    pub flags: Vec<String>,
    pub diagnostics: Diagnostics,
}

impl PerturbationReport {
    pub fn hypotheses_hold(&self) -> bool {
        self.cp_bound.is_some()
    }
}

/// Everything in the bound that does not depend on `p`.
#[derive(Debug, Clone)]
pub struct Theorem1Setup {
    pub zd: ZDelta,
    /// `μ` on its own grid, where `C₂(μ)` is computed.
    pub mu: Arc<GridMeasure>,
    pub c2_mu: ConstantEstimate,
    pub m: DeltaInfimum,
}

pub fn prepare(v: &PotentialSpec, w: &PotentialSpec, config: &GridConfig) -> Result<Theorem1Setup> {
    let mu = config.build(v)?;
    let c2_mu = spectral::spectral_gap(&mu)?;
    prepare_with(v, w, config, mu, c2_mu)
}

fn prepare_with(
    v: &PotentialSpec,
    w: &PotentialSpec,
    config: &GridConfig,
    mu: Arc<GridMeasure>,
    c2_mu: ConstantEstimate,
) -> Result<Theorem1Setup> {
    let zd = compute_z_delta(v, w, config)?;
    let m = delta_infimum(&zd);
    Ok(Theorem1Setup { zd, mu, c2_mu, m })
}

impl Theorem1Setup {
    /// Whether `|Z|^{p'}` is `ν`-integrable, from the tail series when available.
    fn z_integrable(&self, p_prime: f64) -> Option<bool> {
        let mut ok = true;
        for side in Side::BOTH {
            let vs = self.zd.v.tail_series(side)?;
            let ws = self.zd.w.tail_series(side)?;
            if p_prime.is_infinite() {
                let z = &vs - &ws;
                ok &= z.leading().map_or(true, |(e, _)| e <= 1e-12);
            } else {
                // polynomial growth against a density decaying faster than any power
                ok &= ws.leading().is_some_and(|(e, c)| e > 0.0 && c > 0.0);
            }
        }
        Some(ok)
    }

    pub fn bound(&self, p: f64) -> Result<PerturbationReport> {
        if !(1.0..2.0).contains(&p) {
            return Err(Error::InvalidInput(format!("p must lie in [1, 2), got {p}")));
        }
        let cp_nu = reference_constant(&self.zd.w, p)?;
        let p_prime = if p == 1.0 { f64::INFINITY } else { p / (p - 1.0) };
        let z = self.zd.z.values();
        let mut flags = self.zd.flags.clone();
        flags.extend(self.m.flags.iter().cloned());
        flags.extend(self.c2_mu.flags.iter().cloned());

        let mut z_norm_nu = lq_norm(self.zd.nu.weights(), z, p_prime)?;
        let mut z_norm_mu = lq_norm(self.zd.mu.weights(), z, p_prime)?;
        match self.z_integrable(p_prime) {
            Some(true) => {}
            Some(false) => {
                z_norm_nu = f64::INFINITY;
                z_norm_mu = f64::INFINITY;
                flags.push("z_not_integrable".into());
            }
            None => flags.push("z_norm_on_truncated_domain".into()),
        }
        if p_prime.is_finite() && z_norm_nu.is_finite() {
            let w = self.zd.nu.weights();
            let contrib = |i: usize| w[i] * z[i].abs().powf(p_prime);
            let argmax = (0..z.len())
                .max_by(|&a, &b| contrib(a).total_cmp(&contrib(b)))
                .unwrap_or(0);
            if argmax == 0 || argmax == z.len() - 1 {
                flags.push("z_norm_truncated".into());
            }
        }
        if z_norm_nu.is_finite()
            && (z_norm_nu - z_norm_mu).abs() > NORM_MISMATCH * z_norm_nu.max(z_norm_mu)
        {
            flags.push("z_norm_measure_mismatch".into());
        }
        if !self.m.bounded_below {
            flags.push("m_not_bounded_below".into());
        }

        let c2 = self.c2_mu.value;
        let holds = z_norm_nu.is_finite() && self.m.bounded_below && c2.is_finite();
        let (t_star, cp_star, cp_bound) = if holds {
            let cp = cp_nu.value;
            let cp_star = cp + c2 * (2.0 * z_norm_nu - self.m.value * cp).max(0.0);
            let t_star = cp / cp_star;
            let cp_bound = 2.0 / p * c2 + (2.0 / p - 1.0) * cp_star;
            (Some(t_star), Some(cp_star), Some(cp_bound))
        } else {
            flags.push("hypotheses_failed".into());
            (None, None, None)
        };
        let diagnostics = Diagnostics {
            z_normalization: "trapezoid rule on the shared grid",
            shared_grid: GridInfo::of(&self.zd.nu),
            remark_lhs: cp_bound.map(|b| b - c2),
            remark_rhs: cp_star.map(|s| (2.0 - p) / p * (c2 - s)),
            tail_mass_mu: self.zd.mu.tail_mass(),
            tail_mass_nu: self.zd.nu.tail_mass(),
        };
        Ok(PerturbationReport {
            p,
            p_prime,
            z_norm_nu,
            z_norm_mu,
            m: self.m.value,
            m_attained_at: self.m.attained_at,
            m_bounded_below: self.m.bounded_below,
            c2_mu: self.c2_mu.clone(),
            cp_nu,
            t_star,
            cp_star,
            cp_bound,
            flags,
            diagnostics,
        })
    }
}

pub fn theorem1_bound(
    v: &PotentialSpec,
    w: &PotentialSpec,
    p: f64,
    config: &GridConfig,
) -> Result<PerturbationReport> {
    prepare(v, w, config)?.bound(p)
}

/// `ln|v| − Z` at every node, shifted so that its maximum stays representable.
fn log_ground_state(zd: &ZDelta, v: &GridFunction) -> Result<(Vec<f64>, f64)> {
    if !v.measure().same_as(&zd.mu) {
        return Err(Error::MixedMeasure);
    }
    let lg: Vec<f64> = v
        .values()
        .iter()
        .zip(zd.z.values())
        .map(|(v, z)| v.abs().ln() - z)
        .collect();
    let max = lg.iter().copied().filter(|x| x.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    let shift = if max.abs() > RESCALE_EXP { max } else { 0.0 };
    Ok((lg.into_iter().map(|x| x - shift).collect(), shift))
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundStateCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Both sides are multiplied by `e^{-2·shift}`.
    pub shift: f64,
    pub flags: Vec<String>,
}

/// `∫|v'|²dμ` against `∫|g'|²dν + ∫δ g² dν` with `g = v e^{-Z}`.
pub fn ground_state_energy_identity(zd: &ZDelta, v: &GridFunction) -> Result<GroundStateCheck> {
    let (lg, shift) = log_ground_state(zd, v)?;
    let sign: Vec<f64> = v.values().iter().map(|v| v.signum()).collect();
    let x = zd.nu.nodes();
    let lm_nu = zd.nu.log_mid_weights();
    let mut rhs = 0.0;
    for e in 0..lg.len() - 1 {
        // √m_e·g at both ends, in log form
        let a = sign[e] * (0.5 * lm_nu[e] + lg[e]).exp();
        let b = sign[e + 1] * (0.5 * lm_nu[e] + lg[e + 1]).exp();
        let d = (b - a) / (x[e + 1] - x[e]);
        rhs += d * d;
    }
    let lw_nu = zd.nu.log_weights();
    let delta = zd.delta.values();
    let mut flags = Vec::new();
    for i in 0..lg.len() {
        if delta[i].is_nan() {
            continue;
        }
        rhs += delta[i] * (lw_nu[i] + 2.0 * lg[i]).exp();
    }
    if !zd.skipped.is_empty() {
        flags.push("singular_point_skipped".into());
    }
    let lhs = functionals::dirichlet(v) * (-2.0 * shift).exp();
    if shift != 0.0 {
        flags.push("rescaled".into());
    }
    let residual = if lhs != 0.0 { (lhs - rhs).abs() / lhs.abs() } else { (lhs - rhs).abs() };
    Ok(GroundStateCheck {
        lhs,
        rhs,
        residual,
        shift,
        flags,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct JensenCheck {
    /// `(∫|v|^{2/p}dμ)^p − (∫|g|^{2/p}dν)^p`.
    pub b: f64,
    /// `−2(p − 1)‖Z‖_{L^{p'}(ν)} ∫g² dν`.
    pub lower_bound: f64,
    pub margin: f64,
}

pub fn jensen_gap_check(zd: &ZDelta, v: &GridFunction, p: f64) -> Result<JensenCheck> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidInput(format!("p must lie in (1, 2), got {p}")));
    }
    if v.values().iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateInput("v vanishes identically".into()));
    }
    let (lg, shift) = log_ground_state(zd, v)?;
    let q = 2.0 / p;
    let lw_nu = zd.nu.log_weights();
    let lw_mu = zd.mu.log_weights();
    let sum = |f: &dyn Fn(usize) -> f64| (0..lg.len()).map(f).sum::<f64>();
    // everything in units of e^{shift}, so that v and g are scaled alike
    let lv: Vec<f64> = v.values().iter().map(|v| v.abs().ln() - shift).collect();
    let v_q = sum(&|i| (lw_mu[i] + q * lv[i]).exp());
    let g_q = sum(&|i| (lw_nu[i] + q * lg[i]).exp());
    let g_2 = sum(&|i| (lw_nu[i] + 2.0 * lg[i]).exp());
    let z_norm = lq_norm(zd.nu.weights(), zd.z.values(), p / (p - 1.0))?;
    let b = v_q.powf(p) - g_q.powf(p);
    let lower_bound = -2.0 * (p - 1.0) * z_norm * g_2;
    Ok(JensenCheck {
        b,
        lower_bound,
        margin: b - lower_bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub p: f64,
    pub report: Option<PerturbationReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// `p = 1` with `p' = ∞`, for Gaussian references only.
    pub endpoint: Option<SweepEntry>,
    /// Smallest finite bound along the list.
    #[serde(serialize_with = "opt_ext_f64")]
    pub liminf_surrogate: Option<f64>,
    /// Bound at the smallest listed `p`.
    #[serde(serialize_with = "opt_ext_f64")]
    pub closest_to_one: Option<f64>,
    pub trend: &'static str,
}

fn sweep_entry(setup: &Theorem1Setup, p: f64) -> SweepEntry {
    match setup.bound(p) {
        Ok(r) => SweepEntry {
            p,
            report: Some(r),
            error: None,
        },
        Err(e) => SweepEntry {
            p,
            report: None,
            error: Some(e.to_string()),
        },
    }
}

/// The bound along a decreasing list of `p`, plus the `p = 1` endpoint.
pub fn corollary2_sweep(
    v: &PotentialSpec,
    w: &PotentialSpec,
    p_list: &[f64],
    config: &GridConfig,
) -> Result<SweepReport> {
    if p_list.is_empty() {
        return Err(Error::InvalidInput("empty p list".into()));
    }
    let setup = prepare(v, w, config)?;
    let entries: Vec<SweepEntry> = p_list.iter().map(|&p| sweep_entry(&setup, p)).collect();
    let endpoint = w.as_gaussian_sigma().map(|_| sweep_entry(&setup, 1.0));
    let bounds: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| Some((e.p, e.report.as_ref()?.cp_bound?)))
        .collect();
    let liminf_surrogate = bounds.iter().map(|(_, b)| *b).reduce(f64::min);
    let closest_to_one = bounds
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, b)| *b);
    let mut by_p = bounds.clone();
    by_p.sort_by(|a, b| b.0.total_cmp(&a.0));
    let steps: Vec<f64> = by_p.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let trend = if steps.is_empty() {
        "undetermined"
    } else if steps.iter().all(|d| *d >= 0.0) {
        "increasing_toward_one"
    } else if steps.iter().all(|d| *d <= 0.0) {
        "decreasing_toward_one"
    } else {
        "mixed"
    };
    Ok(SweepReport {
        entries,
        endpoint,
        liminf_surrogate,
        closest_to_one,
        trend,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaEntry {
    pub sigma: f64,
    #[serde(serialize_with = "ext_f64")]
    pub energy_inf: f64,
    pub energy_bounded_below: bool,
    pub z_integrable: bool,
    pub passed: bool,
    pub report: Option<PerturbationReport>,
    pub error: Option<String>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianReferenceReport {
    pub p: f64,
    pub entries: Vec<SigmaEntry>,
    pub best_sigma: Option<f64>,
    #[serde(serialize_with = "opt_ext_f64")]
    pub best_bound: Option<f64>,
}

impl GaussianReferenceReport {
    pub fn any_passed(&self) -> bool {
        self.best_sigma.is_some()
    }
}

/// Tries every Gaussian reference `W = x²/(2σ²)` and keeps the one with the
/// smallest bound.
pub fn corollary5_check(
    v: &PotentialSpec,
    sigma_list: &[f64],
    p: f64,
    config: &GridConfig,
) -> Result<GaussianReferenceReport> {
    if sigma_list.is_empty() {
        return Err(Error::InvalidInput("empty sigma list".into()));
    }
    if let Some(s) = sigma_list.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {s}")));
    }
    if !(1.0..2.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p must lie in [1, 2), got {p}")));
    }
    let mu = config.build(v)?;
    let c2_mu = spectral::spectral_gap(&mu)?;
    let grid = mu.grid().expect("uniform grid");
    let singular = v.singular_points();

    let entries: Vec<SigmaEntry> = sigma_list
        .par_iter()
        .map(|&sigma| {
            let series = Side::BOTH.map(|s| gaussian_reference_series(v, sigma, s));
            let energy = infimum(
                |x| gaussian_reference_energy(v, sigma, x).unwrap_or(f64::INFINITY),
                series,
                grid,
                &singular,
            );
            let mut entry = SigmaEntry {
                sigma,
                energy_inf: energy.value,
                energy_bounded_below: energy.bounded_below,
                z_integrable: false,
                passed: false,
                report: None,
                error: None,
                flags: energy.flags,
            };
            let report = PotentialSpec::gaussian(sigma).and_then(|w| {
                prepare_with(v, &w, config, Arc::clone(&mu), c2_mu.clone())?.bound(p)
            });
            match report {
                Ok(r) => {
                    entry.z_integrable = r.z_norm_nu.is_finite();
                    if r.m_bounded_below != entry.energy_bounded_below {
                        entry.flags.push("energy_delta_disagree".into());
                    }
                    entry.passed = r.hypotheses_hold() && entry.energy_bounded_below;
                    entry.report = Some(r);
                }
                Err(e) => entry.error = Some(e.to_string()),
            }
            entry
        })
        .collect();

    let best = entries
        .iter()
        .filter(|e| e.passed)
        .filter_map(|e| Some((e.sigma, e.report.as_ref()?.cp_bound?)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    Ok(GaussianReferenceReport {
        p,
        entries,
        best_sigma: best.map(|b| b.0),
        best_bound: best.map(|b| b.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beckner::{self, Mode};

    fn spec(s: &str) -> PotentialSpec {
        PotentialSpec::parse(s).unwrap()
    }

    /// Narrow enough for `e^Z` with `Z ~ x⁴/8` to stay finite.
    fn narrow(n: usize) -> GridConfig {
        GridConfig {
            n,
            domain: Domain::Interval(-7.5, 7.5),
            ..GridConfig::default()
        }
    }

    fn config(n: usize) -> GridConfig {
        GridConfig {
            n,
            ..GridConfig::default()
        }
    }

    #[test]
    fn identical_potentials_give_zero() {
        let g = spec("gaussian:sigma=1");
        let zd = compute_z_delta(&g, &g, &config(1001)).unwrap();
        assert!(zd.z.values().iter().all(|z| *z == 0.0));
        assert!(zd.delta.values().iter().all(|d| *d == 0.0));
        let r = theorem1_bound(&g, &g, 1.5, &config(4001)).unwrap();
        assert_eq!(r.z_norm_nu, 0.0);
        assert_eq!(r.m, 0.0);
        assert_eq!(r.cp_star, Some(4.0 / 3.0));
        let expected = 4.0 / 3.0 * r.c2_mu.value + 1.0 / 3.0 * 4.0 / 3.0;
        assert_eq!(r.cp_bound, Some(expected));
        assert!((expected - 16.0 / 9.0).abs() < 1e-2);
    }

    #[test]
    fn delta_at_origin_for_quartic_against_gaussian() {
        let v = spec("poly:4=0.25");
        let w = spec("gaussian:sigma=1");
        assert!((delta_at(&v, &w, 0.0).unwrap() - 0.5).abs() < 1e-15);
        // against finite differences of Z
        let z = |x: f64| 0.5 * (v.value(x) - w.value(x));
        let h = 1e-4;
        for x in [-1.3, 0.4, 2.0] {
            let zp = (z(x + h) - z(x - h)) / (2.0 * h);
            let zpp = (z(x + h) - 2.0 * z(x) + z(x - h)) / (h * h);
            let fd = zp * zp - zpp + zp * w.d1(x);
            assert!((fd - delta_at(&v, &w, x).unwrap()).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn gaussian_pair_delta_is_quadratic() {
        // Z = c x²/2 with c = (1/σ² − 1/τ²)/2, δ = c(c + 1/τ²) x² − c
        let (s, t) = (0.8_f64, 1.3_f64);
        let c = 0.5 * (1.0 / (s * s) - 1.0 / (t * t));
        let (v, w) = (PotentialSpec::gaussian(s).unwrap(), PotentialSpec::gaussian(t).unwrap());
        for x in [-2.0, 0.3, 1.7] {
            let expected = c * (c + 1.0 / (t * t)) * x * x - c;
            assert!((delta_at(&v, &w, x).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn sub_quadratic_power_against_gaussian_is_unbounded_below() {
        let v = spec("power:alpha=1.2");
        let w = spec("gaussian:sigma=1");
        for side in Side::BOTH {
            let s = delta_series(&v, &w, side).unwrap();
            let (e, c) = s.leading().unwrap();
            assert!((e - 2.0).abs() < 1e-12 && (c + 0.25).abs() < 1e-12);
        }
        let r = theorem1_bound(&v, &w, 1.5, &config(2001)).unwrap();
        assert!(!r.m_bounded_below && !r.hypotheses_hold());
        assert!(r.flags.iter().any(|f| f == "m_not_bounded_below"));
        assert!(r.cp_bound.is_none());
    }

    #[test]
    fn quartic_bound_dominates_estimate() {
        let v = spec("poly:2=0.5,4=0.25");
        let w = spec("gaussian:sigma=1");
        let setup = prepare(&v, &w, &config(2001)).unwrap();
        let mu = setup.mu.clone();
        for p in [1.25, 1.5] {
            let r = setup.bound(p).unwrap();
            let b = r.cp_bound.unwrap();
            let est = beckner::estimate_cp(&mu, p, Mode::Unrestricted).unwrap().estimate.value;
            assert!(b >= est - 1e-6, "p={p}: {b} < {est}");
            assert!(b >= r.c2_mu.value);
            let (t, s) = (r.t_star.unwrap(), r.cp_star.unwrap());
            assert!(t > 0.0 && t <= 1.0);
            assert!((s - r.cp_nu.value / t).abs() <= 1e-12 * s);
            let restricted = beckner::estimate_cp(&mu, p, Mode::Restricted).unwrap().estimate.value;
            assert!(restricted <= s + 1e-6);
        }
    }

    #[test]
    fn ground_state_identity_converges() {
        let v = spec("poly:2=0.5,4=0.25");
        let w = spec("gaussian:sigma=1");
        let mut prev = None;
        for n in [2001, 4001, 8001] {
            let zd = compute_z_delta(&v, &w, &config(n)).unwrap();
            let f = GridFunction::from_fn(&zd.mu, f64::sin);
            let r = ground_state_energy_identity(&zd, &f).unwrap();
            if n == 4001 {
                assert!(r.residual <= 1e-3, "{}", r.residual);
            }
            if let Some(p) = prev {
                assert!(p / r.residual >= 3.0, "{p} -> {}", r.residual);
            }
            prev = Some(r.residual);
        }
    }

    #[test]
    fn ground_state_identity_is_exact_without_perturbation() {
        let g = spec("gaussian:sigma=1");
        let zd = compute_z_delta(&g, &g, &config(1001)).unwrap();
        let f = GridFunction::from_fn(&zd.mu, |x| x.cos() + 0.3 * x);
        let r = ground_state_energy_identity(&zd, &f).unwrap();
        assert!(r.residual < 1e-13, "{}", r.residual);
    }

    #[test]
    fn ground_state_identity_with_constant_g() {
        let v = spec("poly:2=0.5,4=0.25");
        let w = spec("gaussian:sigma=1");
        let zd = compute_z_delta(&v, &w, &narrow(4001)).unwrap();
        let ez = GridFunction::new(zd.mu.clone(), zd.z.values().iter().map(|z| z.exp()).collect()).unwrap();
        let r = ground_state_energy_identity(&zd, &ez).unwrap();
        assert!(r.residual < 1e-3, "{}", r.residual);
    }

    #[test]
    fn jensen_margin() {
        let g = spec("gaussian:sigma=1");
        let zd = compute_z_delta(&g, &g, &config(1001)).unwrap();
        let f = GridFunction::from_fn(&zd.mu, |x| 1.0 + x);
        let j = jensen_gap_check(&zd, &f, 1.5).unwrap();
        assert!(j.b.abs() < 1e-14 && j.lower_bound == 0.0);

        let v = spec("poly:2=0.5,4=0.25");
        let zd = compute_z_delta(&v, &g, &narrow(2001)).unwrap();
        let ez = GridFunction::new(zd.mu.clone(), zd.z.values().iter().map(|z| z.exp()).collect()).unwrap();
        assert!(jensen_gap_check(&zd, &ez, 1.5).unwrap().margin >= -1e-10);
    }

    #[test]
    fn sweep_toward_one() {
        let g = spec("gaussian:sigma=1");
        let s = corollary2_sweep(&g, &g, &DEFAULT_P_LIST, &config(4001)).unwrap();
        let end = s.endpoint.unwrap().report.unwrap();
        assert_eq!(end.p_prime, f64::INFINITY);
        assert!((end.cp_bound.unwrap() - 4.0).abs() < 0.02);
        assert_eq!(s.trend, "increasing_toward_one");
        assert!(matches!(
            corollary2_sweep(&g, &g, &[], &config(4001)),
            Err(Error::InvalidInput(_))
        ));

        let v = spec("poly:2=0.5,4=0.25");
        let s = corollary2_sweep(&v, &g, &DEFAULT_P_LIST, &config(2001)).unwrap();
        assert!(s.entries.iter().all(|e| e.report.as_ref().unwrap().cp_bound.unwrap().is_finite()));
        // Z grows like x⁴, so the sup-norm endpoint fails
        assert!(!s.endpoint.unwrap().report.unwrap().hypotheses_hold());
    }

    #[test]
    fn gaussian_reference_classification() {
        let sigmas = [0.5, 0.9, 1.0, 1.25, 2.0];
        let quartic = corollary5_check(&spec("poly:4=0.25"), &sigmas, 1.5, &config(2001)).unwrap();
        assert!(quartic.entries.iter().all(|e| e.passed));
        let abs = corollary5_check(&spec("power:alpha=1"), &sigmas, 1.5, &config(2001)).unwrap();
        assert!(abs.entries.iter().all(|e| !e.passed) && !abs.any_passed());
        let quad = corollary5_check(&spec("gaussian:sigma=1"), &sigmas, 1.5, &config(2001)).unwrap();
        for e in &quad.entries {
            assert_eq!(e.passed, e.sigma >= 1.0, "sigma={}", e.sigma);
            assert!(!e.flags.iter().any(|f| f == "energy_delta_disagree"));
        }
    }

    #[test]
    fn quartic_energy_infimum() {
        // x⁶ − c x² has its minimum −2(c/3)^{3/2} at x² = √(c/3)
        let v = spec("poly:4=0.25");
        for sigma in [0.7_f64, 1.0, 1.6] {
            let c = 6.0 + 1.0 / sigma.powi(4);
            let exact = -2.0 * (c / 3.0).powf(1.5);
            let f = |x: f64| gaussian_reference_energy(&v, sigma, x).unwrap();
            let (_, m) = refine_min(f, -3.0, 3.0, 601, &[]);
            assert!((m - exact).abs() < 1e-9 * exact.abs(), "{m} vs {exact}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn delta_ignores_additive_constants(
            a in 0.1f64..2.0, b in 0.01f64..1.0, c in -50.0f64..50.0, x in -4.0f64..4.0,
        ) {
            let v = spec(&format!("poly:2={a},4={b}"));
            let shifted = spec(&format!("poly:0={c},2={a},4={b}"));
            let w = spec("gaussian:sigma=1.3");
            let (d1, d2) = (delta_at(&v, &w, x).unwrap(), delta_at(&shifted, &w, x).unwrap());
            proptest::prop_assert!((d1 - d2).abs() <= 1e-12 * d1.abs().max(1.0));
        }

        #[test]
        fn bound_consistency_for_gaussian_pairs(
            s in 0.6f64..1.6, t in 0.6f64..1.6, p in 1.0f64..1.95,
        ) {
            let (v, w) = (PotentialSpec::gaussian(s).unwrap(), PotentialSpec::gaussian(t).unwrap());
            let r = theorem1_bound(&v, &w, p, &config(801)).unwrap();
            // the x² coefficient of δ is c(c + 1/t²) = c(1/s² + 1/t²)/2, so δ is bounded below iff s ≤ t
            let c = 0.5 * (1.0 / (s * s) - 1.0 / (t * t));
            proptest::prop_assert_eq!(r.m_bounded_below, c >= 0.0 || c.abs() < 1e-12);
            if let (Some(ts), Some(cs), Some(b)) = (r.t_star, r.cp_star, r.cp_bound) {
                proptest::prop_assert!(ts > 0.0 && ts <= 1.0);
                proptest::prop_assert!((cs - r.cp_nu.value / ts).abs() <= 1e-12 * cs);
                proptest::prop_assert_eq!(b, 2.0 / p * r.c2_mu.value + (2.0 / p - 1.0) * cs);
                proptest::prop_assert!(b >= r.c2_mu.value);
            }
        }
    }
}
