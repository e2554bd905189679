//! Moment inequalities that lift mean-zero inequalities to general functions.
//!
//! All checks run on the discrete measure itself. A grid measure is a genuine
//! probability measure, so each inequality must hold up to round-off.
//! The randomized suites also cover the two checkable steps of the
//! perturbation argument (the Jensen bound and the ground-state identity).

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{build_measure, Domain, GridConfig, GridFunction, GridMeasure};
use crate::perturbation::{self, ZDelta};
use crate::potential::PotentialSpec;

fn moment(w: &[f64], u: &[f64], q: f64) -> f64 {
    w.iter().zip(u).map(|(w, u)| w * u.abs().powf(q)).sum()
}

fn mean(w: &[f64], u: &[f64]) -> f64 {
    w.iter().zip(u).map(|(w, u)| w * u).sum()
}

fn centered(w: &[f64], u: &[f64]) -> Vec<f64> {
    let m = mean(w, u);
    u.iter().map(|u| u - m).collect()
}

/// `(∫|u|^q)^{2/q} − ū² − (q − 1)(∫|u − ū|^q)^{2/q}` for `q ∈ [1, 2]`.
pub fn lemma4_gap(u: &GridFunction, q: f64) -> Result<f64> {
    lemma4_gap_raw(u.measure().weights(), u.values(), q)
}

pub fn lemma4_gap_raw(w: &[f64], u: &[f64], q: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&q) {
        return Err(Error::InvalidInput(format!("q must lie in [1, 2], got {q}")));
    }
    let ubar = mean(w, u);
    let v = centered(w, u);
    Ok(moment(w, u, q).powf(2.0 / q) - ubar * ubar - (q - 1.0) * moment(w, &v, q).powf(2.0 / q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Remark1Side {
    /// `∫|u|^q ≤ |ū|^q + ½q(q−1)‖u‖^{q−2}‖v‖²` for `q ≥ 2`.
    UpperQGe2,
    /// The reversed inequality for `q ∈ (1, 2]`.
    LowerQLe2,
}

/// Slack of the requested one-sided inequality, nonnegative when it holds.
pub fn remark1_gap(u: &GridFunction, q: f64, side: Remark1Side) -> Result<f64> {
    remark1_gap_raw(u.measure().weights(), u.values(), q, side)
}

pub fn remark1_gap_raw(w: &[f64], u: &[f64], q: f64, side: Remark1Side) -> Result<f64> {
    let in_range = match side {
        Remark1Side::UpperQGe2 => q >= 2.0 && q.is_finite(),
        Remark1Side::LowerQLe2 => q > 1.0 && q <= 2.0,
    };
    if !in_range {
        return Err(Error::InvalidInput(format!("q = {q} does not match {side:?}")));
    }
    let lhs = moment(w, u, q);
    if lhs == 0.0 {
        return Err(Error::DegenerateInput("u vanishes identically".into()));
    }
    let v = centered(w, u);
    let u_norm = lhs.powf(1.0 / q);
    let v_norm = moment(w, &v, q).powf(1.0 / q);
    let rhs = mean(w, u).abs().powf(q) + 0.5 * q * (q - 1.0) * u_norm.powf(q - 2.0) * v_norm * v_norm;
    Ok(match side {
        Remark1Side::UpperQGe2 => rhs - lhs,
        Remark1Side::LowerQLe2 => lhs - rhs,
    })
}

/// `ū² + (q − 1)(∫|u − ū|^q)^{2/q} − (∫|u|^q)^{2/q}` for `q > 2`.
pub fn remark2_gap(u: &GridFunction, q: f64) -> Result<f64> {
    remark2_gap_raw(u.measure().weights(), u.values(), q)
}

pub fn remark2_gap_raw(w: &[f64], u: &[f64], q: f64) -> Result<f64> {
    if !(q > 2.0 && q.is_finite()) {
        return Err(Error::InvalidInput(format!("q must exceed 2, got {q}")));
    }
    let ubar = mean(w, u);
    let v = centered(w, u);
    Ok(ubar * ubar + (q - 1.0) * moment(w, &v, q).powf(2.0 / q) - moment(w, u, q).powf(2.0 / q))
}

/// Relative residual of the algebraic rearrangement used to pass from the
/// mean-zero bound to the general one, with `v = u − ū`.
pub fn theorem1_lift_identity(u: &GridFunction, p: f64) -> Result<f64> {
    lift_identity_raw(u.measure().weights(), u.values(), p)
}

pub fn lift_identity_raw(w: &[f64], u: &[f64], p: f64) -> Result<f64> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::InvalidInput(format!("p must lie in (1, 2), got {p}")));
    }
    let v = centered(w, u);
    let v2 = moment(w, &v, 2.0);
    let vq = moment(w, &v, 2.0 / p).powf(p);
    let lhs = v2 - (2.0 / p - 1.0) * vq;
    let rhs = 2.0 * (p - 1.0) / p * v2 + (2.0 - p) / p * (v2 - vq);
    let scale = v2.abs() + vq.abs();
    Ok(if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Lemma4,
    Remark1,
    Remark2,
    Lift,
    Jensen,
    Groundstate,
}

impl Suite {
    /// Trials pass when `value ≥ -tolerance` (or `value ≤ tolerance` for residuals).
    pub fn tolerance(self) -> f64 {
        match self {
            Suite::Lemma4 | Suite::Lift => 1e-12,
            Suite::Remark1 | Suite::Remark2 | Suite::Jensen => 1e-10,
            Suite::Groundstate => 1e-3,
        }
    }

    fn is_residual(self) -> bool {
        matches!(self, Suite::Lift | Suite::Groundstate)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub index: u64,
    pub measure: String,
    /// Exponent `q`, or `p` for the suites built on the Beckner functional.
    pub exponent: f64,
    pub side: Option<Remark1Side>,
    pub value: f64,
    pub weights: Vec<f64>,
    pub u: Vec<f64>,
}

impl Trial {
    fn passes(&self, suite: Suite) -> bool {
        if suite.is_residual() {
            self.value <= suite.tolerance()
        } else {
            self.value >= -suite.tolerance()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: u64,
    pub seed: u64,
    pub tolerance: f64,
    /// Smallest gap, or largest residual.
    pub worst: f64,
    pub worst_trial: u64,
    pub failures: Vec<Trial>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Failing trials as CSV, one row per trial, vectors joined with `;`.
    pub fn write_failures_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        wr.write_record(["trial", "measure", "exponent", "side", "value", "weights", "u"])?;
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";");
        for t in &self.failures {
            let side = t.side.map(|s| format!("{s:?}")).unwrap_or_default();
            wr.write_record([
                t.index.to_string(),
                t.measure.clone(),
                format!("{:e}", t.exponent),
                side,
                format!("{:e}", t.value),
                join(&t.weights),
                join(&t.u),
            ])?;
        }
        wr.flush().map_err(|e| Error::Io {
            path: "<csv>".into(),
            source: e,
        })
    }
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// A random measure: a grid measure of a random family, or raw positive weights.
fn random_measure(rng: &mut ChaCha8Rng) -> Result<(String, Arc<GridMeasure>)> {
    let n = rng.gen_range(8..=200);
    let spec = match rng.gen_range(0..4) {
        0 => format!("gaussian:sigma={}", rng.gen_range(0.3..3.0)),
        1 => format!("power:alpha={}", rng.gen_range(1.0..=2.0)),
        2 => format!("poly:2={},4={}", rng.gen_range(0.0..1.0), rng.gen_range(0.01..1.0)),
        _ => {
            let nodes: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64 * 4.0 - 2.0).collect();
            // weights spanning several orders of magnitude
            let weights = (0..n).map(|_| 10f64.powf(rng.gen_range(-6.0..0.0))).collect();
            return Ok(("weights".into(), GridMeasure::from_weights(nodes, weights)?));
        }
    };
    let mu = build_measure(&PotentialSpec::parse(&spec)?, n.max(16), Domain::Auto)?;
    Ok((spec, mu))
}

/// A random function: polynomial, exponential, sign-changing steps or a spike,
/// scaled so that `max |u|` lies in `[0.1, 3]`.
fn random_function(rng: &mut ChaCha8Rng, x: &[f64]) -> Vec<f64> {
    let (a, b) = (x[0], x[x.len() - 1]);
    let t = |x: f64| (2.0 * x - a - b) / (b - a);
    let mut u: Vec<f64> = match rng.gen_range(0..4) {
        0 => {
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            x.iter().map(|&x| c.iter().rev().fold(0.0, |acc, c| acc * t(x) + c)).collect()
        }
        1 => {
            let (k, s) = (rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0));
            x.iter().map(|&x| (k * t(x)).exp() + s).collect()
        }
        2 => {
            let cuts: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let levels: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            x.iter()
                .map(|&x| levels[cuts.iter().filter(|c| **c < t(x)).count()])
                .collect()
        }
        _ => {
            let base = rng.gen_range(-1.0..1.0);
            let j = rng.gen_range(0..x.len());
            let h = rng.gen_range(-5.0..5.0);
            (0..x.len()).map(|i| if i == j { base + h } else { base }).collect()
        }
    };
    let max = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max > 0.0 {
        let s = rng.gen_range(0.1..3.0) / max;
        u.iter_mut().for_each(|v| *v *= s);
    } else {
        u[0] = 1.0;
    }
    u
}

/// Random smooth function: a short trigonometric sum plus a constant.
fn random_smooth(rng: &mut ChaCha8Rng, x: &[f64]) -> Vec<f64> {
    let c = rng.gen_range(-1.0..1.0);
    let terms: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.5..2.0), rng.gen_range(0.0..6.3)))
        .collect();
    x.iter()
        .map(|&x| c + terms.iter().map(|(a, b, p)| a * (b * x + p).sin()).sum::<f64>())
        .collect()
}

/// The fixed pair used by the perturbation suites: `V = x⁴/4 + x²/2`, `W = x²/2`.
pub fn perturbation_pair(n: usize) -> Result<ZDelta> {
    let v = PotentialSpec::parse("poly:2=0.5,4=0.25")?;
    let w = PotentialSpec::gaussian(1.0)?;
    perturbation::compute_z_delta(
        &v,
        &w,
        &GridConfig {
            n,
            ..GridConfig::default()
        },
    )
}

fn run_trial(suite: Suite, seed: u64, index: u64, pair: Option<&ZDelta>) -> Result<Trial> {
    let mut rng = trial_rng(seed, index);
    let mut side = None;
    let (name, mu, u, exponent, value) = match (suite, pair) {
        (Suite::Jensen | Suite::Groundstate, Some(zd)) => {
            let u = random_smooth(&mut rng, zd.mu.nodes());
            let f = GridFunction::new(Arc::clone(&zd.mu), u.clone())?;
            if suite == Suite::Jensen {
                let p = rng.gen_range(1.05..1.95);
                let j = perturbation::jensen_gap_check(zd, &f, p)?;
                ("pair".to_string(), Arc::clone(&zd.mu), u, p, j.margin)
            } else {
                let r = perturbation::ground_state_energy_identity(zd, &f)?;
                ("pair".to_string(), Arc::clone(&zd.mu), u, f64::NAN, r.residual)
            }
        }
        _ => {
            let (name, mu) = random_measure(&mut rng)?;
            let u = random_function(&mut rng, mu.nodes());
            let w = mu.weights();
            let (q, value) = match suite {
                Suite::Lemma4 => {
                    let q = match rng.gen_range(0..10) {
                        0 => 1.0,
                        1 => 2.0,
                        _ => rng.gen_range(1.0..2.0),
                    };
                    (q, lemma4_gap_raw(w, &u, q)?)
                }
                Suite::Remark1 => {
                    let (s, q) = if rng.gen_bool(0.5) {
                        (Remark1Side::UpperQGe2, rng.gen_range(2.0..4.0))
                    } else {
                        (Remark1Side::LowerQLe2, rng.gen_range(1.0..=2.0_f64).max(1.0 + 1e-9))
                    };
                    side = Some(s);
                    (q, remark1_gap_raw(w, &u, q, s)?)
                }
                Suite::Remark2 => {
                    let q = rng.gen_range(2.0..=10.0_f64).max(2.0 + 1e-9);
                    (q, remark2_gap_raw(w, &u, q)?)
                }
                _ => {
                    let p = rng.gen_range(1.01..1.99);
                    (p, lift_identity_raw(w, &u, p)?)
                }
            };
            (name, mu, u, q, value)
        }
    };
    Ok(Trial {
        index,
        measure: name,
        exponent,
        side,
        value,
        weights: mu.weights().to_vec(),
        u,
    })
}

/// Runs `trials` independent trials; trial `k` draws from stream `k` of a
/// generator seeded with `seed`, so results do not depend on scheduling.
pub fn run_suite(suite: Suite, trials: u64, seed: u64) -> Result<SuiteReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let pair = match suite {
        Suite::Jensen | Suite::Groundstate => Some(perturbation_pair(4001)?),
        _ => None,
    };
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|k| run_trial(suite, seed, k, pair.as_ref()))
        .collect::<Result<_>>()?;
    let worst = if suite.is_residual() {
        results.iter().max_by(|a, b| a.value.total_cmp(&b.value))
    } else {
        results.iter().min_by(|a, b| a.value.total_cmp(&b.value))
    }
    .expect("nonempty");
    Ok(SuiteReport {
        suite,
        trials,
        seed,
        tolerance: suite.tolerance(),
        worst: worst.value,
        worst_trial: worst.index,
        failures: results.iter().filter(|t| !t.passes(suite)).cloned().collect(),
    })
}
