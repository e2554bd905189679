//! Leading-order asymptotics of closed-form potentials.
//!
//! On each half-line `x = s·r` (`s = ±1`, `r > 0`) every closed-form family is
//! a finite sum `Σ c_j r^{e_j}` with real exponents. Sums, products and
//! `d/dr` stay in that class, which is enough to decide whether expressions
//! such as `|Z'|² − Z'' + Z'W'` are bounded below as `r → ∞`.

use std::ops::{Add, Mul, Neg, Sub};

const MERGE_EXP_TOL: f64 = 1e-12;
const CANCEL_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Negative, Side::Positive];

    pub fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }
}

/// A single term with the magnitude of everything that was merged into it,
/// so that exact cancellations can be recognised after round-off.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    exp: f64,
    coef: f64,
    scale: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerSeries {
    terms: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailLimit {
    PlusInfinity,
    MinusInfinity,
    Finite(f64),
}

impl TailLimit {
    pub fn bounded_below(self) -> bool {
        !matches!(self, TailLimit::MinusInfinity)
    }

    pub fn bounded(self) -> bool {
        matches!(self, TailLimit::Finite(_))
    }
}

impl PowerSeries {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(coef: f64, exp: f64) -> Self {
        Self::from_terms([(exp, coef)])
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial(c, 0.0)
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut s = Self {
            terms: terms
                .into_iter()
                .map(|(exp, coef)| Term {
                    exp,
                    coef,
                    scale: coef.abs(),
                })
                .collect(),
        };
        s.normalize();
        s
    }

    fn normalize(&mut self) {
        self.terms
            .sort_by(|a, b| b.exp.partial_cmp(&a.exp).expect("finite exponents"));
        let mut merged: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if (last.exp - t.exp).abs() <= MERGE_EXP_TOL => {
                    last.coef += t.coef;
                    last.scale += t.scale;
                }
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coef.abs() > CANCEL_REL_TOL * t.scale && t.coef != 0.0);
        self.terms = merged;
    }

    /// Terms as `(exponent, coefficient)`, highest exponent first.
    pub fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.terms.iter().map(|t| (t.exp, t.coef))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn leading(&self) -> Option<(f64, f64)> {
        self.terms.first().map(|t| (t.exp, t.coef))
    }

    pub fn derivative(&self) -> Self {
        let mut s = Self {
            terms: self
                .terms
                .iter()
                .filter(|t| t.exp.abs() > MERGE_EXP_TOL)
                .map(|t| Term {
                    exp: t.exp - 1.0,
                    coef: t.coef * t.exp,
                    scale: t.scale * t.exp.abs(),
                })
                .collect(),
        };
        s.normalize();
        s
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut s = self.clone();
        for t in &mut s.terms {
            t.coef *= factor;
            t.scale *= factor.abs();
        }
        s.normalize();
        s
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.terms.iter().map(|t| t.coef * r.powf(t.exp)).sum()
    }

    /// Behaviour as `r → ∞`.
    pub fn limit(&self) -> TailLimit {
        match self.leading() {
            None => TailLimit::Finite(0.0),
            Some((e, c)) if e > MERGE_EXP_TOL => {
                if c > 0.0 {
                    TailLimit::PlusInfinity
                } else {
                    TailLimit::MinusInfinity
                }
            }
            Some(_) => TailLimit::Finite(
                self.terms
                    .iter()
                    .find(|t| t.exp.abs() <= MERGE_EXP_TOL)
                    .map_or(0.0, |t| t.coef),
            ),
        }
    }
}

impl Add for &PowerSeries {
    type Output = PowerSeries;
    fn add(self, rhs: &PowerSeries) -> PowerSeries {
        let mut s = PowerSeries {
            terms: self.terms.iter().chain(rhs.terms.iter()).copied().collect(),
        };
        s.normalize();
        s
    }
}

impl Sub for &PowerSeries {
    type Output = PowerSeries;
    fn sub(self, rhs: &PowerSeries) -> PowerSeries {
        self + &(-rhs)
    }
}

impl Neg for &PowerSeries {
    type Output = PowerSeries;
    fn neg(self) -> PowerSeries {
        self.scale(-1.0)
    }
}

impl Mul for &PowerSeries {
    type Output = PowerSeries;
    fn mul(self, rhs: &PowerSeries) -> PowerSeries {
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                terms.push(Term {
                    exp: a.exp + b.exp,
                    coef: a.coef * b.coef,
                    scale: a.scale * b.scale,
                });
            }
        }
        let mut s = PowerSeries { terms };
        s.normalize();
        s
    }
}
