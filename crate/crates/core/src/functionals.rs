//! Functionals entering the Poincaré, Beckner and log-Sobolev inequalities.
//!
//! All of them are evaluated on the discrete measure. The Dirichlet energy
//! uses cell difference quotients weighted by the density at cell midpoints,
//! which is the quadratic form assembled by [`crate::spectral`].

use crate::error::{Error, Result};
use crate::measure::GridFunction;

/// `∫|u'|² dμ`.
pub fn dirichlet(u: &GridFunction) -> f64 {
    let mid = u.measure().mid_weights();
    u.cell_derivative()
        .iter()
        .zip(mid)
        .map(|(d, m)| m * d * d)
        .sum()
}

/// `∫u² dμ − (∫u dμ)²`, evaluated in centered form.
pub fn variance(u: &GridFunction) -> f64 {
    variance_raw(u.measure().weights(), u.values())
}

pub(crate) fn variance_raw(w: &[f64], u: &[f64]) -> f64 {
    let mean: f64 = w.iter().zip(u).map(|(w, u)| w * u).sum();
    w.iter().zip(u).map(|(w, u)| w * (u - mean) * (u - mean)).sum()
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p <= 2.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("p must lie in (1, 2], got {p}")))
    }
}

/// `(1/(p−1)) [∫u² dμ − (∫|u|^{2/p} dμ)^p]` for `p ∈ (1, 2]`.
pub fn beckner_deficit(u: &GridFunction, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(deficit_raw(u.measure().weights(), u.values(), p))
}

pub(crate) fn deficit_raw(w: &[f64], u: &[f64], p: f64) -> f64 {
    let q = 2.0 / p;
    let (mut s2, mut sq) = (0.0, 0.0);
    for (w, u) in w.iter().zip(u) {
        let a = u.abs();
        s2 += w * a * a;
        if a > 0.0 {
            sq += w * a.powf(q);
        }
    }
    (s2 - sq.powf(p)) / (p - 1.0)
}

/// `∫u² log(u²/‖u‖²) dμ` with the convention `0 log 0 = 0`.
pub fn log_sobolev_entropy(u: &GridFunction) -> Result<f64> {
    entropy_raw(u.measure().weights(), u.values())
        .ok_or_else(|| Error::DegenerateInput("entropy of the zero function".into()))
}

pub(crate) fn entropy_raw(w: &[f64], u: &[f64]) -> Option<f64> {
    let s2: f64 = w.iter().zip(u).map(|(w, u)| w * u * u).sum();
    if s2 <= 0.0 {
        return None;
    }
    let ln_s2 = s2.ln();
    Some(
        w.iter()
            .zip(u)
            .filter(|(_, u)| **u != 0.0)
            .map(|(w, u)| {
                let u2 = u * u;
                w * u2 * (u2.ln() - ln_s2)
            })
            .sum(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{build_measure, Domain, GridMeasure};
    use crate::potential::PotentialSpec;
    use std::sync::Arc;

    fn gaussian(sigma: f64) -> Arc<GridMeasure> {
        let v = PotentialSpec::gaussian(sigma).unwrap();
        build_measure(&v, 4001, Domain::Auto).unwrap()
    }

    #[test]
    fn constants_have_zero_functionals() {
        let mu = gaussian(1.0);
        let c = GridFunction::constant(&mu, 2.5);
        assert_eq!(dirichlet(&c), 0.0);
        assert!(variance(&c).abs() < 1e-14);
        assert!(beckner_deficit(&c, 1.5).unwrap().abs() < 1e-13);
        assert!(log_sobolev_entropy(&c).unwrap().abs() < 1e-13);
    }

    #[test]
    fn gaussian_closed_forms() {
        let mu = gaussian(1.0);
        let x = GridFunction::from_fn(&mu, |x| x);
        assert!((dirichlet(&x) - 1.0).abs() < 1e-6);
        assert!((variance(&x) - 1.0).abs() < 1e-6);

        // ∫a² e^{2ax} dν = a² e^{2a²}
        let a = 0.3;
        let e = GridFunction::from_fn(&mu, |x| (a * x).exp());
        let expected = a * a * (2.0 * a * a).exp();
        assert!((dirichlet(&e) - expected).abs() < 1e-6 * expected);
        assert!((expected - 0.107_72).abs() < 1e-4);

        // entropy of e^{ax}: 2a² e^{2a²}
        let ent = log_sobolev_entropy(&e).unwrap();
        assert!((ent - 2.0 * a * a * (2.0 * a * a).exp()).abs() < 1e-8);

        let a = 0.4;
        let p = 1.5;
        let e = GridFunction::from_fn(&mu, |x| (a * x).exp());
        let expected = ((2.0 * a * a).exp() - (2.0 * a * a / p).exp()) / (p - 1.0);
        assert!((beckner_deficit(&e, p).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn variance_scales_and_shifts() {
        let sigma = 1.7;
        let mu = gaussian(sigma);
        let x = GridFunction::from_fn(&mu, |x| x);
        let shifted = GridFunction::from_fn(&mu, |x| 1.0 + x);
        assert!((variance(&x) - sigma * sigma).abs() < 1e-6);
        assert!((variance(&shifted) - variance(&x)).abs() < 1e-12);
    }

    #[test]
    fn deficit_at_p2_is_variance_for_nonnegative_u() {
        let mu = gaussian(1.0);
        let u = GridFunction::from_fn(&mu, |x| 1.0 + x * x + (x).sin());
        assert!(u.values().iter().all(|v| *v >= 0.0));
        let d = beckner_deficit(&u, 2.0).unwrap();
        assert!((d - variance(&u)).abs() < 1e-12 * (1.0 + d));
        assert!(beckner_deficit(&u, 1.0).is_err());
        assert!(beckner_deficit(&u, 2.5).is_err());
    }

    #[test]
    fn deficit_tends_to_entropy_as_p_decreases() {
        let mu = gaussian(1.0);
        let u = GridFunction::from_fn(&mu, |x| (0.3 * x).exp());
        let ent = log_sobolev_entropy(&u).unwrap();
        let def = beckner_deficit(&u, 1.0001).unwrap();
        assert!((def - ent).abs() / ent <= 1e-3);
    }

    #[test]
    fn single_atom_entropy() {
        let mu = gaussian(1.0);
        let j = 1234;
        let mut vals = vec![0.0; mu.len()];
        vals[j] = 3.0;
        let u = GridFunction::new(Arc::clone(&mu), vals).unwrap();
        let w = mu.weights()[j];
        let expected = w * 9.0 * (1.0 / w).ln();
        assert!((log_sobolev_entropy(&u).unwrap() - expected).abs() < 1e-12 * expected);
        let zero = GridFunction::constant(&mu, 0.0);
        assert!(matches!(log_sobolev_entropy(&zero), Err(Error::DegenerateInput(_))));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn homogeneity_and_nonnegativity(
            vals in proptest::collection::vec(-5.0f64..5.0, 32),
            ws in proptest::collection::vec(0.01f64..1.0, 32),
            lambda in -4.0f64..4.0,
            p in 1.01f64..2.0,
        ) {
            let nodes: Vec<f64> = (0..32).map(|i| i as f64).collect();
            let mu = GridMeasure::from_weights(nodes, ws).unwrap();
            let u = GridFunction::new(mu, vals).unwrap();
            let d = beckner_deficit(&u, p).unwrap();
            prop_assert!(d >= -1e-12);
            let scaled = u.map(|v| lambda * v);
            let ds = beckner_deficit(&scaled, p).unwrap();
            prop_assert!((ds - lambda * lambda * d).abs() <= 1e-10 * (1.0 + ds.abs()));
            if u.values().iter().any(|v| *v != 0.0) && lambda != 0.0 {
                let e = log_sobolev_entropy(&u).unwrap();
                prop_assert!(e >= -1e-12);
                let es = log_sobolev_entropy(&scaled).unwrap();
                prop_assert!((es - lambda * lambda * e).abs() <= 1e-10 * (1.0 + es.abs()));
            }
        }
    }
}
