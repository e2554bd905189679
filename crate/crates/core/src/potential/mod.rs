//! Potentials `V` for measures `dμ = e^{-V} dx` on the real line.
//!
//! Closed-form families carry exact first and second derivatives; the
//! tabulated family is a natural cubic spline through user data.

mod spline;
pub mod tail;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

pub use spline::CubicSpline;
pub use tail::{PowerSeries, Side, TailLimit};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `V = x²/(2σ²)`.
    Gaussian { sigma: f64 },
    /// `V = |x|^α`, `α ≥ 1`.
    Power { alpha: f64 },
    /// `V = Σ c_k x^k` with even leading degree and positive leading coefficient.
    Polynomial { coeffs: BTreeMap<u32, f64> },
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub source: PathBuf,
    pub spline: CubicSpline,
}

/// A potential plus the additive constant that normalizes `e^{-V}`.
///
/// The constant is `None` until a grid is attached (see
/// [`crate::measure::GridMeasure`]); until then `V` is evaluated without it.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    family: Family,
    log_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialValue {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Infimum of `V''` over a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambda1 {
    pub value: f64,
    pub location: Option<f64>,
    pub attained: bool,
    pub note: Option<String>,
}

impl PotentialSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::NonIntegrable(format!("gaussian needs sigma > 0, got {sigma}")));
        }
        Ok(Self::from_family(Family::Gaussian { sigma }))
    }

    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 1.0) {
            return Err(Error::NonIntegrable(format!("power needs alpha >= 1, got {alpha}")));
        }
        Ok(Self::from_family(Family::Power { alpha }))
    }

    pub fn polynomial(coeffs: BTreeMap<u32, f64>) -> Result<Self> {
        if coeffs.values().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite polynomial coefficient".into()));
        }
        let leading = coeffs.iter().rev().find(|(_, c)| **c != 0.0);
        match leading {
            None => Err(Error::NonIntegrable("polynomial is identically zero".into())),
            Some((deg, c)) => {
                if *deg == 0 || deg % 2 != 0 {
                    Err(Error::NonIntegrable(format!(
                        "leading degree {deg} must be even and positive"
                    )))
                } else if *c <= 0.0 {
                    Err(Error::NonIntegrable(format!(
                        "leading coefficient {c} must be positive"
                    )))
                } else {
                    Ok(Self::from_family(Family::Polynomial { coeffs }))
                }
            }
        }
    }

    pub fn tabulated(source: impl Into<PathBuf>, knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let spline = CubicSpline::natural(knots, values)?;
        Ok(Self::from_family(Family::Tabulated(Table {
            source: source.into(),
            spline,
        })))
    }

    fn from_family(family: Family) -> Self {
        Self {
            family,
            log_norm: None,
        }
    }

    /// Parses `gaussian:sigma=..`, `power:alpha=..`, `poly:<deg>=<coef>,..`
    /// or `table:<path>` (two-column CSV `x,V`).
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        let (family, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::invalid_spec(spec, "expected `family:parameters`"))?;
        match family {
            "gaussian" => {
                let params = parse_params(spec, rest)?;
                let sigma = single_param(spec, &params, "sigma")?;
                Self::gaussian(sigma)
            }
            "power" => {
                let params = parse_params(spec, rest)?;
                let alpha = single_param(spec, &params, "alpha")?;
                Self::power(alpha)
            }
            "poly" => {
                let mut coeffs = BTreeMap::new();
                for (key, value) in parse_params(spec, rest)? {
                    let deg: u32 = key
                        .parse()
                        .map_err(|_| Error::invalid_spec(spec, format!("`{key}` is not a degree")))?;
                    if coeffs.insert(deg, value).is_some() {
                        return Err(Error::invalid_spec(spec, format!("degree {deg} given twice")));
                    }
                }
                Self::polynomial(coeffs)
            }
            "table" => {
                if rest.is_empty() {
                    return Err(Error::invalid_spec(spec, "missing table path"));
                }
                Self::load_table(Path::new(rest))
            }
            other => Err(Error::invalid_spec(spec, format!("unknown family `{other}`"))),
        }
    }

    fn load_table(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(file);
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::InvalidInput(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    row + 1,
                    record.len()
                )));
            }
            match (record[0].parse::<f64>(), record[1].parse::<f64>()) {
                (Ok(x), Ok(v)) => {
                    knots.push(x);
                    values.push(v);
                }
                // header row
                _ if row == 0 => continue,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "{}: row {} is not numeric",
                        path.display(),
                        row + 1
                    )))
                }
            }
        }
        Self::tabulated(path, knots, values)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn log_norm(&self) -> Option<f64> {
        self.log_norm
    }

    /// Copy with the normalization constant fixed, so that `V` includes it.
    pub fn with_log_norm(&self, log_norm: f64) -> Self {
        Self {
            family: self.family.clone(),
            log_norm: Some(log_norm),
        }
    }

    /// Same family without a normalization constant.
    pub fn unnormalized(&self) -> Self {
        Self::from_family(self.family.clone())
    }

    /// `σ` when the potential describes a centered Gaussian, whatever the
    /// spelling (`gaussian`, `poly:2=c`, `power:alpha=2`).
    pub fn as_gaussian_sigma(&self) -> Option<f64> {
        match &self.family {
            Family::Gaussian { sigma } => Some(*sigma),
            Family::Power { alpha } if *alpha == 2.0 => Some(std::f64::consts::FRAC_1_SQRT_2),
            Family::Polynomial { coeffs } => {
                if coeffs.iter().all(|(k, c)| *k == 0 || *k == 2 || *c == 0.0) {
                    coeffs.get(&2).map(|c2| (0.5 / c2).sqrt())
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Points where `V''` is not defined.
    pub fn singular_points(&self) -> Vec<f64> {
        match self.family {
            Family::Power { alpha } if alpha < 2.0 => vec![0.0],
            _ => Vec::new(),
        }
    }

    pub fn is_singular_at(&self, x: f64) -> bool {
        self.singular_points().contains(&x)
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self.family, Family::Tabulated(_))
    }

    /// `V(x)` including the normalization constant when resolved.
    pub fn value(&self, x: f64) -> f64 {
        self.raw_value(x) + self.log_norm.unwrap_or(0.0)
    }

    fn raw_value(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { sigma } => x * x / (2.0 * sigma * sigma),
            Family::Power { alpha } => x.abs().powf(*alpha),
            Family::Polynomial { coeffs } => poly_eval(coeffs, x, 0),
            Family::Tabulated(t) => t.spline.eval(x).0,
        }
    }

    pub fn d1(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { sigma } => x / (sigma * sigma),
            Family::Power { alpha } => {
                if x == 0.0 {
                    0.0
                } else {
                    alpha * x.abs().powf(alpha - 1.0) * x.signum()
                }
            }
            Family::Polynomial { coeffs } => poly_eval(coeffs, x, 1),
            Family::Tabulated(t) => t.spline.eval(x).1,
        }
    }

    pub fn d2(&self, x: f64) -> Result<f64> {
        Ok(match &self.family {
            Family::Gaussian { sigma } => 1.0 / (sigma * sigma),
            Family::Power { alpha } => {
                if x == 0.0 {
                    if *alpha < 2.0 {
                        return Err(Error::Singular { x });
                    } else if *alpha == 2.0 {
                        2.0
                    } else {
                        0.0
                    }
                } else {
                    alpha * (alpha - 1.0) * x.abs().powf(alpha - 2.0)
                }
            }
            Family::Polynomial { coeffs } => poly_eval(coeffs, x, 2),
            Family::Tabulated(t) => t.spline.eval(x).2,
        })
    }

    pub fn eval(&self, x: f64) -> Result<PotentialValue> {
        Ok(PotentialValue {
            v: self.value(x),
            d1: self.d1(x),
            d2: self.d2(x)?,
        })
    }

    /// Global minimizer of `V` (used to centre automatic domains).
    pub fn minimizer(&self) -> f64 {
        match &self.family {
            Family::Gaussian { .. } | Family::Power { .. } => 0.0,
            Family::Polynomial { .. } => {
                let r = self.search_radius();
                refine_min(|x| self.raw_value(x), -r, r, 4001, &[]).0
            }
            Family::Tabulated(t) => {
                let (i, _) = t
                    .spline
                    .values()
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, v)| if *v < acc.1 { (i, *v) } else { acc });
                t.spline.knots()[i]
            }
        }
    }

    /// Radius containing every critical point of `V` and `V''` for polynomials.
    fn search_radius(&self) -> f64 {
        match &self.family {
            Family::Polynomial { coeffs } => {
                let (lead_deg, lead) = coeffs.iter().rev().find(|(_, c)| **c != 0.0).expect("validated");
                let cauchy = coeffs
                    .iter()
                    .filter(|(k, _)| *k < lead_deg)
                    .map(|(_, c)| (c.abs() / lead) * (*lead_deg as f64))
                    .fold(0.0_f64, f64::max);
                1.0 + cauchy
            }
            _ => 10.0,
        }
    }

    /// `inf V''` over `domain`, or over the whole line when `domain` is `None`.
    pub fn bakry_emery_lambda1(&self, domain: Option<(f64, f64)>) -> Result<Lambda1> {
        match &self.family {
            Family::Gaussian { sigma } => Ok(Lambda1 {
                value: 1.0 / (sigma * sigma),
                location: None,
                attained: true,
                note: Some("V'' is constant".into()),
            }),
            Family::Power { alpha } => {
                let alpha = *alpha;
                if alpha == 2.0 {
                    Ok(Lambda1 {
                        value: 2.0,
                        location: None,
                        attained: true,
                        note: Some("V'' is constant".into()),
                    })
                } else if alpha == 1.0 {
                    Ok(Lambda1 {
                        value: 0.0,
                        location: None,
                        attained: true,
                        note: Some("V'' vanishes away from the origin".into()),
                    })
                } else if alpha > 2.0 {
                    Ok(Lambda1 {
                        value: 0.0,
                        location: Some(0.0),
                        attained: true,
                        note: None,
                    })
                } else {
                    match domain {
                        Some((a, b)) => {
                            let edge = if a.abs() >= b.abs() { a } else { b };
                            Ok(Lambda1 {
                                value: alpha * (alpha - 1.0) * edge.abs().powf(alpha - 2.0),
                                location: Some(edge),
                                attained: false,
                                note: Some("infimum at boundary, tends to 0".into()),
                            })
                        }
                        None => Ok(Lambda1 {
                            value: 0.0,
                            location: None,
                            attained: false,
                            note: Some("V'' tends to 0 as |x| grows".into()),
                        }),
                    }
                }
            }
            Family::Polynomial { coeffs } => {
                let (a, b) = domain.unwrap_or_else(|| {
                    let r = self.search_radius();
                    (-r, r)
                });
                let (x, value) = refine_min(|x| poly_eval(coeffs, x, 2), a, b, 4001, &[]);
                Ok(Lambda1 {
                    value,
                    location: Some(x),
                    attained: true,
                    note: None,
                })
            }
            Family::Tabulated(t) => {
                let knots = t.spline.knots();
                if knots.len() < 3 {
                    return Err(Error::InsufficientData {
                        needed: 3,
                        got: knots.len(),
                    });
                }
                // The spline's V'' is piecewise linear, so the infimum sits on a
                // knot or on a domain end.
                let (lo, hi) = domain.unwrap_or_else(|| t.spline.range());
                let mut best = (f64::NAN, f64::INFINITY);
                let candidates = knots
                    .iter()
                    .copied()
                    .filter(|x| *x >= lo && *x <= hi)
                    .chain([lo, hi]);
                for x in candidates {
                    let v = t.spline.eval(x).2;
                    if v < best.1 {
                        best = (x, v);
                    }
                }
                Ok(Lambda1 {
                    value: best.1,
                    location: Some(best.0),
                    attained: true,
                    note: Some("natural spline: V'' vanishes at the table ends".into()),
                })
            }
        }
    }

    /// `V(s·r)` as a sum of powers of `r`, for the tail analysis. `None` for
    /// tabulated data.
    pub fn tail_series(&self, side: Side) -> Option<PowerSeries> {
        let s = side.sign();
        match &self.family {
            Family::Gaussian { sigma } => Some(PowerSeries::monomial(0.5 / (sigma * sigma), 2.0)),
            Family::Power { alpha } => Some(PowerSeries::monomial(1.0, *alpha)),
            Family::Polynomial { coeffs } => Some(PowerSeries::from_terms(
                coeffs
                    .iter()
                    .map(|(k, c)| (*k as f64, c * s.powi(*k as i32))),
            )),
            Family::Tabulated(_) => None,
        }
    }

    /// Canonical text form; `parse(render(p)) == p` for unnormalized specs.
    pub fn render(&self) -> String {
        match &self.family {
            Family::Gaussian { sigma } => format!("gaussian:sigma={sigma}"),
            Family::Power { alpha } => format!("power:alpha={alpha}"),
            Family::Polynomial { coeffs } => {
                let body: Vec<String> = coeffs.iter().map(|(k, c)| format!("{k}={c}")).collect();
                format!("poly:{}", body.join(","))
            }
            Family::Tabulated(t) => format!("table:{}", t.source.display()),
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl std::str::FromStr for PotentialSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

fn parse_params(spec: &str, rest: &str) -> Result<Vec<(String, f64)>> {
    if rest.is_empty() {
        return Err(Error::invalid_spec(spec, "missing parameters"));
    }
    rest.split(',')
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::invalid_spec(spec, format!("`{kv}` is not key=value")))?;
            let value: f64 = v
                .parse()
                .map_err(|_| Error::invalid_spec(spec, format!("`{v}` is not a number")))?;
            if !value.is_finite() {
                return Err(Error::invalid_spec(spec, format!("`{v}` is not finite")));
            }
            Ok((k.to_string(), value))
        })
        .collect()
}

fn single_param(spec: &str, params: &[(String, f64)], key: &str) -> Result<f64> {
    match params {
        [(k, v)] if k == key => Ok(*v),
        _ => Err(Error::invalid_spec(spec, format!("expected exactly `{key}=<float>`"))),
    }
}

/// `order`-th derivative of `Σ c_k x^k`.
fn poly_eval(coeffs: &BTreeMap<u32, f64>, x: f64, order: u32) -> f64 {
    coeffs
        .iter()
        .filter(|(k, _)| **k >= order)
        .map(|(k, c)| {
            let falling: f64 = (0..order).map(|j| (*k - j) as f64).product();
            c * falling * x.powi((*k - order) as i32)
        })
        .sum()
}

/// Grid minimum of `f` on `[a, b]` refined by golden-section search in the
/// neighbouring cells. Points in `skip` are excluded together with a cell
/// around them.
pub(crate) fn refine_min(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize, skip: &[f64]) -> (f64, f64) {
    let h = (b - a) / (n - 1) as f64;
    let excluded = |x: f64| skip.iter().any(|s| (x - s).abs() < 0.5 * h);
    let mut best_i = None;
    let mut best_v = f64::INFINITY;
    for i in 0..n {
        let x = a + i as f64 * h;
        if excluded(x) {
            continue;
        }
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_i = Some(i);
        }
    }
    let Some(i) = best_i else {
        return (f64::NAN, f64::NAN);
    };
    let mut lo = a + i.saturating_sub(1) as f64 * h;
    let mut hi = a + (i + 1).min(n - 1) as f64 * h;
    if skip.iter().any(|s| *s > lo && *s < hi) {
        return (a + i as f64 * h, best_v);
    }
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if hi - lo <= 1e-14 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let (x, v) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    if v < best_v {
        (x, v)
    } else {
        (a + i as f64 * h, best_v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_the_three_closed_forms() {
        let g = PotentialSpec::parse("gaussian:sigma=1").unwrap();
        assert_eq!(g.family(), &Family::Gaussian { sigma: 1.0 });
        let p = PotentialSpec::parse("power:alpha=1.5").unwrap();
        assert_eq!(p.family(), &Family::Power { alpha: 1.5 });
        let q = PotentialSpec::parse("poly:2=0.5,4=0.25").unwrap();
        let coeffs: BTreeMap<u32, f64> = [(2, 0.5), (4, 0.25)].into_iter().collect();
        assert_eq!(q.family(), &Family::Polynomial { coeffs });
        assert_eq!(q.log_norm(), None);
    }

    #[test]
    fn rejects_bad_specs() {
        for bad in [
            "gaussian",
            "gaussian:sigma=0",
            "gaussian:sigma=-1",
            "gaussian:tau=1",
            "gaussian:sigma=1,sigma=2",
            "power:alpha=0.5",
            "power:alpha=abc",
            "poly:3=1",
            "poly:2=-1",
            "poly:2=1,2=3",
            "poly:x=1",
            "poly:0=1",
            "cauchy:gamma=1",
            "table:",
        ] {
            assert!(PotentialSpec::parse(bad).is_err(), "{bad} accepted");
        }
        match PotentialSpec::parse("power:alpha=0.5") {
            Err(Error::NonIntegrable(_)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_form_derivatives() {
        let p = PotentialSpec::parse("power:alpha=1.5").unwrap();
        assert!((p.d1(4.0) - 3.0).abs() < 1e-14);
        assert!((p.d1(-4.0) + 3.0).abs() < 1e-14);
        assert!(matches!(p.d2(0.0), Err(Error::Singular { x }) if x == 0.0));

        let q = PotentialSpec::parse("poly:2=0.5,4=0.25").unwrap();
        let e = q.eval(1.0).unwrap();
        assert_eq!(e.d2, 4.0);
        assert_eq!(e.d1, 2.0);
        assert_eq!(e.v, 0.75);
    }

    #[test]
    fn gaussian_eval_with_normalization() {
        let g = PotentialSpec::parse("gaussian:sigma=1").unwrap();
        let g = g.with_log_norm(0.5 * (2.0 * std::f64::consts::PI).ln());
        let e = g.eval(2.0).unwrap();
        assert!((e.v - (2.0 + 0.5 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-14);
        assert_eq!((e.d1, e.d2), (2.0, 1.0));
    }

    #[test]
    fn lambda1_values() {
        let g = PotentialSpec::parse("gaussian:sigma=1").unwrap();
        assert_eq!(g.bakry_emery_lambda1(None).unwrap().value, 1.0);

        // grid + bisection oracle for min of 1 + 3x²
        let q = PotentialSpec::parse("poly:2=0.5,4=0.25").unwrap();
        let l = q.bakry_emery_lambda1(None).unwrap();
        assert!((l.value - 1.0).abs() < 1e-12);
        assert!(l.location.unwrap().abs() < 1e-6);

        let p = PotentialSpec::parse("power:alpha=1.5").unwrap();
        let l = p.bakry_emery_lambda1(Some((-10.0, 10.0))).unwrap();
        let edge = 1.5 * 0.5 * 10f64.powf(-0.5);
        assert!((l.value - edge).abs() < 1e-14);
        assert!(!l.attained);
        assert_eq!(l.note.as_deref(), Some("infimum at boundary, tends to 0"));
        assert_eq!(p.bakry_emery_lambda1(None).unwrap().value, 0.0);
    }

    #[test]
    fn lambda1_of_shifted_quartic() {
        // V'' = 12x² - 12x + 4 has its minimum 1 at x = 1/2.
        let q = PotentialSpec::parse("poly:1=0.3,2=2,3=-2,4=1").unwrap();
        let l = q.bakry_emery_lambda1(None).unwrap();
        assert!((l.value - 1.0).abs() < 1e-12, "{l:?}");
        assert!((l.location.unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn tabulated_needs_three_points_for_lambda1() {
        let t = PotentialSpec::tabulated("mem", vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            t.bakry_emery_lambda1(None),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn table_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let mut body = String::from("x,V\n");
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            body.push_str(&format!("{x},{}\n", 0.5 * x * x));
        }
        std::fs::write(&path, body).unwrap();
        let spec = format!("table:{}", path.display());
        let t = PotentialSpec::parse(&spec).unwrap();
        assert_eq!(t.render(), spec);
        assert!((t.value(0.25) - 0.03125).abs() < 1e-6);
        assert!(PotentialSpec::parse("table:/nonexistent/file.csv").is_err());
    }

    #[test]
    fn gaussian_aliases() {
        let cases = [("gaussian:sigma=2", 2.0), ("poly:2=0.5", 1.0), ("poly:0=3,2=0.125", 2.0)];
        for (s, sigma) in cases {
            let got = PotentialSpec::parse(s).unwrap().as_gaussian_sigma().unwrap();
            assert!((got - sigma).abs() < 1e-15, "{s}");
        }
        assert!(PotentialSpec::parse("poly:2=0.5,4=1").unwrap().as_gaussian_sigma().is_none());
    }

    #[test]
    fn tail_series_matches_values() {
        for s in ["gaussian:sigma=0.7", "power:alpha=1.3", "poly:1=-0.4,2=0.5,3=0.2,4=0.25"] {
            let v = PotentialSpec::parse(s).unwrap();
            for side in Side::BOTH {
                let series = v.tail_series(side).unwrap();
                for r in [0.5, 3.0, 11.0] {
                    let x = side.sign() * r;
                    assert!((series.eval(r) - v.value(x)).abs() < 1e-9 * (1.0 + v.value(x).abs()));
                }
            }
        }
    }

    /// Central differences of V against analytic V' on a smooth grid: O(h²).
    #[test]
    fn finite_differences_match_analytic_derivative() {
        let h: f64 = 1e-3;
        for s in ["gaussian:sigma=1.3", "power:alpha=2.5", "power:alpha=1.5", "poly:2=0.5,4=0.25"] {
            let v = PotentialSpec::parse(s).unwrap();
            let mut worst = 0.0_f64;
            for i in 0..200 {
                let x = 0.3 + 0.02 * i as f64;
                let fd = (v.value(x + h) - v.value(x - h)) / (2.0 * h);
                let exact = v.d1(x);
                worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
                let fd2 = (v.d1(x + h) - v.d1(x - h)) / (2.0 * h);
                let exact2 = v.d2(x).unwrap();
                worst = worst.max((fd2 - exact2).abs() / exact2.abs().max(1.0));
            }
            assert!(worst <= 10.0 * h * h, "{s}: {worst}");
        }
    }

    fn spec_strategy() -> impl Strategy<Value = PotentialSpec> {
        prop_oneof![
            (1e-3f64..1e3).prop_map(|s| PotentialSpec::gaussian(s).unwrap()),
            (1.0f64..8.0).prop_map(|a| PotentialSpec::power(a).unwrap()),
            (
                proptest::collection::btree_map(0u32..6, -5.0f64..5.0, 0..4),
                1u32..4,
                1e-3f64..10.0
            )
                .prop_map(|(mut m, half, lead)| {
                    m.retain(|k, _| *k < 2 * half);
                    m.insert(2 * half, lead);
                    PotentialSpec::polynomial(m).unwrap()
                }),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_roundtrip(spec in spec_strategy()) {
            let text = spec.render();
            let back = PotentialSpec::parse(&text).unwrap();
            prop_assert_eq!(&back, &spec);
            prop_assert_eq!(back.render(), text);
        }
    }
}
