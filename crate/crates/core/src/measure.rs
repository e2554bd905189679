//! Discrete probability measures on uniform grids and functions on them.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::potential::PotentialSpec;

/// Smallest node count accepted by [`build_measure`].
pub const MIN_NODES: usize = 16;
/// Relative density at which automatic domains are cut: `e^{-V} < 10⁻¹⁸ · max`.
pub const AUTO_DENSITY_RATIO: f64 = 1e-18;
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

static NEXT_MEASURE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::GridTooSmall { n, min: 2 });
        }
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::InvalidInput(format!("invalid interval [{a}, {b}]")));
        }
        Ok(Self { a, b, n })
    }

    pub fn step(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.b
        } else {
            self.a + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Auto,
    Interval(f64, f64),
}

/// A probability measure `Σ wᵢ δ_{xᵢ}` obtained from trapezoid cells of `e^{-V}`.
///
/// Weights are normalized after discretization, so `Σ wᵢ = 1` up to
/// round-off and the discrete object is itself a probability measure.
/// `mid_weights` holds the same density at cell midpoints times the cell
/// length; it carries the Dirichlet form.
#[derive(Debug)]
pub struct GridMeasure {
    id: u64,
    nodes: Vec<f64>,
    grid: Option<Grid>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    log_mid_weights: Vec<f64>,
    mid_weights: Vec<f64>,
    potential: Option<PotentialSpec>,
    tail_mass: f64,
    skipped: Vec<usize>,
}

impl GridMeasure {
    /// Discretizes `e^{-V}` on `grid` and checks the mass left outside it.
    pub fn on_grid(potential: &PotentialSpec, grid: Grid, tail_tol: f64) -> Result<Arc<Self>> {
        let raw = potential.unnormalized();
        let h = grid.step();
        let nodes = grid.nodes();
        let values: Vec<f64> = nodes.iter().map(|x| raw.value(*x)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("potential is not finite on the grid".into()));
        }
        let v_ref = values.iter().copied().fold(f64::INFINITY, f64::min);
        let cell = |i: usize| if i == 0 || i == grid.n - 1 { 0.5 * h } else { h };
        let sum: f64 = values
            .iter()
            .enumerate()
            .map(|(i, v)| cell(i) * (-(v - v_ref)).exp())
            .sum();
        let ln_sum = sum.ln();
        let log_norm = ln_sum - v_ref;
        let log_weights: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(i, v)| cell(i).ln() - (v - v_ref) - ln_sum)
            .collect();
        let mut weights: Vec<f64> = log_weights.iter().map(|l| l.exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        let log_mid_weights: Vec<f64> = nodes
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                h.ln() - (raw.value(mid) - v_ref) - ln_sum
            })
            .collect();
        let mid_weights = log_mid_weights.iter().map(|l| l.exp()).collect();

        let normalized = raw.with_log_norm(log_norm);
        let density = |x: f64| (-normalized.value(x)).exp();
        let left_slope = -normalized.d1(grid.a);
        let right_slope = normalized.d1(grid.b);
        if left_slope <= 0.0 {
            return Err(Error::NonNormalizable {
                side: "left",
                slope: normalized.d1(grid.a),
            });
        }
        if right_slope <= 0.0 {
            return Err(Error::NonNormalizable {
                side: "right",
                slope: right_slope,
            });
        }
        // exponential tail fit from the boundary density and slope
        let tail_mass = density(grid.a) / left_slope + density(grid.b) / right_slope;
        if tail_mass > tail_tol {
            return Err(Error::TailMassExceeded {
                tail_mass,
                tolerance: tail_tol,
            });
        }

        let singular = normalized.singular_points();
        let skipped = nodes
            .iter()
            .enumerate()
            .filter(|(_, x)| singular.iter().any(|s| (*x - s).abs() < 0.5 * h))
            .map(|(i, _)| i)
            .collect();

        Ok(Arc::new(Self {
            id: NEXT_MEASURE_ID.fetch_add(1, Ordering::Relaxed),
            nodes,
            grid: Some(grid),
            log_weights,
            weights,
            log_mid_weights,
            mid_weights,
            potential: Some(normalized),
            tail_mass,
            skipped,
        }))
    }

    /// Arbitrary finite measure with positive weights, normalized to mass one.
    /// Edge weights for the Dirichlet form are neighbour averages.
    pub fn from_weights(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Arc<Self>> {
        if nodes.len() != weights.len() || nodes.is_empty() {
            return Err(Error::InvalidInput("nodes and weights must be non-empty and of equal length".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("nodes must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput("weights must be positive and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        let mid_weights: Vec<f64> = weights.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let log_mid_weights = mid_weights.iter().map(|w| w.ln()).collect();
        Ok(Arc::new(Self {
            id: NEXT_MEASURE_ID.fetch_add(1, Ordering::Relaxed),
            nodes,
            grid: None,
            log_weights,
            weights,
            log_mid_weights,
            mid_weights,
            potential: None,
            tail_mass: 0.0,
            skipped: Vec::new(),
        }))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn grid(&self) -> Option<Grid> {
        self.grid
    }

    /// Uniform spacing; `None` for measures built from raw weights.
    pub fn step(&self) -> Option<f64> {
        self.grid.map(|g| g.step())
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn mid_weights(&self) -> &[f64] {
        &self.mid_weights
    }

    pub fn log_mid_weights(&self) -> &[f64] {
        &self.log_mid_weights
    }

    /// The potential with its normalization constant resolved on this grid.
    pub fn potential(&self) -> Option<&PotentialSpec> {
        self.potential.as_ref()
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Node indices inside the cell around a singular point of `V''`.
    pub fn skipped_nodes(&self) -> &[usize] {
        &self.skipped
    }

    pub fn is_skipped(&self, i: usize) -> bool {
        self.skipped.binary_search(&i).is_ok()
    }

    pub fn same_as(&self, other: &GridMeasure) -> bool {
        self.id == other.id
    }

    /// Sum of weights; equals one up to round-off.
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Discretizes `e^{-V}` with `n` nodes. With [`Domain::Auto`] the interval
/// grows outward from the minimizer of `V` until the density at both ends
/// drops below [`AUTO_DENSITY_RATIO`] times its maximum.
/// Grid settings shared by every computation of one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    pub domain: Domain,
    pub tail_tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 4001,
            domain: Domain::Auto,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

impl GridConfig {
    pub fn build(&self, potential: &PotentialSpec) -> Result<Arc<GridMeasure>> {
        build_measure_with_tol(potential, self.n, self.domain, self.tail_tol)
    }
}

pub fn build_measure(potential: &PotentialSpec, n: usize, domain: Domain) -> Result<Arc<GridMeasure>> {
    build_measure_with_tol(potential, n, domain, DEFAULT_TAIL_TOL)
}

pub fn build_measure_with_tol(
    potential: &PotentialSpec,
    n: usize,
    domain: Domain,
    tail_tol: f64,
) -> Result<Arc<GridMeasure>> {
    if n < MIN_NODES {
        return Err(Error::GridTooSmall { n, min: MIN_NODES });
    }
    let (a, b) = match domain {
        Domain::Interval(a, b) => (a, b),
        Domain::Auto => auto_domain(potential)?,
    };
    GridMeasure::on_grid(potential, Grid::new(a, b, n)?, tail_tol)
}

/// Interval outside of which `e^{-V}` is below [`AUTO_DENSITY_RATIO`] of its peak.
pub fn auto_domain(potential: &PotentialSpec) -> Result<(f64, f64)> {
    let raw = potential.unnormalized();
    if let crate::potential::Family::Tabulated(t) = raw.family() {
        return Ok(t.spline.range());
    }
    let x0 = raw.minimizer();
    let v0 = raw.value(x0);
    let level = -AUTO_DENSITY_RATIO.ln();
    let excess = |x: f64| raw.value(x) - v0 - level;
    let mut ends = [0.0; 2];
    for (slot, dir) in ends.iter_mut().zip([-1.0, 1.0]) {
        let mut inner = x0;
        let mut step = 1.0;
        let mut outer = x0 + dir * step;
        let mut doublings = 0;
        while excess(outer) < 0.0 {
            inner = outer;
            step *= 2.0;
            outer = x0 + dir * step;
            doublings += 1;
            if doublings > 60 {
                return Err(Error::NonNormalizable {
                    side: if dir < 0.0 { "left" } else { "right" },
                    slope: raw.d1(outer),
                });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (inner + outer);
            if mid == inner || mid == outer {
                break;
            }
            if excess(mid) < 0.0 {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        *slot = outer;
    }
    Ok((ends[0], ends[1]))
}

/// Values on the nodes of one specific measure.
#[derive(Debug, Clone)]
pub struct GridFunction {
    measure: Arc<GridMeasure>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(measure: Arc<GridMeasure>, values: Vec<f64>) -> Result<Self> {
        if values.len() != measure.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                measure.len()
            )));
        }
        Ok(Self { measure, values })
    }

    pub fn from_fn(measure: &Arc<GridMeasure>, f: impl Fn(f64) -> f64) -> Self {
        let values = measure.nodes().iter().map(|x| f(*x)).collect();
        Self {
            measure: Arc::clone(measure),
            values,
        }
    }

    pub fn constant(measure: &Arc<GridMeasure>, c: f64) -> Self {
        Self::from_fn(measure, |_| c)
    }

    pub fn measure(&self) -> &Arc<GridMeasure> {
        &self.measure
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            measure: Arc::clone(&self.measure),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    /// Pointwise combination; both functions must live on the same measure.
    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.measure.same_as(&other.measure) {
            return Err(Error::MixedMeasure);
        }
        Ok(Self {
            measure: Arc::clone(&self.measure),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Same values re-bound to another measure with identical nodes.
    pub fn rebind(&self, measure: &Arc<GridMeasure>) -> Result<Self> {
        if measure.nodes() != self.measure.nodes() {
            return Err(Error::MixedMeasure);
        }
        Ok(Self {
            measure: Arc::clone(measure),
            values: self.values.clone(),
        })
    }

    /// `Σ wᵢ fᵢ`.
    pub fn integrate(&self) -> f64 {
        self.measure
            .weights()
            .iter()
            .zip(&self.values)
            .map(|(w, f)| w * f)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate()
    }

    /// `(Σ wᵢ |fᵢ|^q)^{1/q}`; `q = ∞` gives the grid maximum of `|f|`.
    pub fn lq_norm(&self, q: f64) -> Result<f64> {
        lq_norm(self.measure.weights(), &self.values, q)
    }

    /// Central differences inside, second-order one-sided at the two ends.
    pub fn derivative(&self) -> Result<Self> {
        let n = self.values.len();
        if n < 3 {
            return Err(Error::GridTooSmall { n, min: 3 });
        }
        let x = self.measure.nodes();
        let f = &self.values;
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (f[i + 1] - f[i - 1]) / (x[i + 1] - x[i - 1]);
        }
        let h0 = x[1] - x[0];
        d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h0);
        let h1 = x[n - 1] - x[n - 2];
        d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h1);
        Ok(Self {
            measure: Arc::clone(&self.measure),
            values: d,
        })
    }

    /// Difference quotients on the cells, `(f_{i+1} − f_i)/(x_{i+1} − x_i)`.
    pub fn cell_derivative(&self) -> Vec<f64> {
        let x = self.measure.nodes();
        self.values
            .windows(2)
            .zip(x.windows(2))
            .map(|(f, x)| (f[1] - f[0]) / (x[1] - x[0]))
            .collect()
    }

    /// Writes `x,value` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "value"])?;
        for (x, v) in self.measure.nodes().iter().zip(&self.values) {
            w.write_record([x.to_string(), v.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads `x,value` rows; the abscissae must equal the measure's nodes.
    pub fn load_csv(measure: &Arc<GridMeasure>, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::Reader::from_reader(file);
        let mut values = Vec::with_capacity(measure.len());
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("row {}: `{s}` is not a number", i + 2)))
            };
            if rec.len() != 2 {
                return Err(Error::InvalidInput(format!("row {} must have 2 columns", i + 2)));
            }
            let x = parse(&rec[0])?;
            if measure.nodes().get(i) != Some(&x) {
                return Err(Error::MixedMeasure);
            }
            values.push(parse(&rec[1])?);
        }
        Self::new(Arc::clone(measure), values)
    }
}

pub(crate) fn lq_norm(weights: &[f64], values: &[f64], q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::InvalidInput(format!("norm exponent must be >= 1, got {q}")));
    }
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if q.is_infinite() || max == 0.0 {
        return Ok(max);
    }
    // scale by the maximum so that large exponents cannot overflow
    let s: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (v.abs() / max).powf(q))
        .sum();
    Ok(max * s.powf(1.0 / q))
}
