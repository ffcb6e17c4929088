//! Chart-based manifolds, point sampling, and the built-in catalog.
//!
//! A manifold is presented purely through its charts: each chart owns an open
//! box of coordinates `t` and a parametrization that lands directly in the
//! ambient `R^m` (the chart map is the composition of the abstract chart
//! inverse with the map `f` into the ambient space). No abstract manifold
//! points exist; everything is a `(chart, t)` pair, and points are compared
//! across charts through their ambient images.

mod catalog;

pub use catalog::{builtin, f_builtin, f_names, manifold_names, CatalogEntry, FMapInfo};

use rand::Rng;
use serde::Serialize;

use crate::calculus::SmoothMap;
use crate::rng::{stream, tag};
use crate::{Error, Result};

/// Default interior shrink used when sampling: a fraction of each side length.
pub const DEFAULT_MARGIN: f64 = 1e-3;

/// An open axis-aligned box: one open interval per axis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpenBox {
    intervals: Vec<(f64, f64)>,
}

impl OpenBox {
    /// Each interval must have positive length. Infinite endpoints are allowed
    /// (chart domains additionally require bounded boxes).
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::Argument("a box needs at least one axis".into()));
        }
        for &(lo, hi) in &intervals {
            if !(lo < hi) {
                return Err(Error::Argument(format!(
                    "degenerate interval ({lo}, {hi}); need lo < hi"
                )));
            }
        }
        Ok(OpenBox { intervals })
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_bounded(&self) -> bool {
        self.intervals.iter().all(|&(lo, hi)| lo.is_finite() && hi.is_finite())
    }

    /// Strict containment (the box is open).
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.intervals).all(|(&v, &(lo, hi))| lo < v && v < hi)
    }

    /// Per-axis bounds after shrinking by `margin` of each side length.
    pub fn shrunk(&self, margin: f64) -> Vec<(f64, f64)> {
        self.intervals
            .iter()
            .map(|&(lo, hi)| {
                let inset = margin * (hi - lo);
                (lo + inset, hi - inset)
            })
            .collect()
    }

    /// Uniform sample strictly inside the margin-shrunk box.
    pub fn sample<R: Rng>(&self, margin: f64, rng: &mut R) -> Vec<f64> {
        self.shrunk(margin)
            .iter()
            .map(|&(lo, hi)| {
                // random() yields [0, 1); reject 0 so the point is strictly interior.
                let u = loop {
                    let u: f64 = rng.random();
                    if u > 0.0 {
                        break u;
                    }
                };
                lo + u * (hi - lo)
            })
            .collect()
    }
}

/// One coordinate chart: an open box of coordinates plus the parametrization
/// into the ambient space.
#[derive(Clone, Debug)]
pub struct Chart {
    chart_id: String,
    domain: OpenBox,
    param: SmoothMap,
    margin: f64,
}

impl Chart {
    pub fn new(chart_id: impl Into<String>, domain: OpenBox, param: SmoothMap) -> Result<Self> {
        if !domain.is_bounded() {
            return Err(Error::Argument("chart domains must be bounded boxes".into()));
        }
        if param.domain_dim() != domain.dim() {
            return Err(Error::Shape(format!(
                "chart box has dimension {} but the parametrization expects {}",
                domain.dim(),
                param.domain_dim()
            )));
        }
        let param = param.with_domain(vec![domain.clone()])?;
        Ok(Chart { chart_id: chart_id.into(), domain, param, margin: DEFAULT_MARGIN })
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        if !(margin > 0.0 && margin < 0.5) {
            return Err(Error::Argument(format!("margin {margin} must lie in (0, 0.5)")));
        }
        self.margin = margin;
        Ok(self)
    }

    pub fn chart_id(&self) -> &str {
        &self.chart_id
    }

    pub fn domain(&self) -> &OpenBox {
        &self.domain
    }

    /// The chart-local map into the ambient space, domain-restricted to the box.
    pub fn param(&self) -> &SmoothMap {
        &self.param
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    /// Ambient image of the chart point `t`.
    pub fn ambient(&self, t: &[f64]) -> Result<Vec<f64>> {
        self.param.value(t)
    }

    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.domain.sample(self.margin, rng)
    }
}

/// A manifold of dimension `dim_n` presented by charts into `R^ambient_dim`.
///
/// Charts are not glued; cross-chart identity of points is decided through
/// ambient images where the parametrization is injective. Each chart belongs
/// to a named connected component (all zero by default), which lets disjoint
/// unions state that charts of different components never share points.
#[derive(Clone, Debug)]
pub struct ChartedManifold {
    name: String,
    dim_n: usize,
    ambient_dim: usize,
    charts: Vec<Chart>,
    components: Vec<usize>,
    compact: bool,
}

impl ChartedManifold {
    pub fn new(
        name: impl Into<String>,
        dim_n: usize,
        ambient_dim: usize,
        charts: Vec<Chart>,
        compact: bool,
    ) -> Result<Self> {
        if dim_n == 0 {
            return Err(Error::Argument("manifold dimension must be positive".into()));
        }
        if charts.is_empty() {
            return Err(Error::Argument("a manifold needs at least one chart".into()));
        }
        for c in &charts {
            if c.domain.dim() != dim_n {
                return Err(Error::Shape(format!(
                    "chart `{}` has dimension {}, manifold has dimension {dim_n}",
                    c.chart_id,
                    c.domain.dim()
                )));
            }
            if c.param.codomain_dim() != ambient_dim {
                return Err(Error::Shape(format!(
                    "chart `{}` maps into R^{}, expected R^{ambient_dim}",
                    c.chart_id,
                    c.param.codomain_dim()
                )));
            }
        }
        let components = vec![0; charts.len()];
        Ok(ChartedManifold { name: name.into(), dim_n, ambient_dim, charts, components, compact })
    }

    /// Assigns a connected-component id to each chart.
    pub fn with_components(mut self, components: Vec<usize>) -> Result<Self> {
        if components.len() != self.charts.len() {
            return Err(Error::Shape(format!(
                "{} component ids for {} charts",
                components.len(),
                self.charts.len()
            )));
        }
        self.components = components;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Component id of a chart.
    pub fn component(&self, chart_index: usize) -> usize {
        self.components[chart_index]
    }

    pub fn dim_n(&self) -> usize {
        self.dim_n
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn compact(&self) -> bool {
        self.compact
    }

    pub fn chart(&self, index: usize) -> &Chart {
        &self.charts[index]
    }

    /// Ambient image of a sampled point.
    pub fn ambient(&self, p: &ManifoldPoint) -> Result<Vec<f64>> {
        self.charts[p.chart].ambient(&p.t)
    }
}

/// A point on a charted manifold: chart index plus chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPoint {
    pub chart: usize,
    pub t: Vec<f64>,
}

/// Draws `count` points, charts assigned round-robin, coordinates uniform in
/// each chart's margin-shrunk box. A pure function of `(man, count, seed)`;
/// point `k` depends only on its own index.
pub fn sample_points(man: &ChartedManifold, count: usize, seed: u64) -> Vec<ManifoldPoint> {
    let n_charts = man.charts.len();
    (0..count)
        .map(|k| {
            let chart = k % n_charts;
            let mut rng = stream(seed, &[tag::POINTS, k as u64]);
            ManifoldPoint { chart, t: man.charts[chart].sample_point(&mut rng) }
        })
        .collect()
}
