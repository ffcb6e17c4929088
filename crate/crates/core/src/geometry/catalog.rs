//! Built-in test manifolds and maps.
//!
//! Every entry presents the manifold through parametrizations straight into
//! the ambient space, with `order_r = 2`. The boolean flags record documented
//! structure (immersion / injection) that verifiers may assume; `known_sf` is
//! the spanning order of the ambient image where it is known exactly.

use std::f64::consts::PI;

use crate::calculus::{Real, RealFn, SmoothMap};
use crate::{Error, Result};

use super::{Chart, ChartedManifold, OpenBox};

/// A catalog manifold together with the documented properties of its
/// parametrization `f`.
#[derive(Clone, Debug)]
pub struct CatalogEntry {
    pub manifold: ChartedManifold,
    pub immersion: bool,
    pub injective: bool,
    pub known_sf: Option<usize>,
    pub description: &'static str,
}

const MANIFOLD_NAMES: &[&str] = &[
    "circle_in_R2",
    "circle_in_R3",
    "sphere2_in_R3",
    "torus_in_R3",
    "moment_curve_in_R3",
    "interval_in_R1",
    "figure_eight_immersion_R2",
];

/// Stable names accepted by [`builtin`] and the CLI.
pub fn manifold_names() -> &'static [&'static str] {
    MANIFOLD_NAMES
}

fn unknown(name: &str, valid: &[&str]) -> Error {
    Error::Catalog { name: name.to_string(), valid: valid.join(", ") }
}

// -- chart parametrizations -------------------------------------------------

/// Inverse stereographic parametrization of the unit circle, zero-padded into
/// `R^ambient`: t -> (2t, sign (t^2 - 1)) / (1 + t^2).
struct StereoCircle {
    sign: f64,
    ambient: usize,
}

impl RealFn for StereoCircle {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        let t = x[0];
        let d = t * t + 1.0;
        let mut out = vec![t * 2.0 / d, (t * t - 1.0) / d * self.sign];
        out.resize(self.ambient, S::constant(0.0));
        out
    }
}

/// Inverse stereographic parametrization of the unit 2-sphere:
/// (u, v) -> (2u, 2v, sign (u^2 + v^2 - 1)) / (1 + u^2 + v^2).
struct StereoSphere {
    sign: f64,
}

impl RealFn for StereoSphere {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        let (u, v) = (x[0], x[1]);
        let d = u * u + v * v + 1.0;
        vec![u * 2.0 / d, v * 2.0 / d, (u * u + v * v - 1.0) / d * self.sign]
    }
}

/// Torus of revolution: (theta, phi) ->
/// ((R + r cos theta) cos phi, (R + r cos theta) sin phi, r sin theta).
struct TorusParam {
    major: f64,
    minor: f64,
}

impl RealFn for TorusParam {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        let (theta, phi) = (x[0], x[1]);
        let ring = theta.cos() * self.minor + self.major;
        vec![ring * phi.cos(), ring * phi.sin(), theta.sin() * self.minor]
    }
}

/// Moment curve t -> (t, t^2, t^3).
struct MomentCurve;

impl RealFn for MomentCurve {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        let t = x[0];
        vec![t, t * t, t * t * t]
    }
}

/// Inclusion of an interval into the line.
struct Interval1;

impl RealFn for Interval1 {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        vec![x[0]]
    }
}

/// Figure-eight immersion of the circle: theta -> (sin theta, sin theta cos theta),
/// a single transverse double point at the origin.
struct FigureEight;

impl RealFn for FigureEight {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        let theta = x[0];
        let s = theta.sin();
        vec![s, s * theta.cos()]
    }
}

// -- assembly ----------------------------------------------------------------

fn stereo_circle_charts(ambient: usize) -> Result<Vec<Chart>> {
    let box1 = OpenBox::new(vec![(-2.0, 2.0)])?;
    Ok(vec![
        Chart::new(
            "stereo_n",
            box1.clone(),
            SmoothMap::from_fn(1, ambient, 2, StereoCircle { sign: 1.0, ambient })?,
        )?,
        Chart::new(
            "stereo_s",
            box1,
            SmoothMap::from_fn(1, ambient, 2, StereoCircle { sign: -1.0, ambient })?,
        )?,
    ])
}

fn angle_boxes() -> Result<[OpenBox; 2]> {
    Ok([OpenBox::new(vec![(0.0, 2.0 * PI)])?, OpenBox::new(vec![(-PI, PI)])?])
}

/// Returns the named catalog entry: the manifold with `f` baked into its chart
/// parametrizations, plus documented structure flags.
pub fn builtin(name: &str) -> Result<CatalogEntry> {
    match name {
        "circle_in_R2" => Ok(CatalogEntry {
            manifold: ChartedManifold::new("circle_in_R2", 1, 2, stereo_circle_charts(2)?, true)?,
            immersion: true,
            injective: true,
            known_sf: Some(3),
            description: "unit circle included in the plane, two stereographic charts",
        }),
        "circle_in_R3" => Ok(CatalogEntry {
            manifold: ChartedManifold::new("circle_in_R3", 1, 3, stereo_circle_charts(3)?, true)?,
            immersion: true,
            injective: true,
            known_sf: Some(3),
            description: "unit circle in the z = 0 plane of R^3, two stereographic charts",
        }),
        "sphere2_in_R3" => {
            let b = OpenBox::new(vec![(-2.0, 2.0), (-2.0, 2.0)])?;
            let charts = vec![
                Chart::new(
                    "stereo_n",
                    b.clone(),
                    SmoothMap::from_fn(2, 3, 2, StereoSphere { sign: 1.0 })?,
                )?,
                Chart::new("stereo_s", b, SmoothMap::from_fn(2, 3, 2, StereoSphere { sign: -1.0 })?)?,
            ];
            Ok(CatalogEntry {
                manifold: ChartedManifold::new("sphere2_in_R3", 2, 3, charts, true)?,
                immersion: true,
                injective: true,
                known_sf: Some(3),
                description: "unit 2-sphere included in R^3, two stereographic charts",
            })
        }
        "torus_in_R3" => {
            let [a, b] = angle_boxes()?;
            let mut charts = Vec::new();
            for (i, tb) in [a.clone(), b.clone()].into_iter().enumerate() {
                for (j, pb) in [a.clone(), b.clone()].into_iter().enumerate() {
                    let dom = OpenBox::new(vec![
                        tb.intervals()[0],
                        pb.intervals()[0],
                    ])?;
                    charts.push(Chart::new(
                        format!("angles_{i}{j}"),
                        dom,
                        SmoothMap::from_fn(2, 3, 2, TorusParam { major: 2.0, minor: 1.0 })?,
                    )?);
                }
            }
            Ok(CatalogEntry {
                manifold: ChartedManifold::new("torus_in_R3", 2, 3, charts, true)?,
                immersion: true,
                injective: true,
                // Planar sections through the tube contain collinear triples, so the
                // true spanning order is 2; sampling will not witness that.
                known_sf: Some(2),
                description: "torus of revolution (R = 2, r = 1), four angle charts",
            })
        }
        "moment_curve_in_R3" => {
            let dom = OpenBox::new(vec![(0.0, 1.0)])?;
            let charts = vec![Chart::new("t", dom, SmoothMap::from_fn(1, 3, 2, MomentCurve)?)?];
            Ok(CatalogEntry {
                manifold: ChartedManifold::new("moment_curve_in_R3", 1, 3, charts, false)?,
                immersion: true,
                injective: true,
                known_sf: Some(4),
                description: "moment curve t -> (t, t^2, t^3) on (0, 1)",
            })
        }
        "interval_in_R1" => {
            let dom = OpenBox::new(vec![(0.0, 1.0)])?;
            let charts = vec![Chart::new("t", dom, SmoothMap::from_fn(1, 1, 2, Interval1)?)?];
            Ok(CatalogEntry {
                manifold: ChartedManifold::new("interval_in_R1", 1, 1, charts, false)?,
                immersion: true,
                injective: true,
                known_sf: Some(2),
                description: "open interval (0, 1) included in the line",
            })
        }
        "figure_eight_immersion_R2" => {
            // Shifted arcs so the double point's two preimages (theta = 0 and
            // theta = pi) both sit inside each single chart.
            let a = OpenBox::new(vec![(-0.5 * PI, 1.5 * PI)])?;
            let b = OpenBox::new(vec![(0.5 * PI, 2.5 * PI)])?;
            let charts = vec![
                Chart::new("angle_0", a, SmoothMap::from_fn(1, 2, 2, FigureEight)?)?,
                Chart::new("angle_1", b, SmoothMap::from_fn(1, 2, 2, FigureEight)?)?,
            ];
            Ok(CatalogEntry {
                manifold: ChartedManifold::new("figure_eight_immersion_R2", 1, 2, charts, true)?,
                immersion: true,
                injective: false,
                known_sf: None,
                description: "figure-eight immersion theta -> (sin th, sin th cos th) of the circle",
            })
        }
        other => Err(unknown(other, MANIFOLD_NAMES)),
    }
}

// -- F catalog ----------------------------------------------------------------

/// Last coordinate, raised to `power`.
struct HeightPow {
    power: i32,
}

impl RealFn for HeightPow {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        vec![x[x.len() - 1].powi(self.power)]
    }
}

struct ConstantZero {
    codomain: usize,
}

impl RealFn for ConstantZero {
    fn eval<S: Real>(&self, _x: &[S]) -> Vec<S> {
        vec![S::constant(0.0); self.codomain]
    }
}

/// Squares the first two coordinates, zero elsewhere: (x0^2, x1^2, 0, ...).
struct CollapseXY {
    codomain: usize,
}

impl RealFn for CollapseXY {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        (0..self.codomain)
            .map(|i| if i < 2 && i < x.len() { x[i] * x[i] } else { S::constant(0.0) })
            .collect()
    }
}

/// Projection onto the first `codomain` coordinates.
struct ProjFirst {
    codomain: usize,
}

impl RealFn for ProjFirst {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        x[..self.codomain].to_vec()
    }
}

/// Descriptive record for the `catalog` listing.
#[derive(Clone, Debug, serde::Serialize)]
pub struct FMapInfo {
    pub name: &'static str,
    pub formula: &'static str,
    pub codomain: &'static str,
}

/// The built-in `F` maps.
pub fn f_names() -> Vec<FMapInfo> {
    vec![
        FMapInfo { name: "height", formula: "x -> x_m (last coordinate)", codomain: "l = 1" },
        FMapInfo { name: "height_cubed", formula: "x -> (x_m)^3", codomain: "l = 1" },
        FMapInfo { name: "constant", formula: "x -> 0", codomain: "any l" },
        FMapInfo {
            name: "collapse_xy",
            formula: "x -> (x_1^2, x_2^2, 0, ...)",
            codomain: "any l; needs m >= 2",
        },
        FMapInfo {
            name: "proj_k",
            formula: "x -> (x_1, ..., x_k)",
            codomain: "l = k <= m",
        },
    ]
}

/// Builds the named `F : R^m -> R^l` with `order_r = 2`.
pub fn f_builtin(name: &str, m: usize, l: usize) -> Result<SmoothMap> {
    let check_l = |expected: usize| -> Result<()> {
        if l != expected {
            return Err(Error::Argument(format!(
                "F `{name}` has codomain dimension {expected}, got l = {l}"
            )));
        }
        Ok(())
    };
    match name {
        "height" => {
            check_l(1)?;
            SmoothMap::from_fn(m, 1, 2, HeightPow { power: 1 })
        }
        "height_cubed" => {
            check_l(1)?;
            SmoothMap::from_fn(m, 1, 2, HeightPow { power: 3 })
        }
        "constant" => SmoothMap::from_fn(m, l, 2, ConstantZero { codomain: l }),
        "collapse_xy" => {
            if m < 2 {
                return Err(Error::Argument(format!(
                    "F `collapse_xy` needs a domain of dimension at least 2, got m = {m}"
                )));
            }
            SmoothMap::from_fn(m, l, 2, CollapseXY { codomain: l })
        }
        _ => {
            if let Some(k) = name.strip_prefix("proj_").and_then(|s| s.parse::<usize>().ok()) {
                if k == 0 || k > m {
                    return Err(Error::Argument(format!(
                        "projection onto {k} coordinates from R^{m} is not defined"
                    )));
                }
                check_l(k)?;
                return SmoothMap::from_fn(m, k, 2, ProjFirst { codomain: k });
            }
            Err(unknown(name, &["height", "height_cubed", "constant", "collapse_xy", "proj_k"]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{numerical_rank, RankPolicy};
    use crate::geometry::sample_points;

    #[test]
    fn unknown_names_report_the_valid_set() {
        match builtin("klein_bottle") {
            Err(Error::Catalog { name, valid }) => {
                assert_eq!(name, "klein_bottle");
                assert!(valid.contains("circle_in_R2"));
            }
            other => panic!("expected catalog error, got {other:?}"),
        }
    }

    #[test]
    fn circle_charts_land_on_the_unit_circle() {
        let entry = builtin("circle_in_R2").unwrap();
        for p in sample_points(&entry.manifold, 64, 11) {
            let x = entry.manifold.ambient(&p).unwrap();
            let r2: f64 = x.iter().map(|v| v * v).sum();
            assert!((r2 - 1.0).abs() < 1e-12, "|x|^2 = {r2}");
        }
    }

    #[test]
    fn moment_curve_derivative_never_vanishes() {
        // (1, 2t, 3t^2) has a constant first component.
        let entry = builtin("moment_curve_in_R3").unwrap();
        for p in sample_points(&entry.manifold, 100, 5) {
            let j = entry.manifold.chart(p.chart).param().jacobian(&p.t).unwrap();
            assert_eq!(j[(0, 0)], 1.0);
            assert!(j.norm() >= 1.0);
        }
    }

    #[test]
    fn catalog_immersions_have_full_rank_jacobians() {
        for name in manifold_names() {
            let entry = builtin(name).unwrap();
            if !entry.immersion {
                continue;
            }
            let n = entry.manifold.dim_n();
            for p in sample_points(&entry.manifold, 1000, 23) {
                let j = entry.manifold.chart(p.chart).param().jacobian(&p.t).unwrap();
                let rank = numerical_rank(&j, RankPolicy::default()).rank;
                assert_eq!(rank, n, "rank drop on {name} at {:?}", p.t);
            }
        }
    }

    #[test]
    fn catalog_injections_separate_sampled_pairs() {
        for name in manifold_names() {
            let entry = builtin(name).unwrap();
            if !entry.injective {
                continue;
            }
            let pts = sample_points(&entry.manifold, 2000, 41);
            let mut min_dist = f64::INFINITY;
            for pair in pts.chunks_exact(2) {
                let a = entry.manifold.ambient(&pair[0]).unwrap();
                let b = entry.manifold.ambient(&pair[1]).unwrap();
                if pair[0] == pair[1] {
                    continue;
                }
                let d: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
                min_dist = min_dist.min(d.sqrt());
            }
            assert!(min_dist > 0.0, "image collision on {name}");
        }
    }

    #[test]
    fn f_catalog_shapes_and_errors() {
        assert!(f_builtin("height", 2, 1).is_ok());
        assert!(f_builtin("height", 2, 2).is_err());
        assert!(f_builtin("proj_2", 3, 2).is_ok());
        assert!(f_builtin("proj_4", 3, 4).is_err());
        assert!(f_builtin("collapse_xy", 1, 1).is_err());
        assert!(matches!(f_builtin("nope", 2, 1), Err(Error::Catalog { .. })));
    }

    #[test]
    fn figure_eight_has_the_double_point_inside_one_chart() {
        let entry = builtin("figure_eight_immersion_R2").unwrap();
        // Both preimages theta = 0 and theta = pi live in chart 0 and map to the origin.
        let a = entry.manifold.chart(0).ambient(&[0.0]).unwrap();
        let b = entry.manifold.chart(0).ambient(&[std::f64::consts::PI]).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1e-15));
        assert!(b.iter().all(|v| v.abs() < 1e-12));
    }
}
