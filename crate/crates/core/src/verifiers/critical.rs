//! Critical point location and Morse verification.
//!
//! Newton's method on the gradient of the chart-local composite, seeded from a
//! lattice plus random interior points. Iterations continue past the
//! acceptance tolerance while they still improve, because classifying a
//! degenerate critical point needs the best location double precision can
//! reach: at a cubic-type degeneracy the gradient is quadratic in the offset,
//! so the best reachable offset is about `sqrt(eps)` and the Hessian there is
//! of that order — far below any honest nondegeneracy threshold, but only if
//! the polish actually gets there.

use nalgebra::DVector;
use serde::Serialize;

use crate::calculus::SmoothMap;
use crate::geometry::{Chart, ChartedManifold};
use crate::perturbation::compose_chartwise;
use crate::rng::{stream, subseed, tag};
use crate::{Error, Result};

use super::{point_ref, Finding, Property, SampleBudget, Tolerances, Verdict};

/// A located critical point of a chart-local scalar composite.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub chart_id: String,
    pub t: Vec<f64>,
    pub grad_norm: f64,
    pub hessian_det: f64,
    pub min_abs_eig: f64,
    pub hess_norm: f64,
    pub nondegenerate: bool,
    /// Count of negative Hessian eigenvalues.
    pub index: usize,
}

/// Newton-polishes from `t0`; returns the best point seen and its gradient norm.
fn newton_polish(
    g: &SmoothMap,
    t0: Vec<f64>,
    chart: &Chart,
    tol: &Tolerances,
) -> Option<(Vec<f64>, f64)> {
    let mut t = t0;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..tol.newton_max_iter {
        let Ok((val, jac, hess)) = g.jet2(&t) else { break };
        let grad = jac.row(0).transpose();
        let gnorm = grad.norm();
        if !gnorm.is_finite() {
            break;
        }
        if best.as_ref().is_none_or(|(_, b)| gnorm < *b) {
            best = Some((t.clone(), gnorm));
        }
        // Floating-point floor for this value scale; no further progress possible.
        if gnorm <= f64::EPSILON * (1.0 + val[0].abs()) {
            break;
        }
        let Some(step) = hess[0].clone().lu().solve(&(-&grad)) else { break };
        let next: Vec<f64> = t.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        if !chart.domain().contains(&next) {
            break;
        }
        let tnorm = DVector::from_column_slice(&t).norm();
        t = next;
        if step.norm() <= 1e-16 * (1.0 + tnorm) {
            // Stagnant; evaluate the final point once more, then stop.
            if let Ok((_, jac, _)) = g.jet2(&t) {
                let gn = jac.row(0).transpose().norm();
                if best.as_ref().is_none_or(|(_, b)| gn < *b) {
                    best = Some((t.clone(), gn));
                }
            }
            break;
        }
    }
    best
}

/// Classifies a candidate critical point of `g` (chart-local, scalar output):
/// gradient norm, Hessian determinant and spectrum, nondegeneracy at the
/// recorded thresholds. Public so witnesses can be re-audited in isolation.
pub fn classify_critical_point(
    g: &SmoothMap,
    chart_id: &str,
    t: &[f64],
    tol: &Tolerances,
) -> Result<CriticalPoint> {
    let (_, jac, hess) = g.jet2(t)?;
    let grad_norm = jac.row(0).transpose().norm();
    let h = &hess[0];
    let hess_norm = h.norm();
    let det = h.determinant();
    let eigs = h.clone().symmetric_eigen().eigenvalues;
    let min_abs_eig = eigs.iter().fold(f64::INFINITY, |m, &e| m.min(e.abs()));
    let threshold = tol.hess_threshold(hess_norm);
    let nondegenerate = det.abs() > threshold && min_abs_eig > threshold;
    let index = eigs.iter().filter(|&&e| e < 0.0).count();
    Ok(CriticalPoint {
        chart_id: chart_id.to_string(),
        t: t.to_vec(),
        grad_norm,
        hessian_det: det,
        min_abs_eig,
        hess_norm,
        nondegenerate,
        index,
    })
}

/// Finds critical points of the chart-local scalar map `g` on `chart`: Newton
/// from a `grid_density`-per-axis lattice plus `grid_density` random seeds,
/// accepting points with gradient norm at most `newton_tol`, deduplicated
/// within `dedup_radius` in chart coordinates.
pub fn find_critical_points(
    g: &SmoothMap,
    chart: &Chart,
    grid_density: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Vec<CriticalPoint>> {
    if g.codomain_dim() != 1 {
        return Err(Error::Argument(format!(
            "critical point search needs a scalar map, got codomain dimension {}",
            g.codomain_dim()
        )));
    }
    if g.order_r() < 2 {
        return Err(Error::Regularity { order_r: g.order_r(), requested: 2 });
    }
    if grid_density == 0 {
        return Err(Error::Argument("grid density must be positive".into()));
    }
    let n = chart.domain().dim();
    let shrunk = chart.domain().shrunk(chart.margin());

    let mut seeds: Vec<Vec<f64>> = Vec::new();
    let mut index = vec![0usize; n];
    'lattice: loop {
        seeds.push(
            index
                .iter()
                .zip(&shrunk)
                .map(|(&i, &(lo, hi))| lo + (i as f64 + 0.5) * (hi - lo) / grid_density as f64)
                .collect(),
        );
        for axis in 0..n {
            index[axis] += 1;
            if index[axis] < grid_density {
                continue 'lattice;
            }
            index[axis] = 0;
        }
        break;
    }
    for j in 0..grid_density {
        let mut rng = stream(seed, &[tag::NEWTON, j as u64]);
        seeds.push(chart.sample_point(&mut rng));
    }

    let mut found: Vec<(Vec<f64>, f64)> = Vec::new();
    for t0 in seeds {
        let Some((t, gnorm)) = newton_polish(g, t0, chart, tol) else { continue };
        if gnorm > tol.newton_tol {
            continue;
        }
        match found
            .iter_mut()
            .find(|(existing, _)| super::dist_sq(existing, &t).sqrt() < tol.dedup_radius)
        {
            Some(slot) => {
                if gnorm < slot.1 {
                    *slot = (t, gnorm);
                }
            }
            None => found.push((t, gnorm)),
        }
    }

    found
        .into_iter()
        .map(|(t, _)| classify_critical_point(g, chart.chart_id(), &t, tol))
        .collect()
}

/// Morse check for a scalar map `F_a : R^m -> R`: every critical point of the
/// composite on every chart must be nondegenerate.
pub fn verify_morse(
    f_map: &SmoothMap,
    man: &ChartedManifold,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Verdict> {
    if f_map.codomain_dim() != 1 {
        return Err(Error::Predicate(format!(
            "Morse verification needs a scalar map, got codomain dimension {}",
            f_map.codomain_dim()
        )));
    }
    let grid_density = budget.max(4);
    let mut kept: Vec<(usize, CriticalPoint, Vec<f64>)> = Vec::new();
    for (ci, chart) in man.charts().iter().enumerate() {
        let g = compose_chartwise(f_map, chart)?;
        for cp in find_critical_points(&g, chart, grid_density, subseed(seed, &[ci as u64]), tol)?
        {
            let ambient = chart.ambient(&cp.t)?;
            // Cross-chart dedup by ambient image; keep the better-converged copy.
            match kept.iter_mut().find(|(_, _, existing)| {
                super::dist_sq(existing, &ambient).sqrt() < tol.dedup_radius
            }) {
                Some(slot) => {
                    if cp.grad_norm < slot.1.grad_norm {
                        *slot = (ci, cp, ambient);
                    }
                }
                None => kept.push((ci, cp, ambient)),
            }
        }
    }

    let pass = kept.iter().all(|(_, cp, _)| cp.nondegenerate);
    let key_metric = kept
        .iter()
        .map(|(_, cp, _)| cp.min_abs_eig / (1.0 + cp.hess_norm))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    let evidence = kept
        .iter()
        .map(|(ci, cp, _)| Finding::CriticalPoint {
            point: point_ref(man, *ci, &cp.t),
            grad_norm: cp.grad_norm,
            hessian_det: cp.hessian_det,
            min_abs_eig: cp.min_abs_eig,
            hess_norm: cp.hess_norm,
            nondegenerate: cp.nondegenerate,
            index: cp.index,
        })
        .collect();

    Ok(Verdict {
        property: Property::Morse,
        pass,
        evidence,
        tolerances: tol.clone(),
        sample_budget: SampleBudget {
            samples: 0,
            multistarts: man.charts().len()
                * (grid_density.pow(man.dim_n() as u32) + grid_density),
            grid_density,
            descent_iters: tol.newton_max_iter,
        },
        seed,
        key_metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{builtin, f_builtin};
    use crate::perturbation::{perturb, sample_perturbation, LinearPerturbation};

    /// Height function on the circle: two critical points (poles), indices 0 and 1.
    #[test]
    fn height_on_circle_is_morse() {
        let entry = builtin("circle_in_R2").unwrap();
        let f = f_builtin("height", 2, 1).unwrap();
        let v = verify_morse(&f, &entry.manifold, 16, 3, &Tolerances::default()).unwrap();
        assert!(v.pass);
        assert_eq!(v.evidence.len(), 2);
        let mut indices: Vec<usize> = v
            .evidence
            .iter()
            .map(|f| match f {
                Finding::CriticalPoint { index, .. } => *index,
                other => panic!("unexpected finding {other:?}"),
            })
            .collect();
        indices.sort_unstable();
        assert_eq!(indices, vec![0, 1]);
    }

    /// The cubed height collapses to zero second derivative at the equator
    /// points (±1, 0): degenerate witnesses, Morse fails.
    #[test]
    fn cubed_height_on_circle_fails_at_alpha_zero() {
        let entry = builtin("circle_in_R2").unwrap();
        let f = f_builtin("height_cubed", 2, 1).unwrap();
        let f0 = perturb(&f, &LinearPerturbation::zero(1, 2)).unwrap();
        let v = verify_morse(&f0, &entry.manifold, 24, 3, &Tolerances::default()).unwrap();
        assert!(!v.pass);
        let degenerate = v.counterexamples();
        assert!(degenerate >= 2, "found {degenerate} degenerate points");
        // The degenerate points sit where the height vanishes: ambient (±1, 0).
        for f in &v.evidence {
            if let Finding::CriticalPoint { point, nondegenerate: false, .. } = f {
                assert!(point.ambient[1].abs() < 1e-3, "ambient = {:?}", point.ambient);
            }
        }
    }

    /// A constant map has zero gradient everywhere and a zero Hessian: every
    /// located point is degenerate.
    #[test]
    fn constant_map_is_never_morse() {
        let entry = builtin("interval_in_R1").unwrap();
        let f = f_builtin("constant", 1, 1).unwrap();
        let v = verify_morse(&f, &entry.manifold, 8, 0, &Tolerances::default()).unwrap();
        assert!(!v.pass);
        assert!(v.counterexamples() >= 1);
    }

    #[test]
    fn random_perturbations_restore_morse() {
        let entry = builtin("circle_in_R2").unwrap();
        let f = f_builtin("height_cubed", 2, 1).unwrap();
        let mut passes = 0;
        for trial in 0..20 {
            let alpha = sample_perturbation(2, 1, 1.0, 99, trial).unwrap();
            let fa = perturb(&f, &alpha).unwrap();
            let v = verify_morse(&fa, &entry.manifold, 16, trial, &Tolerances::default()).unwrap();
            if v.pass {
                passes += 1;
            }
        }
        assert!(passes >= 19, "only {passes}/20 passed");
    }

    #[test]
    fn morse_rejects_vector_valued_maps() {
        let entry = builtin("circle_in_R2").unwrap();
        let f = f_builtin("proj_2", 2, 2).unwrap();
        assert!(matches!(
            verify_morse(&f, &entry.manifold, 8, 0, &Tolerances::default()),
            Err(Error::Predicate(_))
        ));
    }
}
