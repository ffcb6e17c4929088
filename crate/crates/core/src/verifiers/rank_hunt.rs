//! Rank-drop hunting: immersion and corank-bound checks.
//!
//! Rank failures of `J(g)` live on measure-zero sets that pure sampling
//! misses, so after sampling the hunt descends on singular-value objectives:
//! the smallest singular value for the immersion check, the sum of the `k`
//! smallest for a corank-`k` hunt. The descent gradient comes from the exact
//! perturbation formula `d sigma = u^T dJ v` with `dJ` assembled from the
//! composite's Hessians.

use crate::calculus::{rank_with_floor, SmoothMap};
use crate::geometry::ChartedManifold;
use crate::rng::{stream, subseed, tag};
use crate::strata::k0_max_corank;
use crate::Result;

use super::descent::descend;
use super::{
    chart_composites, point_ref, Finding, Property, SampleBudget, Tolerances, Verdict,
};

/// Sum of the `k` smallest singular values of the composite's Jacobian at `t`,
/// with its gradient. `None` when the jet fails (outside domain).
fn sigma_objective(comp: &SmoothMap, t: &[f64], k: usize) -> Option<(f64, Vec<f64>)> {
    let (_, jac, hess) = comp.jet2(t).ok()?;
    let nu = jac.nrows().min(jac.ncols());
    debug_assert!(k >= 1 && k <= nu);
    let n = jac.ncols();
    let svd = jac.clone().svd(true, true);
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    for i in (nu - k)..nu {
        value += svd.singular_values[i];
        for (p, slot) in grad.iter_mut().enumerate() {
            let mut acc = 0.0;
            for r in 0..jac.nrows() {
                for c in 0..n {
                    acc += u[(r, i)] * hess[r][(c, p)] * vt[(i, c)];
                }
            }
            *slot += acc;
        }
    }
    Some((value, grad))
}

struct HuntOutcome {
    min_value: f64,
    min_chart: usize,
    min_t: Vec<f64>,
}

/// Samples `budget` points per chart, then descends from the `8n` most
/// suspicious ones. Returns the smallest objective seen and where.
fn hunt_rank_drops(
    comps: &[SmoothMap],
    man: &ChartedManifold,
    k: usize,
    budget: usize,
    seed: u64,
) -> Result<HuntOutcome> {
    let n = man.dim_n();
    let starts_per_chart = 8 * n;
    let mut best = HuntOutcome { min_value: f64::INFINITY, min_chart: 0, min_t: Vec::new() };

    for (ci, comp) in comps.iter().enumerate() {
        let chart = man.chart(ci);
        let mut scored: Vec<(f64, Vec<f64>)> = Vec::new();
        for j in 0..budget {
            let mut rng = stream(seed, &[tag::HUNT, ci as u64, j as u64]);
            let t = chart.sample_point(&mut rng);
            if let Some((v, _)) = sigma_objective(comp, &t, k) {
                if v < best.min_value {
                    best = HuntOutcome { min_value: v, min_chart: ci, min_t: t.clone() };
                }
                scored.push((v, t));
            }
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        scored.truncate(starts_per_chart);

        let bounds = chart.domain().intervals().to_vec();
        for (_, t0) in scored {
            let mut eval = |x: &[f64]| sigma_objective(comp, x, k);
            if let Some(out) = descend(&t0, &bounds, 120, &mut eval) {
                if out.value < best.min_value {
                    best = HuntOutcome { min_value: out.value, min_chart: ci, min_t: out.x };
                }
            }
        }
    }
    Ok(best)
}

/// Immersion check: `rank J(g) = n` everywhere. Samples, then hunts the
/// smallest singular value; passes when no rank drop is found and the hunted
/// minimum stays above `sigma_floor`.
pub fn verify_immersion(
    f_map: &SmoothMap,
    man: &ChartedManifold,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Verdict> {
    let n = man.dim_n();
    let l = f_map.codomain_dim();
    let comps = chart_composites(f_map, man)?;
    let mut evidence = Vec::new();
    let mut pass = true;
    if l < 2 * n {
        evidence.push(Finding::RegimeWarning {
            message: format!("immersion genericity needs l >= 2n, got l = {l}, n = {n}"),
        });
    }

    // Rank at sampled points.
    let mut witnesses = 0usize;
    let mut min_sigma = f64::INFINITY;
    for (ci, comp) in comps.iter().enumerate() {
        let chart = man.chart(ci);
        for j in 0..budget {
            let mut rng = stream(seed, &[tag::HUNT, ci as u64, j as u64]);
            let t = chart.sample_point(&mut rng);
            let jac = comp.jacobian(&t)?;
            let report = rank_with_floor(&jac, tol.rank_policy(), tol.sigma_floor);
            min_sigma = min_sigma.min(report.singular_values[l.min(n) - 1]);
            if report.rank < n {
                pass = false;
                if witnesses < 3 {
                    evidence.push(Finding::RankDrop {
                        point: point_ref(man, ci, &t),
                        singular_values: report.singular_values.clone(),
                        rank: report.rank,
                        corank: report.corank,
                    });
                }
                witnesses += 1;
            }
        }
    }

    // Hunt between samples (needs second derivatives for the sigma gradient).
    if l >= n && f_map.order_r() >= 2 {
        let hunt = hunt_rank_drops(&comps, man, 1, budget, subseed(seed, &[1]), tol)?;
        min_sigma = min_sigma.min(hunt.min_value);
        if hunt.min_value <= tol.sigma_floor {
            pass = false;
            let jac = comps[hunt.min_chart].jacobian(&hunt.min_t)?;
            let report = rank_with_floor(&jac, tol.rank_policy(), tol.sigma_floor);
            evidence.push(Finding::RankDrop {
                point: point_ref(man, hunt.min_chart, &hunt.min_t),
                singular_values: report.singular_values,
                rank: report.rank,
                corank: report.corank,
            });
        } else if pass {
            evidence.push(Finding::SigmaMinimum {
                point: point_ref(man, hunt.min_chart, &hunt.min_t),
                corank_hunted: 1,
                value: hunt.min_value,
            });
        }
    } else if l < n {
        // The Jacobian cannot reach rank n at all.
        pass = false;
        if witnesses == 0 {
            evidence.push(Finding::Note {
                message: format!("codomain dimension {l} < n = {n}: no immersion possible"),
            });
        }
    }

    Ok(Verdict {
        property: Property::Immersion,
        pass,
        evidence,
        tolerances: tol.clone(),
        sample_budget: SampleBudget {
            samples: budget * man.charts().len(),
            multistarts: 8 * n * man.charts().len(),
            grid_density: 0,
            descent_iters: 120,
        },
        seed,
        key_metric: if min_sigma.is_finite() { Some(min_sigma) } else { None },
    })
}

/// Corank-bound check: no point may exceed the generic maximal corank `k0`.
/// For each `k` above `k0` the hunt minimizes the sum of the `k` smallest
/// singular values; a minimum at `sigma_floor` or below is a witness.
pub fn verify_corank_bound(
    f_map: &SmoothMap,
    man: &ChartedManifold,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Verdict> {
    let n = man.dim_n();
    let l = f_map.codomain_dim();
    let nu = n.min(l);
    let k0 = k0_max_corank(n, l);
    let comps = chart_composites(f_map, man)?;
    let mut evidence = Vec::new();
    let mut pass = true;
    let mut key_metric = None;

    if k0 >= nu {
        evidence.push(Finding::Note {
            message: format!(
                "every corank is at most min(n, l) = {nu} and k0 = {k0}; nothing to check"
            ),
        });
        return Ok(Verdict {
            property: Property::CorankBound,
            pass: true,
            evidence,
            tolerances: tol.clone(),
            sample_budget: SampleBudget::default(),
            seed,
            key_metric: None,
        });
    }

    // Sampled coranks cover all k > k0 at once.
    let mut witnesses = 0usize;
    for (ci, comp) in comps.iter().enumerate() {
        let chart = man.chart(ci);
        for j in 0..budget {
            let mut rng = stream(seed, &[tag::HUNT, ci as u64, j as u64]);
            let t = chart.sample_point(&mut rng);
            let jac = comp.jacobian(&t)?;
            let report = rank_with_floor(&jac, tol.rank_policy(), tol.sigma_floor);
            if report.corank > k0 {
                pass = false;
                if witnesses < 3 {
                    evidence.push(Finding::RankDrop {
                        point: point_ref(man, ci, &t),
                        singular_values: report.singular_values.clone(),
                        rank: report.rank,
                        corank: report.corank,
                    });
                }
                witnesses += 1;
            }
        }
    }

    if f_map.order_r() >= 2 {
        for k in (k0 + 1)..=nu {
            let hunt = hunt_rank_drops(&comps, man, k, budget, subseed(seed, &[k as u64]), tol)?;
            key_metric = Some(key_metric.map_or(hunt.min_value, |m: f64| m.min(hunt.min_value)));
            if hunt.min_value <= tol.sigma_floor {
                pass = false;
                let jac = comps[hunt.min_chart].jacobian(&hunt.min_t)?;
                let report = rank_with_floor(&jac, tol.rank_policy(), tol.sigma_floor);
                evidence.push(Finding::RankDrop {
                    point: point_ref(man, hunt.min_chart, &hunt.min_t),
                    singular_values: report.singular_values,
                    rank: report.rank,
                    corank: report.corank,
                });
            } else {
                evidence.push(Finding::SigmaMinimum {
                    point: point_ref(man, hunt.min_chart, &hunt.min_t),
                    corank_hunted: k,
                    value: hunt.min_value,
                });
            }
        }
    }

    Ok(Verdict {
        property: Property::CorankBound,
        pass,
        evidence,
        tolerances: tol.clone(),
        sample_budget: SampleBudget {
            samples: budget * man.charts().len(),
            multistarts: 8 * n * man.charts().len() * (nu - k0),
            grid_density: 0,
            descent_iters: 120,
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

    #[test]
    fn inclusion_composed_with_projection_is_an_immersion() {
        let entry = builtin("circle_in_R3").unwrap();
        let f = f_builtin("proj_3", 3, 3).unwrap();
        let v = verify_immersion(&f, &entry.manifold, 60, 2, &Tolerances::default()).unwrap();
        assert!(v.pass, "{:?}", v.evidence);
        assert!(v.key_metric.unwrap() > 0.1);
    }

    #[test]
    fn constant_map_fails_with_rank_zero_witness() {
        let entry = builtin("circle_in_R3").unwrap();
        let f = f_builtin("constant", 3, 2).unwrap();
        let f0 = perturb(&f, &LinearPerturbation::zero(2, 3)).unwrap();
        let v = verify_immersion(&f0, &entry.manifold, 40, 2, &Tolerances::default()).unwrap();
        assert!(!v.pass);
        assert!(v.evidence.iter().any(|f| matches!(
            f,
            Finding::RankDrop { rank: 0, .. }
        )));
    }

    #[test]
    fn random_alpha_makes_constant_an_immersion() {
        // n = 1, l = 2 = 2n: generic linear maps restricted to the circle immerse.
        let entry = builtin("circle_in_R3").unwrap();
        let f = f_builtin("constant", 3, 2).unwrap();
        for trial in 0..5 {
            let alpha = sample_perturbation(3, 2, 1.0, 13, trial).unwrap();
            let fa = perturb(&f, &alpha).unwrap();
            let v = verify_immersion(&fa, &entry.manifold, 40, trial, &Tolerances::default())
                .unwrap();
            assert!(v.pass, "trial {trial}: {:?}", v.key_metric);
        }
    }

    #[test]
    fn scalar_codomain_passes_corank_automatically() {
        let entry = builtin("circle_in_R2").unwrap();
        let f = f_builtin("height", 2, 1).unwrap();
        let v = verify_corank_bound(&f, &entry.manifold, 20, 0, &Tolerances::default()).unwrap();
        assert!(v.pass);
        assert!(v.evidence.iter().any(|f| matches!(f, Finding::Note { .. })));
    }

    #[test]
    fn constant_on_torus_exceeds_the_corank_bound() {
        let entry = builtin("torus_in_R3").unwrap();
        let f = f_builtin("constant", 3, 2).unwrap();
        let f0 = perturb(&f, &LinearPerturbation::zero(2, 3)).unwrap();
        let v = verify_corank_bound(&f0, &entry.manifold, 10, 1, &Tolerances::default()).unwrap();
        assert!(!v.pass);
        assert!(v.evidence.iter().any(|f| matches!(f, Finding::RankDrop { corank: 2, .. })));
    }

    #[test]
    fn torus_with_random_alpha_respects_k0() {
        let entry = builtin("torus_in_R3").unwrap();
        let f = f_builtin("constant", 3, 2).unwrap();
        let alpha = sample_perturbation(3, 2, 1.0, 5, 0).unwrap();
        let fa = perturb(&f, &alpha).unwrap();
        let v = verify_corank_bound(&fa, &entry.manifold, 20, 3, &Tolerances::default()).unwrap();
        assert!(v.pass, "key metric {:?}", v.key_metric);
    }
}
