//! Collision hunting on tuple spaces: injectivity and normal crossings.
//!
//! Near-multiple points of `g` are located by damped Gauss-Newton on the
//! stacked residual `R = (g(q_i) - g(q_1))_{i>=2}`, seeded from the best
//! sampled tuples. Gauss-Newton converges quadratically onto transverse
//! crossings and still linearly onto tangential ones (where the stacked
//! derivative is singular at the solution), which is exactly what makes the
//! failure cases findable. The off-diagonal constraint is enforced by
//! rejection during the line search.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use crate::calculus::{rank_with_floor, SmoothMap};
use crate::geometry::ChartedManifold;
use crate::rng::{stream, tag};
use crate::strata::codim_delta_s;
use crate::{Error, Result};

use super::{
    chart_composites, dist_sq, point_ref, Finding, PointRef, Property, SampleBudget, Tolerances,
    Verdict,
};

/// How tuple members are kept distinct as manifold points.
#[derive(Clone, Copy, Debug)]
pub enum Separation {
    /// Pairwise ambient images of the chart parametrization must stay at least
    /// this far apart. Sound when the parametrization is injective.
    AmbientImage(f64),
    /// Members in the same chart must keep this much coordinate distance;
    /// members in different charts of the same component are excluded (their
    /// identity is undecidable without gluing data); members in different
    /// components are always distinct. For immersed images given directly.
    SameChartCoords(f64),
}

/// A located multiple point with its diagonal-transversality status.
#[derive(Clone, Debug, Serialize)]
pub struct MultiPointRecord {
    pub points: Vec<PointRef>,
    /// Sum of squared image distances to the first member.
    pub residual: f64,
    pub stacked_rank: usize,
    pub required_rank: usize,
    pub transverse: bool,
}

/// Outcome of the level-`s` diagonal check.
#[derive(Clone, Debug, Serialize)]
pub struct LevelReport {
    pub s: usize,
    /// Smallest residual seen anywhere (samples and refinements).
    pub min_residual: f64,
    pub multiple_points: Vec<MultiPointRecord>,
    pub all_transverse: bool,
}

struct Tuple {
    charts: Vec<usize>,
    coords: Vec<f64>, // concatenated chart coordinates, s blocks of n
}

struct Hunter<'a> {
    man: &'a ChartedManifold,
    comps: &'a [SmoothMap],
    s: usize,
    n: usize,
    l: usize,
    separation: Separation,
    tol: &'a Tolerances,
}

impl Hunter<'_> {
    fn member<'t>(&self, t: &'t Tuple, i: usize) -> &'t [f64] {
        &t.coords[i * self.n..(i + 1) * self.n]
    }

    fn feasible(&self, t: &Tuple) -> bool {
        for i in 0..self.s {
            let ti = self.member(t, i);
            if !self.man.chart(t.charts[i]).domain().contains(ti) {
                return false;
            }
        }
        for i in 0..self.s {
            for j in (i + 1)..self.s {
                if !self.pair_ok(t, i, j) {
                    return false;
                }
            }
        }
        true
    }

    fn pair_ok(&self, t: &Tuple, i: usize, j: usize) -> bool {
        match self.separation {
            Separation::AmbientImage(floor) => {
                let a = self.man.chart(t.charts[i]).ambient(self.member(t, i));
                let b = self.man.chart(t.charts[j]).ambient(self.member(t, j));
                match (a, b) {
                    (Ok(a), Ok(b)) => dist_sq(&a, &b).sqrt() >= floor,
                    _ => false,
                }
            }
            Separation::SameChartCoords(floor) => {
                if t.charts[i] == t.charts[j] {
                    dist_sq(self.member(t, i), self.member(t, j)).sqrt() >= floor
                } else {
                    self.man.component(t.charts[i]) != self.man.component(t.charts[j])
                }
            }
        }
    }

    /// Stacked residual and its derivative: `R in R^{l(s-1)}`,
    /// `J in R^{l(s-1) x ns}` with block rows `[-Jg(q_1) | Jg(q_i) in slot i]`.
    fn residual_system(&self, t: &Tuple) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let rows = self.l * (self.s - 1);
        let mut r = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, self.s * self.n);
        let (g1, j1) = self.comps[t.charts[0]].jet(self.member(t, 0))?;
        for i in 1..self.s {
            let (gi, ji) = self.comps[t.charts[i]].jet(self.member(t, i))?;
            let r0 = (i - 1) * self.l;
            for row in 0..self.l {
                r[r0 + row] = gi[row] - g1[row];
                for c in 0..self.n {
                    jac[(r0 + row, c)] = -j1[(row, c)];
                    jac[(r0 + row, i * self.n + c)] = ji[(row, c)];
                }
            }
        }
        Ok((r, jac))
    }

    fn phi(&self, t: &Tuple) -> Option<f64> {
        let g1 = self.comps[t.charts[0]].value(self.member(t, 0)).ok()?;
        let mut total = 0.0;
        for i in 1..self.s {
            let gi = self.comps[t.charts[i]].value(self.member(t, i)).ok()?;
            total += dist_sq(&gi, &g1);
        }
        Some(total)
    }

    /// Damped Gauss-Newton from `start`, staying feasible. Returns the final
    /// tuple and residual.
    fn refine(&self, start: Tuple) -> Option<(Tuple, f64)> {
        let mut t = start;
        let mut phi = self.phi(&t)?;
        for _ in 0..self.tol.newton_max_iter {
            if phi <= 1e-32 {
                break;
            }
            let Ok((r, jac)) = self.residual_system(&t) else { break };
            let svd = jac.svd(true, true);
            let Ok(delta) = svd.solve(&(-r), 1e-13) else { break };
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda > 1e-12 {
                let trial = Tuple {
                    charts: t.charts.clone(),
                    coords: t
                        .coords
                        .iter()
                        .zip(delta.iter())
                        .map(|(c, d)| c + lambda * d)
                        .collect(),
                };
                if self.feasible(&trial) {
                    if let Some(tphi) = self.phi(&trial) {
                        if tphi < phi {
                            t = trial;
                            phi = tphi;
                            accepted = true;
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Some((t, phi))
    }

    fn sample_tuple<R: Rng>(&self, rng: &mut R) -> Option<Tuple> {
        let n_charts = self.man.charts().len();
        let mut t = Tuple { charts: Vec::with_capacity(self.s), coords: Vec::new() };
        'member: for _ in 0..self.s {
            for _ in 0..64 {
                let chart = rng.random_range(0..n_charts);
                let coords = self.man.chart(chart).sample_point(rng);
                let mut candidate = Tuple { charts: t.charts.clone(), coords: t.coords.clone() };
                candidate.charts.push(chart);
                candidate.coords.extend_from_slice(&coords);
                let i = candidate.charts.len() - 1;
                if (0..i).all(|j| self.pair_ok(&candidate, j, i)) {
                    t = candidate;
                    continue 'member;
                }
            }
            return None;
        }
        Some(t)
    }
}

/// Hunts near-multiple points of multiplicity `s` of the composite and checks
/// each against the diagonal-transversality condition: the stacked matrix
/// `[-Jg(q_1) | Jg(q_i)]` must reach full rank `l (s - 1)`.
pub fn check_delta_s_level(
    f_map: &SmoothMap,
    man: &ChartedManifold,
    s: usize,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
    separation: Separation,
) -> Result<LevelReport> {
    if s < 2 {
        return Err(Error::Argument(format!("multiplicity s = {s} must be at least 2")));
    }
    let comps = chart_composites(f_map, man)?;
    let n = man.dim_n();
    let l = f_map.codomain_dim();
    let hunter = Hunter { man, comps: &comps, s, n, l, separation, tol };

    let mut min_residual = f64::INFINITY;
    let mut candidates: Vec<(f64, Tuple)> = Vec::new();
    let keep = (8 * n * s).max(4);
    for idx in 0..budget {
        let mut rng = stream(seed, &[tag::MULTI, s as u64, idx as u64]);
        let Some(tuple) = hunter.sample_tuple(&mut rng) else { continue };
        let Some(phi) = hunter.phi(&tuple) else { continue };
        min_residual = min_residual.min(phi);
        candidates.push((phi, tuple));
        candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        candidates.truncate(keep);
    }

    let mut found: Vec<(Tuple, f64)> = Vec::new();
    for (_, start) in candidates {
        let Some((tuple, phi)) = hunter.refine(start) else { continue };
        min_residual = min_residual.min(phi);
        if phi <= tol.collision_tol * tol.collision_tol {
            found.push((tuple, phi));
        }
    }

    // Dedup refined tuples by the multiset of ambient member images.
    let mut unique: Vec<(Vec<Vec<f64>>, Tuple, f64)> = Vec::new();
    for (tuple, phi) in found {
        let mut sig: Vec<Vec<f64>> = (0..s)
            .map(|i| {
                man.chart(tuple.charts[i]).ambient(hunter.member(&tuple, i)).unwrap_or_default()
            })
            .collect();
        sig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let is_dup = unique.iter().any(|(existing, _, _)| {
            existing.len() == sig.len()
                && existing
                    .iter()
                    .zip(&sig)
                    .all(|(a, b)| dist_sq(a, b).sqrt() < tol.dedup_radius)
        });
        if !is_dup {
            unique.push((sig, tuple, phi));
        }
    }

    let required_rank = codim_delta_s(l, s)? as usize;
    let mut multiple_points = Vec::new();
    for (_, tuple, phi) in &unique {
        let (_, jac) = hunter.residual_system(tuple)?;
        let report = rank_with_floor(&jac, tol.rank_policy(), tol.sigma_floor);
        multiple_points.push(MultiPointRecord {
            points: (0..s).map(|i| point_ref(man, tuple.charts[i], hunter.member(tuple, i))).collect(),
            residual: *phi,
            stacked_rank: report.rank,
            required_rank,
            transverse: report.rank == required_rank,
        });
    }
    let all_transverse = multiple_points.iter().all(|m| m.transverse);
    Ok(LevelReport { s, min_residual, multiple_points, all_transverse })
}

/// Injectivity check: no two separated points may have (nearly) equal images.
pub fn verify_injective(
    f_map: &SmoothMap,
    man: &ChartedManifold,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Verdict> {
    let n = man.dim_n();
    let l = f_map.codomain_dim();
    let mut evidence = Vec::new();
    if l <= 2 * n {
        evidence.push(Finding::RegimeWarning {
            message: format!("injectivity genericity needs l > 2n, got l = {l}, n = {n}"),
        });
    }
    let level = check_delta_s_level(
        f_map,
        man,
        2,
        budget,
        seed,
        tol,
        Separation::AmbientImage(tol.pair_floor),
    )?;
    let pass = level.multiple_points.is_empty()
        && level.min_residual > tol.collision_tol * tol.collision_tol;
    for mp in &level.multiple_points {
        let sep = dist_sq(&mp.points[0].ambient, &mp.points[1].ambient).sqrt();
        evidence.push(Finding::CollisionPair {
            points: mp.points.clone(),
            image_distance_sq: mp.residual,
            ambient_separation: sep,
        });
    }
    if pass {
        evidence.push(Finding::Note {
            message: format!("smallest separated-pair image distance^2: {:.3e}", level.min_residual),
        });
    }
    Ok(Verdict {
        property: Property::Injective,
        pass,
        evidence,
        tolerances: tol.clone(),
        sample_budget: SampleBudget {
            samples: budget,
            multistarts: (8 * n * 2).max(4),
            grid_density: 0,
            descent_iters: tol.newton_max_iter,
        },
        seed,
        key_metric: Some(level.min_residual),
    })
}

/// Normal-crossings check up to multiplicity `s_f`: every located multiple
/// point must cross the diagonal transversally, and at the top level `s_f`
/// (when the dimension predicate `(s_f - 1) l > n s_f` holds) no multiple
/// point may exist at all.
pub fn verify_normal_crossings(
    f_map: &SmoothMap,
    man: &ChartedManifold,
    s_f: usize,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Verdict> {
    if s_f < 2 {
        return Err(Error::Argument(format!("s_f = {s_f} must be at least 2")));
    }
    let n = man.dim_n();
    let l = f_map.codomain_dim();
    let empty_clause = (s_f as i64 - 1) * l as i64 > (n as i64) * s_f as i64;

    let mut evidence = Vec::new();
    if !empty_clause {
        evidence.push(Finding::RegimeWarning {
            message: format!(
                "(s_f - 1) l > n s_f fails for s_f = {s_f}, l = {l}, n = {n}; \
                 the top-level emptiness clause is not applicable"
            ),
        });
    }
    let mut pass = true;
    let mut key_metric = None;
    for s in 2..=s_f {
        let level = check_delta_s_level(
            f_map,
            man,
            s,
            budget,
            crate::rng::subseed(seed, &[s as u64]),
            tol,
            Separation::AmbientImage(tol.pair_floor),
        )?;
        for mp in &level.multiple_points {
            if !mp.transverse {
                pass = false;
            }
            evidence.push(Finding::MultiplePoint {
                level: s,
                points: mp.points.clone(),
                residual: mp.residual,
                stacked_rank: mp.stacked_rank,
                required_rank: mp.required_rank,
                transverse: mp.transverse,
            });
        }
        if s == s_f {
            key_metric = Some(level.min_residual);
            if empty_clause && !level.multiple_points.is_empty() {
                pass = false;
                evidence.push(Finding::Note {
                    message: format!(
                        "multiplicity-{s_f} points exist but the dimension predicate \
                         requires that locus to be empty"
                    ),
                });
            }
        }
    }
    Ok(Verdict {
        property: Property::NormalCrossings,
        pass,
        evidence,
        tolerances: tol.clone(),
        sample_budget: SampleBudget {
            samples: budget * (s_f - 1),
            multistarts: (2..=s_f).map(|s| (8 * n * s).max(4)).sum(),
            grid_density: 0,
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

    #[test]
    fn known_embedding_is_injective() {
        let entry = builtin("circle_in_R3").unwrap();
        let f = f_builtin("proj_3", 3, 3).unwrap();
        let v = verify_injective(&f, &entry.manifold, 120, 5, &Tolerances::default()).unwrap();
        assert!(v.pass, "evidence: {:?}", v.evidence);
        assert!(v.key_metric.unwrap() > 1e-8);
    }

    #[test]
    fn collapsing_map_fails_with_a_witness_pair() {
        let entry = builtin("circle_in_R3").unwrap();
        let f = f_builtin("collapse_xy", 3, 3).unwrap();
        let f0 = perturb(&f, &LinearPerturbation::zero(3, 3)).unwrap();
        let v = verify_injective(&f0, &entry.manifold, 120, 5, &Tolerances::default()).unwrap();
        assert!(!v.pass);
        let witness = v.evidence.iter().find_map(|f| match f {
            Finding::CollisionPair { points, image_distance_sq, ambient_separation } => {
                Some((points.clone(), *image_distance_sq, *ambient_separation))
            }
            _ => None,
        });
        let (points, d2, sep) = witness.expect("no collision witness recorded");
        assert!(d2 <= 1e-16);
        assert!(sep >= 1e-4);
        // (x^2, y^2, 0) glues antipodal points of the circle.
        let a = &points[0].ambient;
        let b = &points[1].ambient;
        assert!((a[0].abs() - b[0].abs()).abs() < 1e-4);
    }

    #[test]
    fn random_alpha_restores_injectivity() {
        let entry = builtin("circle_in_R3").unwrap();
        let f = f_builtin("collapse_xy", 3, 3).unwrap();
        for trial in 0..5 {
            let alpha = sample_perturbation(3, 3, 1.0, 31, trial).unwrap();
            let fa = perturb(&f, &alpha).unwrap();
            let v = verify_injective(&fa, &entry.manifold, 80, trial, &Tolerances::default())
                .unwrap();
            assert!(v.pass, "trial {trial} failed: {:?}", v.key_metric);
        }
    }

    #[test]
    fn figure_eight_double_point_is_transverse() {
        let entry = builtin("figure_eight_immersion_R2").unwrap();
        let f = f_builtin("proj_2", 2, 2).unwrap();
        let level = check_delta_s_level(
            &f,
            &entry.manifold,
            2,
            200,
            9,
            &Tolerances::default(),
            Separation::SameChartCoords(1e-4),
        )
        .unwrap();
        assert_eq!(level.multiple_points.len(), 1, "{:?}", level.multiple_points);
        let mp = &level.multiple_points[0];
        assert!(mp.transverse);
        assert_eq!((mp.stacked_rank, mp.required_rank), (2, 2));
        // The double point sits at the origin.
        assert!(mp.points[0].ambient.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn normal_crossings_passes_on_injective_regime() {
        // l = 3 > 2n = 2: random perturbations give no double points at all.
        let entry = builtin("circle_in_R3").unwrap();
        let f = f_builtin("proj_3", 3, 3).unwrap();
        let alpha = sample_perturbation(3, 3, 1.0, 77, 0).unwrap();
        let fa = perturb(&f, &alpha).unwrap();
        let v = verify_normal_crossings(&fa, &entry.manifold, 3, 60, 7, &Tolerances::default())
            .unwrap();
        assert!(v.pass, "{:?}", v.evidence);
        assert!(v.evidence.iter().all(|f| !matches!(f, Finding::MultiplePoint { .. })));
    }
}
