//! Jet-stratum arithmetic and the two block-matrix rank certificates.
//!
//! All stratum arithmetic is exact integer arithmetic. The matrix assemblers
//! build the block matrices whose full rank certifies transversality of the
//! perturbed composite: `assemble_m1` for the corank strata (full rank
//! `n + l + n*l` exactly when the chart Jacobian has rank `n`) and
//! `assemble_m2` for the diagonal in the multi-point setting (full rank `l*s`
//! exactly when the difference vectors of the ambient images span `s - 1`
//! dimensions).

use nalgebra::DMatrix;
use serde::Serialize;

use crate::calculus::{numerical_rank, RankPolicy};
use crate::geometry::ChartedManifold;
use crate::rng::subseed;
use crate::{Error, Result};

/// Codimension of the corank-`k` stratum in 1-jet space:
/// `(n - v + k)(l - v + k)` with `v = min(n, l)`.
pub fn codim_sigma_k(n: usize, l: usize, k: usize) -> Result<i64> {
    let v = n.min(l);
    if k < 1 || k > v {
        return Err(Error::Argument(format!(
            "corank k = {k} out of range 1..={v} for (n, l) = ({n}, {l})"
        )));
    }
    let (n, l, v, k) = (n as i64, l as i64, v as i64, k as i64);
    Ok((n - v + k) * (l - v + k))
}

/// Codimension of the diagonal in the `s`-fold product: `l (s - 1)`.
pub fn codim_delta_s(l: usize, s: usize) -> Result<i64> {
    if s < 2 {
        return Err(Error::Argument(format!("multiplicity s = {s} must be at least 2")));
    }
    Ok((l as i64) * (s as i64 - 1))
}

/// Largest corank a generic perturbed composite can exhibit: the maximum
/// `k in 0..=min(n, l)` with `codim_sigma_k(n, l, k) <= n`. For `l = 1` this is
/// always 1; a result of 0 means generic maps have no singular points at all
/// (only possible when `l >= 2n`).
pub fn k0_max_corank(n: usize, l: usize) -> usize {
    let v = n.min(l);
    (1..=v)
        .rev()
        .find(|&k| codim_sigma_k(n, l, k).unwrap() <= n as i64)
        .unwrap_or(0)
}

/// `max { s (n - l) + l : 2 <= s <= s_f }`, the regularity budget needed by the
/// multi-point transversality statement.
pub fn s0_threshold(n: usize, l: usize, s_f: usize) -> Result<i64> {
    if s_f < 2 {
        return Err(Error::Argument(format!("s_f = {s_f} must be at least 2")));
    }
    Ok((2..=s_f as i64).map(|s| s * (n as i64 - l as i64) + l as i64).max().unwrap())
}

/// Smallest differentiability class that does NOT satisfy the corank-stratum
/// theorem: the theorem needs `r > max(n - codim, 0) + 1`.
pub fn r_threshold_sigma(n: usize, l: usize, k: usize) -> Result<i64> {
    Ok((n as i64 - codim_sigma_k(n, l, k)?).max(0) + 1)
}

/// Threshold for the multi-point theorem: needs `r > max(s0, 0)`.
pub fn r_threshold_delta(n: usize, l: usize, s_f: usize) -> Result<i64> {
    Ok(s0_threshold(n, l, s_f)?.max(0))
}

/// Selects which regularity inequality to evaluate.
#[derive(Clone, Copy, Debug)]
pub enum RegularityCheck {
    /// Transversality to the corank-`k` stratum.
    SigmaStratum { k: usize },
    /// Transversality to the diagonal for all multiplicities up to `s_f`.
    DeltaDiagonal { s_f: usize },
}

/// Evaluates the strict regularity inequality in exact integer arithmetic.
pub fn regularity_ok(n: usize, l: usize, r: u32, check: RegularityCheck) -> Result<bool> {
    let threshold = match check {
        RegularityCheck::SigmaStratum { k } => r_threshold_sigma(n, l, k)?,
        RegularityCheck::DeltaDiagonal { s_f } => r_threshold_delta(n, l, s_f)?,
    };
    Ok(i64::from(r) > threshold)
}

/// Dimension-regime predicates for a pair `(n, l)`.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Predicates {
    /// `l = 1`: generic composites are Morse functions.
    pub morse_applicable: bool,
    /// `l >= 2n`: generic composites are immersions.
    pub immersion_regime: bool,
    /// `l > 2n`: generic composites are injective.
    pub injection_regime: bool,
    /// `(s_f - 1) l > n s_f`: the top multiple-point locus is empty.
    pub nc_regime: Option<bool>,
}

/// Regularity thresholds; the theorems apply when `r` strictly exceeds them.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RThresholds {
    /// Per corank `k = 1..=nu`: `max(n - codim_sigma_k, 0) + 1`.
    pub thm1: Vec<i64>,
    /// `max(s0, 0)`, when an `s_f` is supplied.
    pub thm2: Option<i64>,
}

/// Integer invariants of a dimension triple, as printed by the CLI.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StrataProfile {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub nu: usize,
    pub codim_sigma: Vec<i64>,
    pub k0: usize,
    pub s0: Option<i64>,
    pub predicates: Predicates,
    pub r_thresholds: RThresholds,
}

impl StrataProfile {
    pub fn new(n: usize, m: usize, l: usize, s_f: Option<usize>) -> Result<Self> {
        if n == 0 || m == 0 || l == 0 {
            return Err(Error::Argument("dimensions must be positive".into()));
        }
        let nu = n.min(l);
        let codim_sigma = (1..=nu).map(|k| codim_sigma_k(n, l, k)).collect::<Result<Vec<_>>>()?;
        let thm1 = (1..=nu).map(|k| r_threshold_sigma(n, l, k)).collect::<Result<Vec<_>>>()?;
        let (s0, thm2, nc_regime) = match s_f {
            Some(sf) => {
                let s0 = s0_threshold(n, l, sf)?;
                let nc = (sf as i64 - 1) * l as i64 > (n as i64) * sf as i64;
                (Some(s0), Some(s0.max(0)), Some(nc))
            }
            None => (None, None, None),
        };
        Ok(StrataProfile {
            n,
            m,
            l,
            nu,
            codim_sigma,
            k0: k0_max_corank(n, l),
            s0,
            predicates: Predicates {
                morse_applicable: l == 1,
                immersion_regime: l >= 2 * n,
                injection_regime: l > 2 * n,
                nc_regime,
            },
            r_thresholds: RThresholds { thm1, thm2 },
        })
    }
}

// -- rank certificates --------------------------------------------------------

/// The jet-transversality certificate matrix: rows `n + l + n*l`, columns
/// `n + l + m*l`, laid out as
///
/// ```text
/// [ E_{n+l} |        0        ]
/// [    0    | diag_l( Jf^T )  ]
/// ```
///
/// where `jf` is the `m x n` chart Jacobian of `f`. The starred coupling block
/// of the underlying derivative matrix does not affect the rank, so it is
/// zero-filled; full rank `n + l + n*l` holds exactly when `rank Jf = n`.
pub fn assemble_m1(jf: &DMatrix<f64>, n: usize, l: usize) -> Result<DMatrix<f64>> {
    if jf.ncols() != n {
        return Err(Error::Shape(format!(
            "Jacobian has {} columns, expected n = {n}",
            jf.ncols()
        )));
    }
    if n == 0 || l == 0 {
        return Err(Error::Argument("dimensions must be positive".into()));
    }
    let m = jf.nrows();
    let rows = n + l + n * l;
    let cols = n + l + m * l;
    let mut out = DMatrix::zeros(rows, cols);
    for i in 0..(n + l) {
        out[(i, i)] = 1.0;
    }
    let jft = jf.transpose(); // n x m
    for copy in 0..l {
        let r0 = n + l + copy * n;
        let c0 = n + l + copy * m;
        for i in 0..n {
            for j in 0..m {
                out[(r0 + i, c0 + j)] = jft[(i, j)];
            }
        }
    }
    Ok(out)
}

/// The multi-point certificate matrix: for ambient images
/// `fvals = [f(t_1), ..., f(t_s)]` in `R^m`, the `l*s x (l + m*l)` matrix with
/// block rows `[E_l | B(t_i)]`, where `B(t_i)` is the block-diagonal of `l`
/// copies of the row vector `f(t_i)`.
pub fn assemble_m2(fvals: &[Vec<f64>], l: usize) -> Result<DMatrix<f64>> {
    let s = fvals.len();
    if s < 2 {
        return Err(Error::Argument(format!("need at least 2 points, got {s}")));
    }
    if l == 0 {
        return Err(Error::Argument("l must be positive".into()));
    }
    let m = fvals[0].len();
    if fvals.iter().any(|v| v.len() != m) {
        return Err(Error::Shape("ambient images of differing dimensions".into()));
    }
    let mut out = DMatrix::zeros(l * s, l + m * l);
    for (i, fv) in fvals.iter().enumerate() {
        let r0 = i * l;
        for row in 0..l {
            out[(r0 + row, row)] = 1.0;
            let c0 = l + row * m;
            for (j, &v) in fv.iter().enumerate() {
                out[(r0 + row, c0 + j)] = v;
            }
        }
    }
    Ok(out)
}

/// The `(s-1) x m` matrix of difference vectors `f(t_i) - f(t_1)`, `i >= 2`.
pub fn difference_matrix(fvals: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if fvals.len() < 2 {
        return Err(Error::Argument("need at least 2 points".into()));
    }
    let m = fvals[0].len();
    let rows = fvals.len() - 1;
    Ok(DMatrix::from_fn(rows, m, |i, j| fvals[i + 1][j] - fvals[0][j]))
}

/// Independent route to `rank(M2)`: row-reducing against the first block and
/// splitting off the identity leaves `l` disjoint copies of the difference
/// matrix, so the rank is `l * (1 + rank(differences))`.
pub fn m2_rank_via_reduction(fvals: &[Vec<f64>], l: usize, policy: RankPolicy) -> Result<usize> {
    let d = difference_matrix(fvals)?;
    Ok(l * (1 + numerical_rank(&d, policy).rank))
}

// -- spanning-order estimation --------------------------------------------------

/// A sampled tuple whose difference vectors failed to span, witnessing that the
/// spanning order is below the level at which it was found.
#[derive(Clone, Debug, Serialize)]
pub struct SfWitness {
    /// The level `s` at which the tuple was drawn.
    pub level: usize,
    /// `(chart_id, t)` per tuple member.
    pub points: Vec<(String, Vec<f64>)>,
    /// Ambient images of the tuple members.
    pub fvals: Vec<Vec<f64>>,
    /// Observed rank of the difference matrix (below `level - 1`).
    pub observed_rank: usize,
}

/// Result of the sampling estimator for the spanning order `s_f`.
///
/// Sampling can certify `s_f < s` (a witness tuple was found) but only gives
/// evidence for `s_f >= s` (every sampled tuple passed), so the estimate is an
/// upper-bound certificate, not a proof.
#[derive(Clone, Debug, Serialize)]
pub struct SfEstimate {
    pub s_f: usize,
    pub witness: Option<SfWitness>,
    pub samples_per_level: usize,
    pub levels_checked: usize,
}

/// Estimates the spanning order of the (injective) chart parametrizations by
/// sampling `samples` tuples per level `s = 2, 3, ...` and rank-testing the
/// difference vectors; stops at the first level with a witness. Always lands
/// in `[2, m + 1]`.
pub fn estimate_sf(
    man: &ChartedManifold,
    samples: usize,
    seed: u64,
    policy: RankPolicy,
) -> Result<SfEstimate> {
    let m = man.ambient_dim();
    let min_samples = 10 * (m + 1);
    if samples < min_samples {
        return Err(Error::Argument(format!(
            "need at least {min_samples} samples per level for ambient dimension {m}, got {samples}"
        )));
    }

    let mut levels_checked = 0;
    for s in 2..=(m + 2) {
        levels_checked += 1;
        for tuple_idx in 0..samples {
            let tuple_seed = subseed(seed, &[crate::rng::tag::TUPLES, s as u64, tuple_idx as u64]);
            let (points, fvals) = sample_distinct_tuple(man, s, tuple_seed)?;
            let d = difference_matrix(&fvals)?;
            let rank = numerical_rank(&d, policy).rank;
            if rank < s - 1 {
                let witness = SfWitness {
                    level: s,
                    points: points
                        .iter()
                        .map(|p| (man.chart(p.chart).chart_id().to_string(), p.t.clone()))
                        .collect(),
                    fvals,
                    observed_rank: rank,
                };
                if s == 2 {
                    return Err(Error::NotInjective(format!(
                        "two sampled points share an ambient image: {:?}",
                        witness.points
                    )));
                }
                return Ok(SfEstimate {
                    s_f: s - 1,
                    witness: Some(witness),
                    samples_per_level: samples,
                    levels_checked,
                });
            }
        }
    }
    // Unreachable for any finite m: level m + 2 demands rank m + 1 in R^m.
    Ok(SfEstimate { s_f: m + 1, witness: None, samples_per_level: samples, levels_checked })
}

/// `s` points with pairwise-distinct ambient images (numerically separated).
fn sample_distinct_tuple(
    man: &ChartedManifold,
    s: usize,
    seed: u64,
) -> Result<(Vec<crate::geometry::ManifoldPoint>, Vec<Vec<f64>>)> {
    const SEPARATION: f64 = 1e-10;
    let mut points = Vec::with_capacity(s);
    let mut fvals: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut attempt = 0u64;
    while points.len() < s {
        if attempt > 64 * s as u64 {
            return Err(Error::NotInjective(
                "could not sample a tuple of separated points".into(),
            ));
        }
        let p = sample_points_one(man, seed, attempt);
        attempt += 1;
        let fv = man.ambient(&p)?;
        let separated = fvals.iter().all(|prev| {
            prev.iter().zip(&fv).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() > SEPARATION
        });
        if separated {
            points.push(p);
            fvals.push(fv);
        }
    }
    Ok((points, fvals))
}

fn sample_points_one(
    man: &ChartedManifold,
    seed: u64,
    index: u64,
) -> crate::geometry::ManifoldPoint {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, &[crate::rng::tag::TUPLES, index]);
    let chart = rng.random_range(0..man.charts().len());
    crate::geometry::ManifoldPoint { chart, t: man.chart(chart).sample_point(&mut rng) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builtin;

    #[test]
    fn codim_formula_examples() {
        assert_eq!(codim_sigma_k(2, 2, 1).unwrap(), 1);
        assert_eq!(codim_sigma_k(2, 2, 2).unwrap(), 4);
        assert_eq!(codim_sigma_k(1, 1, 1).unwrap(), 1);
        assert!(codim_sigma_k(2, 2, 3).is_err());
        assert!(codim_sigma_k(2, 2, 0).is_err());
    }

    #[test]
    fn codim_is_strictly_increasing_in_k() {
        for n in 1..=6 {
            for l in 1..=6 {
                let v = n.min(l);
                for k in 1..v {
                    assert!(
                        codim_sigma_k(n, l, k).unwrap() < codim_sigma_k(n, l, k + 1).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn delta_codim_examples() {
        assert_eq!(codim_delta_s(3, 2).unwrap(), 3);
        assert_eq!(codim_delta_s(1, 5).unwrap(), 4);
        assert_eq!(codim_delta_s(2, 3).unwrap(), 4);
        assert!(codim_delta_s(2, 1).is_err());
    }

    #[test]
    fn k0_examples() {
        assert_eq!(k0_max_corank(2, 2), 1);
        assert_eq!(k0_max_corank(7, 6), 2);
        assert_eq!(k0_max_corank(5, 1), 1);
        // l >= 2n leaves no admissible corank at all.
        assert_eq!(k0_max_corank(1, 3), 0);
        assert_eq!(k0_max_corank(2, 4), 0);
    }

    #[test]
    fn s0_examples() {
        assert_eq!(s0_threshold(1, 3, 3).unwrap(), -1);
        assert_eq!(s0_threshold(2, 2, 4).unwrap(), 2);
        // n < l: the maximum is at s = 2, i.e. 2n - l.
        for (n, l, sf) in [(1, 3, 4), (2, 5, 3), (1, 2, 5)] {
            assert_eq!(s0_threshold(n, l, sf).unwrap(), 2 * n as i64 - l as i64);
        }
    }

    #[test]
    fn regularity_examples() {
        assert!(regularity_ok(1, 1, 2, RegularityCheck::SigmaStratum { k: 1 }).unwrap());
        assert!(regularity_ok(1, 3, 1, RegularityCheck::DeltaDiagonal { s_f: 3 }).unwrap());
        // codim = 3 at (n, l, k) = (3, 1, 1): threshold r > 1, so r = 3 passes.
        assert!(regularity_ok(3, 1, 3, RegularityCheck::SigmaStratum { k: 1 }).unwrap());
        assert!(!regularity_ok(1, 1, 1, RegularityCheck::SigmaStratum { k: 1 }).unwrap());
    }

    #[test]
    fn m1_explicit_3x4_example() {
        // n = 1, m = 2, l = 1, Jf = (1, 0)^T: rank must be n + l + nl = 3.
        let jf = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let m1 = assemble_m1(&jf, 1, 1).unwrap();
        assert_eq!((m1.nrows(), m1.ncols()), (3, 4));
        let r = numerical_rank(&m1, RankPolicy::default());
        assert_eq!(r.rank, 3);
    }

    #[test]
    fn m1_rank_deficient_when_jf_drops_rank() {
        let jf = DMatrix::zeros(2, 1);
        let m1 = assemble_m1(&jf, 1, 2).unwrap();
        let r = numerical_rank(&m1, RankPolicy::default());
        assert!(r.rank < 1 + 2 + 2);
    }

    #[test]
    fn m1_on_circle_charts_for_each_codomain() {
        let entry = builtin("circle_in_R3").unwrap();
        for l in 1..=3usize {
            for p in crate::geometry::sample_points(&entry.manifold, 100, 13) {
                let jf = entry.manifold.chart(p.chart).param().jacobian(&p.t).unwrap();
                let m1 = assemble_m1(&jf, 1, l).unwrap();
                let r = numerical_rank(&m1, RankPolicy::default());
                assert_eq!(r.rank, 1 + l + l);
            }
        }
    }

    #[test]
    fn m2_explicit_2x2_example() {
        let m2 = assemble_m2(&[vec![0.0], vec![1.0]], 1).unwrap();
        assert_eq!(m2, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
        assert_eq!(numerical_rank(&m2, RankPolicy::default()).rank, 2);
    }

    #[test]
    fn m2_repeated_points_collapse_to_rank_l() {
        let fv = vec![vec![0.3, -0.7], vec![0.3, -0.7], vec![0.3, -0.7]];
        for l in 1..=3 {
            let m2 = assemble_m2(&fv, l).unwrap();
            assert_eq!(numerical_rank(&m2, RankPolicy::default()).rank, l);
        }
    }

    #[test]
    fn m2_rank_matches_the_reduction_identity() {
        use rand::Rng;
        let mut rng = crate::rng::stream(2024, &[1]);
        for _ in 0..200 {
            let s = rng.random_range(2..=5);
            let m = rng.random_range(1..=4);
            let l = rng.random_range(1..=3);
            // Mix general-position tuples with degenerate ones (repeats/affine).
            let degenerate: bool = rng.random();
            let mut fvals: Vec<Vec<f64>> =
                (0..s).map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            if degenerate && s >= 3 {
                fvals[2] = fvals[1].clone();
            }
            let m2 = assemble_m2(&fvals, l).unwrap();
            let direct = numerical_rank(&m2, RankPolicy::default()).rank;
            let reduced = m2_rank_via_reduction(&fvals, l, RankPolicy::default()).unwrap();
            assert_eq!(direct, reduced, "s={s} m={m} l={l} fvals={fvals:?}");
        }
    }

    #[test]
    fn sf_estimates_for_the_catalog() {
        let policy = RankPolicy::default();
        let circle = builtin("circle_in_R2").unwrap();
        assert_eq!(estimate_sf(&circle.manifold, 100, 7, policy).unwrap().s_f, 3);

        let interval = builtin("interval_in_R1").unwrap();
        let est = estimate_sf(&interval.manifold, 100, 7, policy).unwrap();
        assert_eq!(est.s_f, 2);
        assert!(est.witness.is_some());

        let moment = builtin("moment_curve_in_R3").unwrap();
        assert_eq!(estimate_sf(&moment.manifold, 100, 7, policy).unwrap().s_f, 4);
    }

    #[test]
    fn sf_estimate_rejects_tiny_sample_budgets() {
        let circle = builtin("circle_in_R2").unwrap();
        assert!(estimate_sf(&circle.manifold, 5, 7, RankPolicy::default()).is_err());
    }

    #[test]
    fn strata_profile_serializes_with_stable_keys() {
        let p = StrataProfile::new(1, 2, 1, Some(3)).unwrap();
        let json = serde_json::to_value(&p).unwrap();
        assert_eq!(json["codim_sigma"], serde_json::json!([1]));
        assert_eq!(json["k0"], 1);
        assert_eq!(json["nu"], 1);
        assert!(json["predicates"]["morse_applicable"].as_bool().unwrap());
    }
}
