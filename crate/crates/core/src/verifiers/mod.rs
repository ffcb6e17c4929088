//! Property checkers with explicit tolerances and structured evidence.
//!
//! Each verifier decides one property of a composite `g = F_a ∘ f` presented
//! chartwise on a manifold: Morse, immersion, corank bound, injectivity,
//! normal crossings, or embedding. A `pass` never claims a proof — it means no
//! counterexample was found under the recorded budgets and tolerances, which
//! every verdict carries in full. A `fail` always carries at least one
//! concrete counterexample.

mod critical;
mod descent;
mod multipoint;
mod rank_hunt;
mod transversality;

pub use critical::{classify_critical_point, find_critical_points, verify_morse, CriticalPoint};
pub use multipoint::{
    check_delta_s_level, verify_injective, verify_normal_crossings, LevelReport,
    MultiPointRecord, Separation,
};
pub use rank_hunt::{verify_corank_bound, verify_immersion};
pub use transversality::{transverse_to_sigma_k_at, TransversalityOutcome};

use serde::{Deserialize, Serialize};

use crate::calculus::{RankPolicy, SmoothMap};
use crate::geometry::ChartedManifold;
use crate::rng::subseed;
use crate::{Error, Result};

/// All numeric thresholds used by the verifiers. Recorded in every verdict so
/// a pass/fail is auditable; every field can be overridden from config.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Tolerances {
    /// Accept a Newton limit point as critical when the gradient norm is below this.
    pub newton_tol: f64,
    /// Iteration cap for Newton polishing and collision refinement.
    pub newton_max_iter: usize,
    /// Hessian degeneracy scale: eigenvalues and determinants below
    /// `hess_tol_scale * (1 + ||H||_F)` count as zero.
    pub hess_tol_scale: f64,
    /// Points closer than this (chart coordinates or ambient image) are one point.
    pub dedup_radius: f64,
    /// Singular values below this count as rank drops during hunting.
    pub sigma_floor: f64,
    /// Image separations below this count as collisions.
    pub collision_tol: f64,
    /// Off-diagonal guard: tuple members must keep this much ambient separation.
    pub pair_floor: f64,
    /// Scale for the relative SVD rank threshold.
    pub rank_tol_scale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            newton_tol: 1e-10,
            newton_max_iter: 50,
            // sqrt(eps)-scale floor: a vanishing Hessian at a degenerate
            // critical point can only be located to about 6e-9 in double
            // precision, which leaves |H| around 4e-8 at the best reachable
            // point. The threshold sits two decades above that and six below
            // typical nondegenerate Hessians.
            hess_tol_scale: 1e-6,
            dedup_radius: 1e-6,
            sigma_floor: 1e-8,
            collision_tol: 1e-8,
            pair_floor: 1e-4,
            rank_tol_scale: 1e3,
        }
    }
}

impl Tolerances {
    pub fn rank_policy(&self) -> RankPolicy {
        RankPolicy { scale: self.rank_tol_scale }
    }

    /// Degeneracy threshold for a matrix of second-derivative data with
    /// Frobenius norm `norm`.
    pub fn hess_threshold(&self, norm: f64) -> f64 {
        self.hess_tol_scale * (1.0 + norm)
    }
}

/// The verifiable properties.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Morse,
    Immersion,
    #[serde(rename = "corank")]
    CorankBound,
    Injective,
    #[serde(rename = "nc")]
    NormalCrossings,
    Embedding,
}

impl Property {
    pub const ALL: [Property; 6] = [
        Property::Morse,
        Property::Immersion,
        Property::CorankBound,
        Property::Injective,
        Property::NormalCrossings,
        Property::Embedding,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Property::Morse => "morse",
            Property::Immersion => "immersion",
            Property::CorankBound => "corank",
            Property::Injective => "injective",
            Property::NormalCrossings => "nc",
            Property::Embedding => "embedding",
        }
    }

    pub fn parse(s: &str) -> Result<Property> {
        Property::ALL
            .iter()
            .copied()
            .find(|p| p.token() == s)
            .ok_or_else(|| Error::Argument(format!("unknown property `{s}`; one of morse, immersion, corank, injective, nc, embedding")))
    }
}

/// A point reference in evidence: chart, coordinates, and ambient image of the
/// chart parametrization.
#[derive(Clone, Debug, Serialize)]
pub struct PointRef {
    pub chart: String,
    pub t: Vec<f64>,
    pub ambient: Vec<f64>,
}

/// One structured piece of evidence inside a verdict.
#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Finding {
    /// A critical point with its classification.
    CriticalPoint {
        point: PointRef,
        grad_norm: f64,
        hessian_det: f64,
        min_abs_eig: f64,
        hess_norm: f64,
        nondegenerate: bool,
        index: usize,
    },
    /// A point where the composite's Jacobian dropped rank (or got close).
    RankDrop {
        point: PointRef,
        singular_values: Vec<f64>,
        rank: usize,
        corank: usize,
    },
    /// The smallest singular-value objective a hunt reached (pass evidence).
    SigmaMinimum { point: PointRef, corank_hunted: usize, value: f64 },
    /// A pair of separated points whose images (nearly) collide.
    CollisionPair { points: Vec<PointRef>, image_distance_sq: f64, ambient_separation: f64 },
    /// The smallest image distance a pair hunt reached (pass evidence).
    PairMinimum { points: Vec<PointRef>, image_distance_sq: f64 },
    /// A multiple point of multiplicity `level` with its transversality status.
    MultiplePoint {
        level: usize,
        points: Vec<PointRef>,
        residual: f64,
        stacked_rank: usize,
        required_rank: usize,
        transverse: bool,
    },
    /// The dimension predicate of the property does not hold; failure is expected.
    RegimeWarning { message: String },
    /// Free-form note (e.g. a vacuous check).
    Note { message: String },
}

/// Budget actually spent by a verifier.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct SampleBudget {
    /// Points, pairs, or tuples sampled.
    pub samples: usize,
    /// Local searches launched.
    pub multistarts: usize,
    /// Grid density per axis (critical point finder only).
    pub grid_density: usize,
    /// Iteration cap per local search.
    pub descent_iters: usize,
}

/// Outcome of one verifier run.
#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub property: Property,
    pub pass: bool,
    pub evidence: Vec<Finding>,
    pub tolerances: Tolerances,
    pub sample_budget: SampleBudget,
    pub seed: u64,
    /// Property-specific margin: the closest the run came to failing
    /// (smallest nondegeneracy margin, singular value, or squared distance).
    pub key_metric: Option<f64>,
}

impl Verdict {
    /// A failing verdict must exhibit a counterexample.
    pub fn counterexamples(&self) -> usize {
        self.evidence
            .iter()
            .filter(|f| match f {
                Finding::CriticalPoint { nondegenerate, .. } => !nondegenerate,
                Finding::RankDrop { .. } => true,
                Finding::CollisionPair { .. } => true,
                Finding::MultiplePoint { transverse, .. } => !transverse,
                _ => false,
            })
            .count()
    }
}

/// Composite `F_a ∘ f` on every chart, precomputed once per verification.
pub(crate) fn chart_composites(
    f_map: &SmoothMap,
    man: &ChartedManifold,
) -> Result<Vec<SmoothMap>> {
    if f_map.domain_dim() != man.ambient_dim() {
        return Err(Error::Shape(format!(
            "map expects R^{}, manifold sits in R^{}",
            f_map.domain_dim(),
            man.ambient_dim()
        )));
    }
    man.charts()
        .iter()
        .map(|c| crate::perturbation::compose_chartwise(f_map, c))
        .collect()
}

pub(crate) fn point_ref(man: &ChartedManifold, chart: usize, t: &[f64]) -> PointRef {
    let ambient = man.chart(chart).ambient(t).unwrap_or_default();
    PointRef { chart: man.chart(chart).chart_id().to_string(), t: t.to_vec(), ambient }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Embedding check: compact manifold, immersion leg, injectivity leg.
/// On a compact manifold an injective immersion is an embedding.
pub fn verify_embedding(
    f_map: &SmoothMap,
    man: &ChartedManifold,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Verdict> {
    if !man.compact() {
        return Err(Error::Predicate(format!(
            "embedding verification requires a compact manifold; `{}` is not flagged compact",
            man.name()
        )));
    }
    let n = man.dim_n();
    let l = f_map.codomain_dim();
    let mut evidence = Vec::new();
    if l <= 2 * n {
        evidence.push(Finding::RegimeWarning {
            message: format!("embedding genericity needs l > 2n, got l = {l}, n = {n}"),
        });
    }
    let immersion = verify_immersion(f_map, man, budget, subseed(seed, &[1]), tol)?;
    let injective = verify_injective(f_map, man, budget, subseed(seed, &[2]), tol)?;
    let pass = immersion.pass && injective.pass;
    let key_metric = injective.key_metric;
    let budget_used = SampleBudget {
        samples: immersion.sample_budget.samples + injective.sample_budget.samples,
        multistarts: immersion.sample_budget.multistarts + injective.sample_budget.multistarts,
        grid_density: 0,
        descent_iters: immersion.sample_budget.descent_iters,
    };
    evidence.extend(immersion.evidence);
    evidence.extend(injective.evidence);
    Ok(Verdict {
        property: Property::Embedding,
        pass,
        evidence,
        tolerances: tol.clone(),
        sample_budget: budget_used,
        seed,
        key_metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn property_tokens_round_trip() {
        for p in Property::ALL {
            assert_eq!(Property::parse(p.token()).unwrap(), p);
        }
        assert!(Property::parse("frobnicate").is_err());
    }

    #[test]
    fn default_tolerances_serialize() {
        let t = Tolerances::default();
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(json["newton_tol"], 1e-10);
        assert_eq!(json["pair_floor"], 1e-4);
    }

    #[test]
    fn embedding_requires_compactness() {
        let entry = crate::geometry::builtin("interval_in_R1").unwrap();
        let f = crate::geometry::f_builtin("constant", 1, 3).unwrap();
        match verify_embedding(&f, &entry.manifold, 16, 0, &Tolerances::default()) {
            Err(Error::Predicate(msg)) => assert!(msg.contains("compact")),
            other => panic!("expected predicate error, got {other:?}"),
        }
    }
}
