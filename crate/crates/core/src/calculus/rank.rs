//! Tolerance-aware numerical rank via the SVD.

use nalgebra::DMatrix;
use serde::Serialize;

/// Threshold policy for calling a singular value zero:
/// `tol = scale * max(rows, cols) * sigma_max * eps`, or `scale * eps` when the
/// matrix is exactly zero.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RankPolicy {
    pub scale: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy { scale: 1e3 }
    }
}

/// Singular values (nonincreasing), rank, corank, and the threshold used.
#[derive(Clone, Debug, Serialize)]
pub struct RankReport {
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub corank: usize,
    pub tol_used: f64,
}

/// Numerical rank of `m` under `policy`.
pub fn numerical_rank(m: &DMatrix<f64>, policy: RankPolicy) -> RankReport {
    rank_with_floor(m, policy, 0.0)
}

/// Numerical rank with an additional absolute floor on the threshold. The
/// default policy scales with `sigma_max`, which never declares a tiny nonzero
/// matrix singular; stratum-membership decisions need an absolute scale (a
/// gradient below Newton tolerance must count as zero), and pass it here.
pub fn rank_with_floor(m: &DMatrix<f64>, policy: RankPolicy, floor: f64) -> RankReport {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let scaled = if sigma_max > 0.0 {
        policy.scale * (m.nrows().max(m.ncols()) as f64) * sigma_max * f64::EPSILON
    } else {
        policy.scale * f64::EPSILON
    };
    let tol = scaled.max(floor);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    let corank = m.nrows().min(m.ncols()) - rank;
    RankReport { singular_values: sv, rank, corank, tol_used: tol }
}
