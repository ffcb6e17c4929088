//! Local transversality against the corank strata.
//!
//! Near a Jacobian of corank `k`, permute rows and columns so the leading
//! `(nu - k) x (nu - k)` block `A` is well conditioned; the stratum is locally
//! cut out by the vanishing of the Schur complement `S = D - C A^{-1} B`, one
//! equation per entry. The jet map is transverse to the stratum exactly when
//! the derivative of `t -> vec(S(t))` reaches full rank `codim`; when
//! `codim > n` that is impossible, so lying in the stratum is itself a
//! transversality failure.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::calculus::{rank_with_floor, SmoothMap};
use crate::strata::codim_sigma_k;
use crate::{Error, Result};

use super::Tolerances;

/// Outcome of the pointwise stratum test.
#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum TransversalityOutcome {
    /// The Jacobian's corank differs from `k`; the jet is off the stratum.
    NotInStratum { corank: usize },
    /// In the stratum, and the local equations' derivative has full rank.
    Transverse { schur_rank: usize, codim: usize, margin: f64 },
    /// In the stratum with a rank-deficient derivative.
    NotTransverse { schur_rank: usize, codim: usize, deficit: usize },
}

/// Full-pivot selection of `p` rows and columns, greedily maximizing each
/// pivot. Returns (selected rows, selected cols, other rows, other cols).
fn select_pivot_block(
    j: &DMatrix<f64>,
    p: usize,
) -> (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut work = j.clone();
    let mut rows_sel = Vec::with_capacity(p);
    let mut cols_sel = Vec::with_capacity(p);
    for _ in 0..p {
        let mut best = (0usize, 0usize, -1.0f64);
        for r in 0..work.nrows() {
            if rows_sel.contains(&r) {
                continue;
            }
            for c in 0..work.ncols() {
                if cols_sel.contains(&c) {
                    continue;
                }
                if work[(r, c)].abs() > best.2 {
                    best = (r, c, work[(r, c)].abs());
                }
            }
        }
        let (pr, pc, _) = best;
        rows_sel.push(pr);
        cols_sel.push(pc);
        // Eliminate below/right so later pivots reflect the remaining rank.
        let pivot = work[(pr, pc)];
        if pivot != 0.0 {
            for r in 0..work.nrows() {
                if r == pr || rows_sel.contains(&r) {
                    continue;
                }
                let factor = work[(r, pc)] / pivot;
                for c in 0..work.ncols() {
                    work[(r, c)] -= factor * work[(pr, c)];
                }
            }
        }
    }
    let rows_other: Vec<usize> = (0..j.nrows()).filter(|r| !rows_sel.contains(r)).collect();
    let cols_other: Vec<usize> = (0..j.ncols()).filter(|c| !cols_sel.contains(c)).collect();
    (rows_sel, cols_sel, rows_other, cols_other)
}

fn submatrix(j: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| j[(rows[a], cols[b])])
}

/// Tests transversality of the composite's jet to the corank-`k` stratum at
/// the chart point `t`. Needs second derivatives.
pub fn transverse_to_sigma_k_at(
    composite: &SmoothMap,
    t: &[f64],
    k: usize,
    tol: &Tolerances,
) -> Result<TransversalityOutcome> {
    let n = composite.domain_dim();
    let l = composite.codomain_dim();
    let nu = n.min(l);
    if k < 1 || k > nu {
        return Err(Error::Argument(format!("corank k = {k} out of range 1..={nu}")));
    }
    let (_, jac, hess) = composite.jet2(t)?;

    // Stratum membership: singular values below sigma_floor count as zero.
    let rank_report = rank_with_floor(&jac, tol.rank_policy(), tol.sigma_floor);
    if rank_report.corank != k {
        return Ok(TransversalityOutcome::NotInStratum { corank: rank_report.corank });
    }

    let p = nu - k;
    let (rows_sel, cols_sel, rows_other, cols_other) = select_pivot_block(&jac, p);
    let codim = codim_sigma_k(n, l, k)? as usize;

    // dJ/dt_q assembled from the Hessian stack: dJ[(r, c)]/dt_q = H_r[(c, q)].
    let d_jac = |r: &[usize], c: &[usize], q: usize| -> DMatrix<f64> {
        DMatrix::from_fn(r.len(), c.len(), |a, b| hess[r[a]][(c[b], q)])
    };

    // Derivative of the Schur complement S = D - C A^{-1} B in direction q:
    //   S_q = D_q - C_q X - Y B_q + Y A_q X,   X = A^{-1} B,  Y = C A^{-1}.
    let mut schur_grad = DMatrix::zeros(codim, n);
    if p == 0 {
        // Empty pivot block: S is the whole Jacobian.
        for q in 0..n {
            let dd = d_jac(&rows_other, &cols_other, q);
            for a in 0..rows_other.len() {
                for b in 0..cols_other.len() {
                    schur_grad[(a * cols_other.len() + b, q)] = dd[(a, b)];
                }
            }
        }
    } else {
        let a_block = submatrix(&jac, &rows_sel, &cols_sel);
        let svd = a_block.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond > 1e12 {
            return Err(Error::Conditioning { cond });
        }
        let lu = a_block.clone().lu();
        let b_block = submatrix(&jac, &rows_sel, &cols_other);
        let c_block = submatrix(&jac, &rows_other, &cols_sel);
        let x = lu.solve(&b_block).ok_or(Error::Conditioning { cond })?;
        let y_t = a_block
            .transpose()
            .lu()
            .solve(&c_block.transpose())
            .ok_or(Error::Conditioning { cond })?;
        let y = y_t.transpose();
        for q in 0..n {
            let dd = d_jac(&rows_other, &cols_other, q);
            let dc = d_jac(&rows_other, &cols_sel, q);
            let db = d_jac(&rows_sel, &cols_other, q);
            let da = d_jac(&rows_sel, &cols_sel, q);
            let s_q = dd - &dc * &x - &y * &db + &y * &da * &x;
            for a in 0..rows_other.len() {
                for b in 0..cols_other.len() {
                    schur_grad[(a * cols_other.len() + b, q)] = s_q[(a, b)];
                }
            }
        }
    }

    // Full rank of the equation derivative, judged at the same degeneracy
    // scale as the Hessian classifier so the two tests agree where they meet.
    let floor = tol.hess_threshold(schur_grad.norm());
    let report = rank_with_floor(&schur_grad, tol.rank_policy(), floor);
    if report.rank == codim {
        let margin = report.singular_values[codim - 1];
        Ok(TransversalityOutcome::Transverse { schur_rank: report.rank, codim, margin })
    } else {
        Ok(TransversalityOutcome::NotTransverse {
            schur_rank: report.rank,
            codim,
            deficit: codim - report.rank,
        })
    }
}
