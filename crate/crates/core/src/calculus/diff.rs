//! Finite-difference oracles.
//!
//! These are the independent cross-checks for the dual-arithmetic derivatives:
//! central differences through the order-0 evaluation path only. Steps follow
//! the usual truncation/rounding balance: `sqrt(eps)` for first derivatives,
//! `cbrt(eps)` for second. Probes may step just outside an open domain box, so
//! evaluation goes through [`SmoothMap::value_unchecked`].

use nalgebra::DMatrix;

use super::map::SmoothMap;
use crate::Result;

fn step(scale: f64, x: f64) -> f64 {
    scale * x.abs().max(1.0)
}

/// Central-difference Jacobian, step `sqrt(eps) * max(1, |x_j|)` per axis.
pub fn fd_jacobian(map: &SmoothMap, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = map.domain_dim();
    let l = map.codomain_dim();
    let h0 = f64::EPSILON.sqrt();
    let mut jac = DMatrix::zeros(l, n);
    let mut probe = x.to_vec();
    for j in 0..n {
        let h = step(h0, x[j]);
        probe[j] = x[j] + h;
        let plus = map.value_unchecked(&probe)?;
        probe[j] = x[j] - h;
        let minus = map.value_unchecked(&probe)?;
        probe[j] = x[j];
        for k in 0..l {
            jac[(k, j)] = (plus[k] - minus[k]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Central second differences, step `cbrt(eps) * max(1, |x|)`; one symmetric
/// matrix per output component.
pub fn fd_hessian_stack(map: &SmoothMap, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let n = map.domain_dim();
    let l = map.codomain_dim();
    let h0 = f64::EPSILON.cbrt();
    let base = map.value_unchecked(x)?;
    let mut hessians = vec![DMatrix::zeros(n, n); l];
    let mut probe = x.to_vec();

    for i in 0..n {
        let hi = step(h0, x[i]);
        probe[i] = x[i] + hi;
        let plus = map.value_unchecked(&probe)?;
        probe[i] = x[i] - hi;
        let minus = map.value_unchecked(&probe)?;
        probe[i] = x[i];
        for k in 0..l {
            hessians[k][(i, i)] = (plus[k] - 2.0 * base[k] + minus[k]) / (hi * hi);
        }
    }

    for i in 0..n {
        for j in (i + 1)..n {
            let hi = step(h0, x[i]);
            let hj = step(h0, x[j]);
            let mut corner = |si: f64, sj: f64| -> Result<Vec<f64>> {
                probe[i] = x[i] + si * hi;
                probe[j] = x[j] + sj * hj;
                let v = map.value_unchecked(&probe);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let pp = corner(1.0, 1.0)?;
            let pm = corner(1.0, -1.0)?;
            let mp = corner(-1.0, 1.0)?;
            let mm = corner(-1.0, -1.0)?;
            for k in 0..l {
                let v = (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * hi * hj);
                hessians[k][(i, j)] = v;
                hessians[k][(j, i)] = v;
            }
        }
    }
    Ok(hessians)
}

/// Frobenius distance between `a` and `b` relative to `max(1, ||a||_F)`.
pub fn relative_frobenius_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    diff / a.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{Real, RealFn};

    struct Trig;
    impl RealFn for Trig {
        fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
            let (u, v) = (x[0], x[1]);
            vec![(u * v).sin() + u * u * v, (u - v).exp()]
        }
    }

    #[test]
    fn fd_agrees_with_dual_jacobian() {
        let m = SmoothMap::from_fn(2, 2, 2, Trig).unwrap();
        let x = [0.6, -0.4];
        let ad = m.jacobian(&x).unwrap();
        let fd = fd_jacobian(&m, &x).unwrap();
        assert!(relative_frobenius_error(&ad, &fd) < 1e-7);
    }

    #[test]
    fn fd_agrees_with_dual_hessians() {
        let m = SmoothMap::from_fn(2, 2, 2, Trig).unwrap();
        let x = [0.6, -0.4];
        let ad = m.hessians(&x).unwrap();
        let fd = fd_hessian_stack(&m, &x).unwrap();
        for (a, b) in ad.iter().zip(&fd) {
            assert!(relative_frobenius_error(a, b) < 1e-5);
        }
    }
}
