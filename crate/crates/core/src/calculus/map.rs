//! Smooth maps with built-in derivative oracles.
//!
//! A map is written once as a program over an abstract scalar ([`RealFn`]) and
//! evaluated at `f64`, [`Dual`], or [`Dual2`] to obtain values, Jacobians, or
//! Hessian stacks. Composite maps (perturbed, chart-composed) implement the
//! object-safe [`MapProgram`] directly, so composition nests arbitrarily and
//! the chain rule happens inside the scalar arithmetic.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use super::dual::{Dual, Dual2, Real, MAX_DIM};
use crate::geometry::OpenBox;
use crate::{Error, Result};

/// A map body generic over the scalar type. Implement this to define a map.
pub trait RealFn: Send + Sync {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S>;
}

/// Object-safe evaluation at the three concrete scalar types.
///
/// Combinators that wrap other programs (linear perturbation, chart
/// composition) implement this directly; plain map bodies get it through
/// [`SmoothMap::from_fn`].
pub trait MapProgram: Send + Sync {
    fn eval0(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn eval1(&self, x: &[Dual]) -> Result<Vec<Dual>>;
    fn eval2(&self, x: &[Dual2]) -> Result<Vec<Dual2>>;
}

struct ExprProgram<T>(T);

impl<T: RealFn> MapProgram for ExprProgram<T> {
    fn eval0(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.eval(x))
    }
    fn eval1(&self, x: &[Dual]) -> Result<Vec<Dual>> {
        Ok(self.0.eval(x))
    }
    fn eval2(&self, x: &[Dual2]) -> Result<Vec<Dual2>> {
        Ok(self.0.eval(x))
    }
}

/// A smooth map `R^domain_dim ⊇ domain -> R^codomain_dim` of declared
/// differentiability class `C^order_r`, with oracles for value, Jacobian, and
/// Hessian stack (orders 0, 1, 2; requests above `min(order_r, 2)` are
/// rejected).
///
/// Immutable and cheap to clone; safe to share across workers.
#[derive(Clone)]
pub struct SmoothMap {
    domain_dim: usize,
    codomain_dim: usize,
    order_r: u32,
    domain: Option<Arc<Vec<OpenBox>>>,
    program: Arc<dyn MapProgram>,
}

impl std::fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothMap")
            .field("domain_dim", &self.domain_dim)
            .field("codomain_dim", &self.codomain_dim)
            .field("order_r", &self.order_r)
            .field("boxed_domain", &self.domain.is_some())
            .finish()
    }
}

impl SmoothMap {
    /// Wraps a generic map body. The domain defaults to all of `R^domain_dim`.
    pub fn from_fn<T: RealFn + 'static>(
        domain_dim: usize,
        codomain_dim: usize,
        order_r: u32,
        body: T,
    ) -> Result<Self> {
        Self::from_program(domain_dim, codomain_dim, order_r, Arc::new(ExprProgram(body)))
    }

    /// Wraps an already-boxed program (used by map combinators).
    pub fn from_program(
        domain_dim: usize,
        codomain_dim: usize,
        order_r: u32,
        program: Arc<dyn MapProgram>,
    ) -> Result<Self> {
        if domain_dim == 0 || codomain_dim == 0 {
            return Err(Error::Argument("map dimensions must be positive".into()));
        }
        if order_r == 0 {
            return Err(Error::Argument("order_r must be at least 1".into()));
        }
        Ok(SmoothMap { domain_dim, codomain_dim, order_r, domain: None, program })
    }

    /// Restricts the domain to a finite union of open boxes.
    pub fn with_domain(mut self, boxes: Vec<OpenBox>) -> Result<Self> {
        for b in &boxes {
            if b.dim() != self.domain_dim {
                return Err(Error::Shape(format!(
                    "domain box of dimension {} for a map with domain dimension {}",
                    b.dim(),
                    self.domain_dim
                )));
            }
        }
        self.domain = Some(Arc::new(boxes));
        Ok(self)
    }

    pub fn domain_dim(&self) -> usize {
        self.domain_dim
    }

    pub fn codomain_dim(&self) -> usize {
        self.codomain_dim
    }

    pub fn order_r(&self) -> u32 {
        self.order_r
    }

    /// The domain boxes, or `None` when the map is defined on all of `R^n`.
    pub fn domain(&self) -> Option<&[OpenBox]> {
        self.domain.as_deref().map(|v| v.as_slice())
    }

    pub(crate) fn program(&self) -> &Arc<dyn MapProgram> {
        &self.program
    }

    /// True when `x` lies strictly inside the domain.
    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.domain {
            None => true,
            Some(boxes) => boxes.iter().any(|b| b.contains(x)),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.domain_dim {
            return Err(Error::Shape(format!(
                "point of dimension {} fed to a map with domain dimension {}",
                x.len(),
                self.domain_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("input point {x:?}")));
        }
        if !self.contains(x) {
            return Err(Error::Domain(format!("point {x:?} is outside the map's domain")));
        }
        Ok(())
    }

    fn check_ad_width(&self) -> Result<()> {
        if self.domain_dim > MAX_DIM {
            return Err(Error::Argument(format!(
                "domain dimension {} exceeds the forward-mode limit of {MAX_DIM} seeded variables",
                self.domain_dim
            )));
        }
        Ok(())
    }

    /// Order-0 oracle.
    pub fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let out = self.program.eval0(x)?;
        debug_assert_eq!(out.len(), self.codomain_dim);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("map value at {x:?}")));
        }
        Ok(out)
    }

    /// Evaluates without the domain check. Finite-difference oracles use this
    /// to probe just outside an open box; everything else should call
    /// [`SmoothMap::value`].
    pub fn value_unchecked(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.program.eval0(x)
    }

    /// Order-1 oracle: value and `codomain_dim x domain_dim` Jacobian.
    pub fn jet(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        self.check_input(x)?;
        self.check_ad_width()?;
        let seeds: Vec<Dual> = x.iter().enumerate().map(|(i, &v)| Dual::variable(v, i)).collect();
        let out = self.program.eval1(&seeds)?;
        let n = self.domain_dim;
        let l = self.codomain_dim;
        let mut value = Vec::with_capacity(l);
        let mut jac = DMatrix::zeros(l, n);
        for (k, d) in out.iter().enumerate() {
            value.push(d.val);
            for j in 0..n {
                jac[(k, j)] = d.grad[j];
            }
        }
        if value.iter().any(|v| !v.is_finite()) || jac.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("first derivative at {x:?}")));
        }
        Ok((value, jac))
    }

    /// The Jacobian matrix at `x`, computed by forward-mode dual arithmetic.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.jet(x)?.1)
    }

    /// Order-2 oracle: value, Jacobian, and one symmetrized Hessian per output
    /// component.
    pub fn jet2(&self, x: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>, Vec<DMatrix<f64>>)> {
        if self.order_r < 2 {
            return Err(Error::Regularity { order_r: self.order_r, requested: 2 });
        }
        self.check_input(x)?;
        self.check_ad_width()?;
        let seeds: Vec<Dual2> =
            x.iter().enumerate().map(|(i, &v)| Dual2::variable(v, i)).collect();
        let out = self.program.eval2(&seeds)?;
        let n = self.domain_dim;
        let l = self.codomain_dim;
        let mut value = Vec::with_capacity(l);
        let mut jac = DMatrix::zeros(l, n);
        let mut hessians = Vec::with_capacity(l);
        for (k, d) in out.iter().enumerate() {
            value.push(d.val);
            let mut h = DMatrix::zeros(n, n);
            for j in 0..n {
                jac[(k, j)] = d.grad[j];
                for i in 0..n {
                    h[(i, j)] = d.hess[i][j];
                }
            }
            // Symmetrize; propagation already preserves symmetry, this pins it exactly.
            let sym = (&h + h.transpose()) * 0.5;
            hessians.push(sym);
        }
        let finite = value.iter().all(|v| v.is_finite())
            && jac.iter().all(|v| v.is_finite())
            && hessians.iter().all(|h| h.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::NonFinite(format!("second derivative at {x:?}")));
        }
        Ok((value, jac, hessians))
    }

    /// One symmetric Hessian per output component.
    pub fn hessians(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        Ok(self.jet2(x)?.2)
    }
}

/// A local 1-jet: chart coordinates, value, and Jacobian of a chart-local map.
#[derive(Clone, Debug, Serialize)]
pub struct JetPoint {
    pub chart_id: String,
    pub t: Vec<f64>,
    pub value: Vec<f64>,
    /// Row-major `codomain_dim x n` Jacobian.
    pub jac: Vec<Vec<f64>>,
}

impl JetPoint {
    /// Evaluates the 1-jet of a chart-local map at `t`.
    pub fn of(map: &SmoothMap, chart_id: &str, t: &[f64]) -> Result<Self> {
        let (value, jac) = map.jet(t)?;
        let rows = (0..jac.nrows())
            .map(|i| jac.row(i).iter().copied().collect())
            .collect();
        Ok(JetPoint { chart_id: chart_id.to_string(), t: t.to_vec(), value, jac: rows })
    }

    pub fn jac_matrix(&self) -> DMatrix<f64> {
        let rows = self.jac.len();
        let cols = if rows == 0 { 0 } else { self.jac[0].len() };
        DMatrix::from_fn(rows, cols, |i, j| self.jac[i][j])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Cubic;
    impl RealFn for Cubic {
        fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
            let t = x[0];
            vec![t * t, t * t * t]
        }
    }

    #[test]
    fn jet_of_t2_t3() {
        let m = SmoothMap::from_fn(1, 2, 2, Cubic).unwrap();
        let (v, j) = m.jet(&[1.0]).unwrap();
        assert_eq!(v, vec![1.0, 1.0]);
        assert_eq!(j[(0, 0)], 2.0);
        assert_eq!(j[(1, 0)], 3.0);
    }

    #[test]
    fn hessians_rejected_below_c2() {
        let m = SmoothMap::from_fn(1, 2, 1, Cubic).unwrap();
        match m.hessians(&[0.5]) {
            Err(Error::Regularity { order_r: 1, requested: 2 }) => {}
            other => panic!("expected regularity error, got {other:?}"),
        }
    }

    #[test]
    fn order0_matches_jet_value_bitwise() {
        let m = SmoothMap::from_fn(1, 2, 2, Cubic).unwrap();
        for &t in &[0.3, -1.7, 2.5] {
            let v0 = m.value(&[t]).unwrap();
            let (v1, _) = m.jet(&[t]).unwrap();
            let (v2, _, _) = m.jet2(&[t]).unwrap();
            assert_eq!(v0[0].to_bits(), v1[0].to_bits());
            assert_eq!(v0[1].to_bits(), v2[1].to_bits());
        }
    }

    #[test]
    fn domain_box_is_enforced_strictly() {
        let b = OpenBox::new(vec![(0.0, 1.0)]).unwrap();
        let m = SmoothMap::from_fn(1, 2, 2, Cubic).unwrap().with_domain(vec![b]).unwrap();
        assert!(m.value(&[0.5]).is_ok());
        assert!(matches!(m.value(&[0.0]), Err(Error::Domain(_))));
        assert!(matches!(m.value(&[1.5]), Err(Error::Domain(_))));
    }
}
