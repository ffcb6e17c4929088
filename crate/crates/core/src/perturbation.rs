//! Linear perturbations `x -> F(x) + alpha * x` and chart-local composites.
//!
//! The coefficient matrix `alpha` is the whole perturbation: row `i` holds the
//! coefficients added to output component `i`. Sampling is Gaussian (any law
//! with a density avoids null sets almost surely) from a stream keyed on
//! `(seed, index)`, so Monte Carlo trials are reproducible and independent of
//! execution order.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::calculus::{Dual, Dual2, MapProgram, Real, SmoothMap};
use crate::geometry::{Chart, OpenBox};
use crate::rng::{stream, tag};
use crate::{Error, Result};

/// A linear map `R^m -> R^l` stored as its `l x m` coefficient matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPerturbation {
    alpha: DMatrix<f64>,
    seed_provenance: Option<(u64, u64)>,
}

impl LinearPerturbation {
    pub fn from_matrix(alpha: DMatrix<f64>) -> Result<Self> {
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("perturbation coefficients".into()));
        }
        Ok(LinearPerturbation { alpha, seed_provenance: None })
    }

    /// The zero perturbation (the unperturbed control case).
    pub fn zero(l: usize, m: usize) -> Self {
        LinearPerturbation { alpha: DMatrix::zeros(l, m), seed_provenance: None }
    }

    pub fn alpha(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    /// `(seed, index)` of the stream that produced this matrix, if sampled.
    pub fn provenance(&self) -> Option<(u64, u64)> {
        self.seed_provenance
    }

    pub fn codomain_dim(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn domain_dim(&self) -> usize {
        self.alpha.ncols()
    }

    /// 8-byte hex digest of the row-major coefficient bytes.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for i in 0..self.alpha.nrows() {
            for j in 0..self.alpha.ncols() {
                hasher.update(self.alpha[(i, j)].to_le_bytes());
            }
        }
        let d = hasher.finalize();
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Row-major copy, for report dumps.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.alpha.nrows())
            .map(|i| self.alpha.row(i).iter().copied().collect())
            .collect()
    }
}

/// Draws an `l x m` matrix with i.i.d. `N(0, scale^2)` entries from the stream
/// keyed on `(seed, index)`. Same inputs, same matrix.
pub fn sample_perturbation(
    m: usize,
    l: usize,
    scale: f64,
    seed: u64,
    index: u64,
) -> Result<LinearPerturbation> {
    if !(scale > 0.0) {
        return Err(Error::Argument(format!("perturbation scale {scale} must be positive")));
    }
    let mut rng = stream(seed, &[tag::ALPHA, index]);
    let alpha = DMatrix::from_fn(l, m, |_, _| rng.sample::<f64, _>(StandardNormal) * scale);
    Ok(LinearPerturbation { alpha, seed_provenance: Some((seed, index)) })
}

/// Program for `F + alpha`: evaluates the base, then adds the linear term.
/// The addition runs through the scalar arithmetic, so the Jacobian oracle
/// returns `JF(x) + alpha` entrywise and the Hessians are exactly the base's.
struct PerturbedProgram {
    base: Arc<dyn MapProgram>,
    alpha: DMatrix<f64>,
}

impl PerturbedProgram {
    fn add_linear<S: Real>(&self, x: &[S], mut out: Vec<S>) -> Vec<S> {
        for i in 0..self.alpha.nrows() {
            let mut acc = out[i];
            for j in 0..self.alpha.ncols() {
                acc = acc + x[j] * self.alpha[(i, j)];
            }
            out[i] = acc;
        }
        out
    }
}

impl MapProgram for PerturbedProgram {
    fn eval0(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.base.eval0(x)?;
        Ok(self.add_linear(x, out))
    }
    fn eval1(&self, x: &[Dual]) -> Result<Vec<Dual>> {
        let out = self.base.eval1(x)?;
        Ok(self.add_linear(x, out))
    }
    fn eval2(&self, x: &[Dual2]) -> Result<Vec<Dual2>> {
        let out = self.base.eval2(x)?;
        Ok(self.add_linear(x, out))
    }
}

/// `F_a = F + alpha`, same domain, same differentiability class.
pub fn perturb(f: &SmoothMap, p: &LinearPerturbation) -> Result<SmoothMap> {
    if p.domain_dim() != f.domain_dim() || p.codomain_dim() != f.codomain_dim() {
        return Err(Error::Shape(format!(
            "perturbation is {}x{}, map is R^{} -> R^{}",
            p.codomain_dim(),
            p.domain_dim(),
            f.domain_dim(),
            f.codomain_dim()
        )));
    }
    let program = Arc::new(PerturbedProgram { base: f.program().clone(), alpha: p.alpha.clone() });
    let out = SmoothMap::from_program(f.domain_dim(), f.codomain_dim(), f.order_r(), program)?;
    match f.domain() {
        Some(boxes) => out.with_domain(boxes.to_vec()),
        None => Ok(out),
    }
}

/// Program for `t -> F(f(t))` with the intermediate value checked against `F`'s
/// domain boxes. The chain rule is carried by the scalar arithmetic.
struct ComposedProgram {
    inner: Arc<dyn MapProgram>,
    outer: Arc<dyn MapProgram>,
    outer_domain: Option<Vec<OpenBox>>,
}

impl ComposedProgram {
    fn check_mid(&self, t_display: &[f64], mid: &[f64]) -> Result<()> {
        if let Some(boxes) = &self.outer_domain {
            if !boxes.iter().any(|b| b.contains(mid)) {
                return Err(Error::Domain(format!(
                    "image {mid:?} of chart point {t_display:?} escapes the outer map's domain"
                )));
            }
        }
        Ok(())
    }
}

impl MapProgram for ComposedProgram {
    fn eval0(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mid = self.inner.eval0(x)?;
        self.check_mid(x, &mid)?;
        self.outer.eval0(&mid)
    }
    fn eval1(&self, x: &[Dual]) -> Result<Vec<Dual>> {
        let mid = self.inner.eval1(x)?;
        let vals: Vec<f64> = mid.iter().map(|d| d.val).collect();
        let t: Vec<f64> = x.iter().map(|d| d.val).collect();
        self.check_mid(&t, &vals)?;
        self.outer.eval1(&mid)
    }
    fn eval2(&self, x: &[Dual2]) -> Result<Vec<Dual2>> {
        let mid = self.inner.eval2(x)?;
        let vals: Vec<f64> = mid.iter().map(|d| d.val).collect();
        let t: Vec<f64> = x.iter().map(|d| d.val).collect();
        self.check_mid(&t, &vals)?;
        self.outer.eval2(&mid)
    }
}

/// The chart-local composite `t -> F_a(f(t))` on the chart's box, with first
/// and second derivative oracles through the chain rule.
pub fn compose_chartwise(f_pi: &SmoothMap, chart: &Chart) -> Result<SmoothMap> {
    compose(f_pi, chart.param())
}

/// Composes `outer ∘ inner` for arbitrary smooth maps with chained dimensions.
pub fn compose(outer: &SmoothMap, inner: &SmoothMap) -> Result<SmoothMap> {
    if outer.domain_dim() != inner.codomain_dim() {
        return Err(Error::Shape(format!(
            "cannot chain R^{} -> R^{} into R^{} -> R^{}",
            inner.domain_dim(),
            inner.codomain_dim(),
            outer.domain_dim(),
            outer.codomain_dim()
        )));
    }
    let program = Arc::new(ComposedProgram {
        inner: inner.program().clone(),
        outer: outer.program().clone(),
        outer_domain: outer.domain().map(|b| b.to_vec()),
    });
    let out = SmoothMap::from_program(
        inner.domain_dim(),
        outer.codomain_dim(),
        inner.order_r().min(outer.order_r()),
        program,
    )?;
    match inner.domain() {
        Some(boxes) => out.with_domain(boxes.to_vec()),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{PolyMap, RealFn};
    use crate::geometry::builtin;
    use approx::assert_relative_eq;

    fn zero_map(m: usize, l: usize) -> SmoothMap {
        crate::geometry::f_builtin("constant", m, l).unwrap()
    }

    #[test]
    fn sampling_is_deterministic_per_index() {
        let a = sample_perturbation(2, 1, 1.0, 42, 0).unwrap();
        let b = sample_perturbation(2, 1, 1.0, 42, 0).unwrap();
        let c = sample_perturbation(2, 1, 1.0, 42, 1).unwrap();
        assert_eq!(a.alpha(), b.alpha());
        assert_ne!(a.alpha(), c.alpha());
        assert_eq!(a.provenance(), Some((42, 0)));
    }

    #[test]
    fn scale_zero_is_rejected_and_small_scales_stay_small() {
        assert!(sample_perturbation(2, 1, 0.0, 1, 0).is_err());
        // 10^4 draws at scale 1e-6: on this fixed stream every entry stays
        // within the 6-sigma envelope.
        let mut max_abs: f64 = 0.0;
        for index in 0..5000u64 {
            let p = sample_perturbation(2, 1, 1e-6, 9, index).unwrap();
            for v in p.alpha().iter() {
                max_abs = max_abs.max(v.abs());
            }
        }
        assert!(max_abs < 6e-6, "max |alpha| = {max_abs:e}");
    }

    #[test]
    fn zero_base_map_becomes_the_linear_map() {
        let p = LinearPerturbation::from_matrix(DMatrix::from_row_slice(1, 2, &[3.0, -2.0]))
            .unwrap();
        let f = perturb(&zero_map(2, 1), &p).unwrap();
        assert_eq!(f.value(&[1.0, 1.0]).unwrap(), vec![1.0]);
        assert_eq!(f.value(&[0.5, 2.0]).unwrap(), vec![0.5 * 3.0 + 2.0 * -2.0]);
    }

    #[test]
    fn zero_alpha_is_the_identity_in_all_slots() {
        let base = PolyMap::random(2, 2, 3, &mut crate::rng::stream(5, &[99])).into_map().unwrap();
        let f = perturb(&base, &LinearPerturbation::zero(2, 2)).unwrap();
        let x = [0.3, -0.8];
        assert_eq!(base.value(&x).unwrap(), f.value(&x).unwrap());
        assert_eq!(base.jacobian(&x).unwrap(), f.jacobian(&x).unwrap());
        assert_eq!(base.hessians(&x).unwrap(), f.hessians(&x).unwrap());
    }

    /// x^2 with a row (a, b) becomes x^2 + a x + b y, term by term.
    #[test]
    fn perturbed_square_matches_the_formula() {
        struct Square;
        impl RealFn for Square {
            fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
                vec![x[0] * x[0]]
            }
        }
        let base = SmoothMap::from_fn(2, 1, 2, Square).unwrap();
        let (a, b) = (0.75, -1.5);
        let p = LinearPerturbation::from_matrix(DMatrix::from_row_slice(1, 2, &[a, b])).unwrap();
        let f = perturb(&base, &p).unwrap();
        for &(x, y) in &[(0.5, 0.25), (-1.0, 2.0), (0.0, 0.0)] {
            assert_eq!(f.value(&[x, y]).unwrap()[0], (x * x + a * x) + b * y);
        }
    }

    /// On dyadic data every operation is exact, so affinity in alpha holds with
    /// zero floating-point error; the jacobian offset is alpha bit for bit.
    #[test]
    fn affine_in_alpha_exactly_on_dyadic_data() {
        let base =
            PolyMap::new(2, vec![vec![(1.0, vec![2, 0]), (0.5, vec![0, 1])]]).into_map().unwrap();
        let a1 = LinearPerturbation::from_matrix(DMatrix::from_row_slice(1, 2, &[0.25, -0.5]))
            .unwrap();
        let a2 = LinearPerturbation::from_matrix(DMatrix::from_row_slice(1, 2, &[0.125, 2.0]))
            .unwrap();
        let sum = LinearPerturbation::from_matrix(a1.alpha() + a2.alpha()).unwrap();

        let f1 = perturb(&base, &a1).unwrap();
        let f12 = perturb(&base, &sum).unwrap();
        for &(x, y) in &[(0.5, 0.25), (-0.75, 1.5), (2.0, -3.0)] {
            let diff = f12.value(&[x, y]).unwrap()[0] - f1.value(&[x, y]).unwrap()[0];
            let linear = a2.alpha()[(0, 0)] * x + a2.alpha()[(0, 1)] * y;
            assert_eq!(diff.to_bits(), linear.to_bits());

            let j_base = base.jacobian(&[x, y]).unwrap();
            let j_pert = f1.jacobian(&[x, y]).unwrap();
            let offset = j_pert - j_base;
            assert_eq!(offset, a1.alpha().clone());
        }
    }

    /// Generic data: the jacobian offset equals alpha up to one rounding of
    /// each entry (the oracle performs a single addition per entry).
    #[test]
    fn jacobian_offset_is_alpha_to_one_ulp() {
        let mut rng = crate::rng::stream(17, &[1]);
        let base = PolyMap::random(2, 2, 3, &mut rng).into_map().unwrap();
        let p = sample_perturbation(2, 2, 1.0, 17, 0).unwrap();
        let f = perturb(&base, &p).unwrap();
        let x = [0.37, -0.91];
        let jb = base.jacobian(&x).unwrap();
        let jp = f.jacobian(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let err = (jp[(i, j)] - jb[(i, j)]) - p.alpha()[(i, j)];
                let scale = jb[(i, j)].abs().max(p.alpha()[(i, j)].abs()).max(1.0);
                assert!(err.abs() <= 2.0 * f64::EPSILON * scale);
            }
        }
    }

    #[test]
    fn hessians_pass_through_unchanged() {
        let base = PolyMap::random(2, 1, 3, &mut crate::rng::stream(3, &[7])).into_map().unwrap();
        let p = sample_perturbation(2, 1, 1.0, 3, 0).unwrap();
        let f = perturb(&base, &p).unwrap();
        let x = [0.2, 0.6];
        assert_eq!(base.hessians(&x).unwrap(), f.hessians(&x).unwrap());
    }

    #[test]
    fn composite_jacobian_is_the_chain_rule_product() {
        let entry = builtin("circle_in_R3").unwrap();
        let f_base = crate::geometry::f_builtin("proj_2", 3, 2).unwrap();
        let p = sample_perturbation(3, 2, 1.0, 21, 4).unwrap();
        let f_pi = perturb(&f_base, &p).unwrap();
        for chart in entry.manifold.charts() {
            let comp = compose_chartwise(&f_pi, chart).unwrap();
            for &t in &[-1.3, 0.2, 1.7] {
                let jf = chart.param().jacobian(&[t]).unwrap();
                let y = chart.ambient(&[t]).unwrap();
                let jg = f_pi.jacobian(&y).unwrap();
                let chained = &jg * &jf;
                let direct = comp.jacobian(&[t]).unwrap();
                assert_relative_eq!(direct, chained, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn linear_through_linear_has_zero_hessians() {
        let inner = crate::geometry::f_builtin("proj_2", 2, 2).unwrap();
        let outer = perturb(
            &zero_map(2, 2),
            &sample_perturbation(2, 2, 1.0, 11, 0).unwrap(),
        )
        .unwrap();
        let comp = compose(&outer, &inner).unwrap();
        let hs = comp.hessians(&[0.4, -0.2]).unwrap();
        for h in hs {
            assert_eq!(h.norm(), 0.0);
        }
        let j_outer = outer.jacobian(&[0.0, 0.0]).unwrap();
        let j_comp = comp.jacobian(&[0.9, 0.1]).unwrap();
        assert_eq!(j_comp, j_outer);
    }

    #[test]
    fn escaping_the_outer_domain_is_a_domain_error() {
        // F defined only on a box around the north half of the circle.
        let entry = builtin("circle_in_R2").unwrap();
        let f = zero_map(2, 1)
            .with_domain(vec![OpenBox::new(vec![(-2.0, 2.0), (0.5, 2.0)]).unwrap()])
            .unwrap();
        let chart = &entry.manifold.charts()[0];
        let comp = compose_chartwise(&f, chart).unwrap();
        // t = 0 maps to (0, -1), far outside F's box.
        match comp.value(&[0.0]) {
            Err(Error::Domain(msg)) => assert!(msg.contains("[0.0]"), "message: {msg}"),
            other => panic!("expected domain error, got {other:?}"),
        }
        // t = 1.9 maps to y = 0.566... > 0.5, inside the strip.
        assert!(comp.value(&[1.9]).is_ok());
    }
}
