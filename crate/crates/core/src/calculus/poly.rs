//! Polynomial map programs, mostly exercised as randomized test subjects.

use rand::Rng;
use rand_distr::StandardNormal;

use super::dual::Real;
use super::map::{RealFn, SmoothMap};
use crate::Result;

/// One output component is a sum of monomial terms `coef * x^e`.
#[derive(Clone, Debug)]
pub struct PolyMap {
    domain_dim: usize,
    components: Vec<Vec<(f64, Vec<u32>)>>,
}

impl PolyMap {
    pub fn new(domain_dim: usize, components: Vec<Vec<(f64, Vec<u32>)>>) -> Self {
        assert!(components.iter().all(|c| c.iter().all(|(_, e)| e.len() == domain_dim)));
        PolyMap { domain_dim, components }
    }

    /// Dense random polynomial map `R^n -> R^l` with standard normal
    /// coefficients on every monomial of total degree at most `degree`.
    pub fn random<R: Rng>(n: usize, l: usize, degree: u32, rng: &mut R) -> Self {
        let monomials = monomials_up_to(n, degree);
        let components = (0..l)
            .map(|_| {
                monomials
                    .iter()
                    .map(|e| (rng.sample::<f64, _>(StandardNormal), e.clone()))
                    .collect()
            })
            .collect();
        PolyMap { domain_dim: n, components }
    }

    pub fn into_map(self) -> Result<SmoothMap> {
        let (n, l) = (self.domain_dim, self.components.len());
        SmoothMap::from_fn(n, l, 2, self)
    }
}

impl RealFn for PolyMap {
    fn eval<S: Real>(&self, x: &[S]) -> Vec<S> {
        self.components
            .iter()
            .map(|terms| {
                let mut acc = S::constant(0.0);
                for (coef, exps) in terms {
                    let mut term = S::constant(*coef);
                    for (xi, &e) in x.iter().zip(exps) {
                        if e > 0 {
                            term = term * xi.powi(e as i32);
                        }
                    }
                    acc = acc + term;
                }
                acc
            })
            .collect()
    }
}

/// All exponent multi-indices over `n` variables with total degree `<= degree`.
fn monomials_up_to(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut current = vec![0u32; n];
    fn rec(out: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, pos: usize, remaining: u32) {
        if pos == current.len() {
            out.push(current.clone());
            return;
        }
        for e in 0..=remaining {
            current[pos] = e;
            rec(out, current, pos + 1, remaining - e);
        }
        current[pos] = 0;
    }
    rec(&mut out, &mut current, 0, degree);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_count_matches_binomial() {
        // C(n + d, d) monomials of degree <= d in n variables.
        assert_eq!(monomials_up_to(2, 3).len(), 10);
        assert_eq!(monomials_up_to(3, 3).len(), 20);
    }

    #[test]
    fn hand_built_polynomial_evaluates() {
        // f(x, y) = x^2 y  =>  value 2 at (1, 2), jacobian (2xy, x^2) = (4, 1)
        let p = PolyMap::new(2, vec![vec![(1.0, vec![2, 1])]]);
        let m = p.into_map().unwrap();
        assert_eq!(m.value(&[1.0, 2.0]).unwrap(), vec![2.0]);
        let j = m.jacobian(&[1.0, 2.0]).unwrap();
        assert_eq!((j[(0, 0)], j[(0, 1)]), (4.0, 1.0));
    }
}
