#![forbid(unsafe_code)]

//! Numerical genericity checks for linearly perturbed mappings on charted manifolds.
//!
//! The setting: a manifold `N` of dimension `n` presented by charts whose
//! parametrizations land directly in an ambient `R^m` (the chart map plays the
//! role of `f : N -> U ⊂ R^m`), together with a map `F : U -> R^l`. Perturbing
//! `F` by a linear map with coefficient matrix `alpha` gives `F_a = F + alpha·x`,
//! and for almost every `alpha` the composite `F_a ∘ f` enjoys strong regularity:
//! depending on the dimension pair `(n, l)` it is a Morse function, an immersion,
//! has bounded corank, is injective, has normal crossings, or is an embedding.
//!
//! This crate makes those statements checkable at desk scale:
//!
//! * [`calculus`] — forward-mode first/second derivatives, finite-difference
//!   oracles, and tolerance-aware numerical rank.
//! * [`geometry`] — charts, open boxes, deterministic point sampling, and a
//!   catalog of test manifolds and maps.
//! * [`perturbation`] — the coefficient matrix `alpha`, its deterministic
//!   sampling, and the perturbed/composite map constructors.
//! * [`strata`] — integer codimension arithmetic for the corank strata and the
//!   diagonal, the two block-matrix rank certificates, and a sampling estimator
//!   for the spanning order `s_f` of an injective map.
//! * [`verifiers`] — property checkers with explicit tolerances and structured
//!   counterexample evidence, plus local transversality tests.
//! * [`experiments`] — a deterministic Monte Carlo harness sweeping random
//!   perturbations and reporting empirical failure frequencies.
//!
//! Every random draw comes from a counter-keyed stream ([`rng`]), so all results
//! are reproducible bit-for-bit at any worker count.

pub mod calculus;
pub mod experiments;
pub mod geometry;
pub mod perturbation;
pub mod rng;
pub mod strata;
pub mod verifiers;

mod error;

pub use error::{Error, Result};
