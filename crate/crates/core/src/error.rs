use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes of the toolkit.
///
/// Usage errors (bad arguments, unknown catalog names, malformed config) are
/// distinct from numerical errors (domain escapes, ill-conditioned pivots) so
/// the CLI can map them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix or map dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A point left an open domain box, or an image escaped the outer map's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A derivative of higher order than the declared smoothness was requested.
    #[error("map is C^{order_r}; derivative order {requested} is unavailable")]
    Regularity { order_r: u32, requested: u32 },

    /// Unknown catalog name.
    #[error("unknown catalog entry `{name}`; valid entries: {valid}")]
    Catalog { name: String, valid: String },

    /// Invalid argument value.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The pivot block of the local stratum equations is numerically singular.
    #[error("ill-conditioned pivot block (cond ~ {cond:.3e}) in local stratum equations")]
    Conditioning { cond: f64 },

    /// A verifier's hypothesis is not met (wrong codomain dimension, non-compact
    /// manifold for an embedding check, ...).
    #[error("hypothesis not satisfied: {0}")]
    Predicate(String),

    /// NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Two sampled points mapped to the same image while injectivity was assumed.
    #[error("map is not injective at sampling precision: {0}")]
    NotInjective(String),

    /// Malformed experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::Regularity { .. }
                | Error::Catalog { .. }
                | Error::Argument(_)
                | Error::Predicate(_)
                | Error::Config(_)
                | Error::Io(_)
        )
    }
}
