use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a precondition (wrong sign, out of range, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Negative evolution time.
    #[error("evolution time must be nonnegative, got {0}")]
    NegativeTime(f64),

    /// Outcome probability is 0 or 1 while its derivative is nonzero; the
    /// Fisher information diverges.
    #[error("singular information: p_plus = {p_plus} with nonzero derivative {dp_plus}")]
    SingularInformation { p_plus: f64, dp_plus: f64 },

    /// A Bayesian update was fed a likelihood that vanishes on the whole grid.
    #[error("inconsistent data: likelihood is zero everywhere on the grid")]
    InconsistentData,

    /// The posterior has no unique peak (e.g. it is still flat).
    #[error("posterior peak is not unique")]
    NonUniqueMaximum,

    /// The inversion estimator saw no net contrast: (N+ - N-)/N <= 0.
    #[error("contrast exhausted: (N+ - N-)/N = {0} <= 0, outside the decay model")]
    ContrastExhausted(f64),

    /// All outcomes were +1; the data is consistent with no decay at all.
    #[error("no observed decay: estimated dephasing time is unbounded")]
    InfiniteDephasingTime,

    /// Zero Fisher information: the Cramer-Rao bound is unbounded.
    #[error("zero Fisher information: precision bound is infinite")]
    InfinitePrecisionBound,

    /// The least-squares objective has no bracketable interior minimum.
    #[error("fit failure: {0}")]
    FitFailure(String),

    /// Invalid run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Unknown figure identifier passed to `reproduce`.
    #[error("unknown figure id: {0}")]
    UnknownFigure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
