use thiserror::Error;

/// Errors shared across all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// The requested truncation cannot hold the state to the required tail
    /// tolerance.
    #[error("truncation insufficient: tail bound {tail:.3e} exceeds tolerance {tol:.3e} at n_max = {n_max}")]
    TruncationInsufficient { tail: f64, tol: f64, n_max: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A distribution failed its normalization or range invariants.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// Moment order exceeds what the truncated statistics can support.
    #[error("moment order {order} exceeds truncation n_max = {n_max}")]
    OrderExceedsTruncation { order: usize, n_max: usize },

    /// Normalization by a vanishing mean photon number.
    #[error("mean photon number is zero; normalized moments are undefined")]
    VacuumOnly,

    /// A series evaluation stopped because its terms started growing.
    #[error("series diverged at order {order}; partial sum {partial:.6e}")]
    SeriesDivergence { order: usize, partial: f64 },

    #[error("estimator input has a zero marginal: {0}")]
    ZeroMarginal(String),

    /// Linear system too badly conditioned to invert reliably.
    #[error("ill-conditioned system: condition number {cond:.3e} exceeds {limit:.3e}")]
    IllConditioned { cond: f64, limit: f64 },

    /// Nonlinear fit failed to converge within the iteration cap.
    #[error("fit did not converge after {iterations} iterations (residual {residual:.6e})")]
    FitDidNotConverge { iterations: usize, residual: f64 },

    #[error("fit degenerate: {0}")]
    FitDegenerate(String),

    /// Herald outcome has zero success probability on the given state.
    #[error("herald success probability is zero")]
    ZeroHeraldProbability,

    /// Requested coincidences-to-accidentals ratio is not reachable.
    #[error("unattainable CAR {car}: must exceed {min}")]
    UnattainableCar { car: f64, min: f64 },

    /// Too many Monte-Carlo perturbation trials were degenerate.
    #[error("{discarded} of {trials} Monte-Carlo trials degenerate (> 1% limit)")]
    DegenerateEnsemble { discarded: usize, trials: usize },

    #[error("config error at {path}: {reason}")]
    Config { path: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
