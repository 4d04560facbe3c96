use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("channel `{channel}`: time {t} outside [{start}, {end}]")]
    OutOfRange {
        channel: String,
        t: f64,
        start: f64,
        end: f64,
    },

    #[error("non-finite value at t = {t} s: {what}")]
    NonFinite { t: f64, what: String },

    #[error("non-finite function value while perturbing component {component}")]
    JacobianNonFinite { component: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid model constants: {0}")]
    Constants(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular {what} at step {step}")]
    Singular { what: &'static str, step: usize },

    #[error("filter diverged at step {step}")]
    Divergence { step: usize },

    #[error("recipe aborted at iteration {iteration}: {source}")]
    RecipeAborted {
        iteration: usize,
        last_theta: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("zero variance for parameter `{0}`")]
    ZeroVariance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the error stems from numeric breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NonFinite { .. }
            | Error::JacobianNonFinite { .. }
            | Error::Singular { .. }
            | Error::Divergence { .. } => true,
            Error::RecipeAborted { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
