use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("quadrature did not converge for `{label}` (estimate {value:e}, error {error:e})")]
    NonConvergence {
        label: String,
        value: f64,
        error: f64,
    },

    #[error("config parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        line: Option<usize>,
        message: String,
    },

    #[error("missing required fields: {}", fields.join(", "))]
    MissingFields { fields: Vec<String> },

    #[error("field `{field}` needs an explicit unit (got `{value}`)")]
    MissingUnit { field: String, value: String },

    #[error("field `{field}`: unknown unit `{unit}`")]
    UnknownUnit { field: String, unit: String },

    #[error("invalid `{field}`: {message}")]
    Invariant { field: String, message: String },

    #[error("Fock truncation too small: tail mass {tail:e}; try n_max >= {suggested}")]
    Truncation { tail: f64, suggested: usize },

    #[error("degenerate denominator in {0}")]
    DegenerateDenominator(&'static str),

    #[error("no write emission: integrated write flux {0:e} is below 1e-30")]
    NoWriteEmission(f64),

    #[error("waveform has no half-maximum crossing")]
    NoCrossing,

    #[error("empty search bracket [{lo:e}, {hi:e}]")]
    EmptyBracket { lo: f64, hi: f64 },

    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::MissingFields { .. }
                | Error::MissingUnit { .. }
                | Error::UnknownUnit { .. }
                | Error::Invariant { .. }
                | Error::EmptyBracket { .. }
                | Error::UnknownFigure(_)
                | Error::Io(_)
        )
    }
}
