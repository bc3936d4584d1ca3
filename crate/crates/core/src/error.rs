use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} out of domain: {value}")]
    Domain { what: String, value: f64 },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("explosive autocorrelation estimate (rho = {rho})")]
    ExplosiveAutocorrelation { rho: f64 },

    #[error("inefficiency signal absent: {0}")]
    InefficiencySignalAbsent(String),

    #[error("zero-variance series")]
    ZeroVarianceSeries,

    #[error("near-singular lag matrix")]
    SingularLagMatrix,

    #[error("nonstationary sieve: fitted autoregression has a root on or inside the unit circle")]
    NonstationarySieve,

    #[error("at least two spatial units required (got {0})")]
    TooFewUnits(usize),

    #[error("at least {} time points required (got {got})", number_word(*.need))]
    TooFewPeriods { got: usize, need: usize },

    #[error(
        "could not draw inefficiency inside (0, 1) for unit {unit}, period {period} after {draws} draws; use a smaller sigma_eps"
    )]
    InefficiencyRejection {
        unit: usize,
        period: usize,
        draws: usize,
    },

    #[error("unit {unit}: {source}")]
    InUnit {
        unit: String,
        #[source]
        source: Box<Error>,
    },

    #[error("period {period}: bootstrap resample stayed rank-deficient after {retries} redraws")]
    ResampleRankDeficient { period: String, retries: usize },

    #[error("csv row {row}: {message}")]
    CsvRow { row: usize, message: String },

    #[error("unknown column '{0}'")]
    UnknownColumn(String),

    #[error("unbalanced panel: missing cell (unit {unit}, period {period})")]
    MissingCell { unit: String, period: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("power cell {key} failed: {errors} of {attempted} replications errored (first: {first})")]
    CellFailed {
        key: String,
        errors: usize,
        attempted: usize,
        first: String,
    },
}

impl Error {
    /// True for failures of the numerical procedures, as opposed to bad
    /// input or configuration.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::RankDeficient { .. }
            | Error::ExplosiveAutocorrelation { .. }
            | Error::InefficiencySignalAbsent(_)
            | Error::ZeroVarianceSeries
            | Error::SingularLagMatrix
            | Error::NonstationarySieve
            | Error::InefficiencyRejection { .. }
            | Error::ResampleRankDeficient { .. }
            | Error::CellFailed { .. } => true,
            Error::InUnit { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_unit(self, unit: impl Into<String>) -> Error {
        Error::InUnit {
            unit: unit.into(),
            source: Box::new(self),
        }
    }
}

fn number_word(n: usize) -> String {
    match n {
        2 => "two".into(),
        3 => "three".into(),
        _ => n.to_string(),
    }
}
