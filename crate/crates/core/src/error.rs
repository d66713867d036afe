use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("unknown agent id {0}")]
    UnknownAgent(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("zero polynomial has no isolated roots")]
    ZeroPolynomial,

    #[error("assignment infeasible: {0}")]
    Infeasible(String),

    #[error("brute-force enumeration refused for {rows} rows (limit {limit})")]
    SizeGuard { rows: usize, limit: usize },

    #[error("protocol invariant violated at t={t}: {msg}")]
    ProtocolViolation { t: f64, msg: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
