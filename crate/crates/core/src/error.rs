use thiserror::Error;

/// Errors raised by the library.
///
/// The variants fall into three families that the command-line front end maps
/// to distinct exit codes: bad input ([`Error::InvalidSpace`],
/// [`Error::Parameter`], [`Error::Domain`], [`Error::Precondition`],
/// [`Error::Io`], [`Error::Json`]), structural failures detected after a
/// construction ([`Error::DyadicAxiom`], [`Error::Internal`]), and budget or size limits
/// ([`Error::Capability`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {axiom} violated ({detail})")]
    InvalidSpace { axiom: &'static str, detail: String },

    #[error("invalid parameter `{name}`: {detail}")]
    Parameter { name: &'static str, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("dyadic axiom `{axiom}` failed: {detail}")]
    DyadicAxiom { axiom: &'static str, detail: String },

    /// A computed object failed a property it holds by construction.
    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error("capability exhausted: {0}")]
    Capability(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, detail: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            detail: detail.into(),
        }
    }

    pub(crate) fn domain(detail: impl Into<String>) -> Self {
        Error::Domain(detail.into())
    }

    /// True for failed invariants rather than bad input or exhausted budgets.
    pub fn is_violation(&self) -> bool {
        matches!(self, Error::DyadicAxiom { .. } | Error::Internal(_))
    }

    /// True for errors caused by a size or budget limit rather than bad input.
    pub fn is_capability(&self) -> bool {
        matches!(self, Error::Capability(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
