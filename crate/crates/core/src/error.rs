use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A geometric singularity, e.g. a target coincident with an element.
    #[error("singular geometry: {0}")]
    Singularity(String),

    /// Mismatched dimensions between arguments.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A parameter carries zero Fisher information.
    #[error("unidentifiable parameter(s): {}", .0.join(", "))]
    Unidentifiable(Vec<String>),

    /// The Fisher information matrix is singular; the names span its null space.
    #[error("singular Fisher information, null space involves: {}", .0.join(", "))]
    SingularFim(Vec<String>),

    /// A near-field correction drove `1 + delta` to a non-positive value.
    #[error("near-field correction out of range: 1 + delta = {0}")]
    CorrectionOutOfRange(f64),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
