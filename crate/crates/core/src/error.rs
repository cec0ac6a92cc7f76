use thiserror::Error;

use crate::model::Diagnostic;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Malformed(String),

    #[error("layer `{id}`: unknown layer kind `{kind}`")]
    UnknownKind { id: String, kind: String },

    #[error("layer `{id}`: {msg}")]
    BadLayer { id: String, msg: String },

    #[error("edge references unknown layer `{0}`")]
    DanglingEdge(String),

    #[error("duplicate layer id `{0}`")]
    DuplicateId(String),

    #[error("invalid model:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("algorithm {algo} is not available for layer `{layer}`")]
    UnavailableAlgo { layer: String, algo: String },

    #[error("reduction precondition violated: {0}")]
    Reduction(String),

    #[error("graph is not series-parallel; irreducible residual graph:\n{0}")]
    NotSeriesParallel(String),

    #[error("instance too large for exhaustive search ({0} assignments)")]
    TooLarge(u128),

    #[error("no feasible systolic-array shape within the DSP budget")]
    NoFeasibleShape,

    #[error("inconsistent dataflow table: {0}")]
    Dataflow(String),

    #[error("{0}")]
    Domain(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn format_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n")
}
