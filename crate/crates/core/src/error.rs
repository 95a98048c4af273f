use std::path::PathBuf;

use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid state index {index} (scenario has {count} states)")]
    InvalidState { index: usize, count: usize },

    #[error("invalid group index {index} (scenario has {count} groups)")]
    InvalidGroup { index: usize, count: usize },

    #[error("unknown traveler {0}")]
    UnknownTraveler(usize),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("empty conditioning event: group {group} never receives policy {policy}")]
    EmptyConditioning { group: usize, policy: usize },

    #[error("size cap exceeded: {what} needs {needed}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no grid flow is an epsilon-Wardrop point of the prior-averaged game (best gap {best_gap:e})")]
    NoGridWardrop { best_gap: f64 },

    #[error("no residue completes f^-kj")]
    NoResidue,

    #[error("n = {n} is incompatible with the partition profile; admissible n up to {max}: {admissible:?}")]
    IncompatibleTravelerCount {
        n: usize,
        max: usize,
        admissible: Vec<usize>,
    },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error(transparent)]
    Lp(#[from] LpError),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(vec![msg.into()])
    }
}
