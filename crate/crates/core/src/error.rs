use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed system description: {0}")]
    Parse(#[from] serde_json::Error),

    /// A structural or numeric check on the system description failed.
    /// `entity` names the offending bus, generator or line.
    #[error("invalid system description ({entity}): {reason}")]
    Invalid { entity: String, reason: String },

    #[error("state has {got} bits but the system has {expected} components")]
    StateWidth { expected: usize, got: usize },

    #[error("component {0} is not free in lattice {1}")]
    NotFree(usize, String),

    #[error("non-monotone structure function: lattice minimum fails but maximum is normal")]
    Monotonicity,

    #[error("LP solver failure on state {state}: {reason}")]
    Lp { state: String, reason: String },

    #[error("no failed region: the failed-lattice set is empty")]
    NoFailedRegion,

    #[error("failed region sampled {samples} states with zero mean shedding; failed lattices are misclassified")]
    ZeroMeanShed { samples: u64 },

    #[error("state enumeration of {0} states exceeds the guard")]
    EnumerationTooLarge(u128),

    #[error("invalid configuration: {0}")]
    Config(String),
}
