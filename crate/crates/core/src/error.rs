use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent tabular input.
    #[error("schema error: {0}")]
    Schema(String),

    /// The line graph is not a tree rooted at the slack bus.
    #[error("topology error at bus {bus}: {reason}")]
    Topology { bus: u32, reason: String },

    /// A parameter is outside its allowed range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A bus voltage collapsed during the sweep iterations.
    #[error("voltage collapse at bus {bus}: |V| = {v_pu:.4} p.u. (iteration {iteration})")]
    VoltageCollapse {
        bus: u32,
        v_pu: f64,
        iteration: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Schema(_) | Error::Topology { .. } | Error::Config(_) | Error::Toml(_)
        )
    }
}
