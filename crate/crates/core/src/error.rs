use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("malformed config: {0}")]
    Parse(#[source] serde_json::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum GenomeError {
    #[error("genome has {actual} entries, layout expects {expected}")]
    Length { expected: usize, actual: usize },
    #[error("checkpoint dimensions {found} do not match configured {expected}")]
    Dimensions { expected: String, found: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum CmaError {
    #[error("tell received {genomes} genomes but {fitnesses} fitness values")]
    Mismatch { genomes: usize, fitnesses: usize },
    #[error("expected {expected} candidates, got {actual}")]
    Population { expected: usize, actual: usize },
    #[error("candidate has dimension {actual}, strategy has {expected}")]
    Dimension { expected: usize, actual: usize },
}

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Cma(#[from] CmaError),
    #[error("file not found: {0}")]
    NotFound(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("unsupported checkpoint schema version {0}")]
    Schema(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
