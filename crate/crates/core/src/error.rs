use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("content hash mismatch: manifest says {expected}, items hash to {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("invalid item {item_id:?}: {message}")]
    InvalidItem { item_id: String, message: String },
    #[error("invalid label: {0}")]
    InvalidLabel(String),
    #[error("unknown item id {0:?}")]
    UnknownItem(String),
    #[error("drop requested for item {0:?} but drops are only allowed for ctr datasets")]
    DropNotAllowed(String),
    #[error("more than one decision for item {0:?}")]
    DuplicateDecision(String),
    #[error("item {0:?} is in the dev split and cannot be relabeled")]
    DevItem(String),
    #[error("versions {0} and {1} do not share lineage")]
    UnrelatedVersions(String, String),
    #[error("task mismatch: expected {expected}, found {found}")]
    TaskMismatch { expected: String, found: String },
    #[error("missing prediction for item {0:?}")]
    MissingPrediction(String),
    #[error("duplicate prediction for item {0:?}")]
    DuplicatePrediction(String),
    #[error("invalid prediction for item {item_id:?}: {message}")]
    InvalidPrediction { item_id: String, message: String },
    #[error("unknown entity class {0:?}")]
    UnknownEntityClass(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid metric input: {0}")]
    Metric(String),
    #[error("round {requested} is not valid here (current open round: {open:?})")]
    StaleRound { requested: u32, open: Option<u32> },
    #[error("no open round")]
    NoOpenRound,
    #[error("round {0} is still open for submissions")]
    RoundOpen(u32),
    #[error("round {0} is closed")]
    RoundClosed(u32),
    #[error("unknown round {0}")]
    UnknownRound(u32),
    #[error("item {item_id:?} was not queued in round {round}")]
    NotQueued { item_id: String, round: u32 },
    #[error("item {item_id:?} is leased to {holder}")]
    Leased { item_id: String, holder: String },
    #[error("invalid decision for item {item_id:?}: {message}")]
    InvalidDecision { item_id: String, message: String },
    #[error("store at {0} is locked by another process")]
    Locked(PathBuf),
    #[error("invalid model checkpoint: {0}")]
    Checkpoint(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by the data or the request rather than by the
    /// filesystem or a corrupt file.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. }
                | Error::Json(_)
                | Error::Malformed { .. }
                | Error::HashMismatch { .. }
                | Error::Checkpoint(_)
                | Error::Locked(_)
        )
    }
}
