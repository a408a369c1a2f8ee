use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("delimited text error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: sequence data before the first '>' header")]
    OrphanSequence { line: usize },

    #[error("line {line}: header without an accession")]
    MissingAccession { line: usize },

    #[error("empty body for {accession}")]
    EmptyBody { accession: String },

    #[error("invalid residue '{residue}' in {accession} at offset {offset}")]
    InvalidResidue {
        accession: String,
        residue: char,
        offset: usize,
    },

    #[error("duplicate accession {accession}")]
    DuplicateAccession { accession: String },

    #[error("missing mandatory column '{column}'")]
    MissingColumn { column: String },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: empty value in column '{column}'")]
    EmptyField { row: usize, column: String },

    #[error("row {row}: unknown phase label '{label}'")]
    UnknownPhase { row: usize, label: String },

    #[error("unmapped species '{raw}'")]
    UnmappedSpecies { raw: String },

    #[error("alias table maps to names outside the virus list: {names:?}")]
    AliasOutsideVirusList { names: Vec<String> },

    #[error("{count} distinct drugs exceed the registry capacity of {capacity}")]
    TooManyDrugs { count: usize, capacity: usize },

    #[error("drug registry has {count} drugs, {expected} required")]
    RegistrySize { count: usize, expected: usize },

    #[error("virus '{virus}' is not in the canonical virus list")]
    UnknownVirus { virus: String },

    #[error("species '{species}' has no label vector")]
    MissingLabels { species: String },

    #[error("label length {found} does not match expected {expected}")]
    LabelLength { expected: usize, found: usize },

    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },

    #[error("backward called on a stale tape")]
    StaleTape,

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("targets must be 0 or 1, found {value}")]
    NonBinaryTarget { value: f64 },

    #[error("holdout species '{species}' not found in the data")]
    HoldoutNotFound { species: String },

    #[error("split produced an empty {side} side")]
    EmptySplit { side: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}: empty input")]
    EmptyInput(&'static str),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("encoding does not match model kind: {0}")]
    EncodingMismatch(String),

    #[error("{stage} artifacts were produced under config {recorded}, expected {expected}; rerun the stage or pass --allow-config-mismatch")]
    ConfigMismatch { stage: String, recorded: String, expected: String },

    #[error("{path} changed since the {stage} stage wrote it")]
    ArtifactChanged { stage: String, path: PathBuf },

    #[error("missing upstream artifact {path}; run the producing stage first")]
    MissingArtifact { path: PathBuf },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable, machine-parsable class name used by the CLI on failure.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Stream(_) => "io",
            Error::Csv(_) | Error::Json(_) => "format",
            Error::OrphanSequence { .. }
            | Error::MissingAccession { .. }
            | Error::EmptyBody { .. }
            | Error::InvalidResidue { .. }
            | Error::DuplicateAccession { .. } => "fasta",
            Error::MissingColumn { .. }
            | Error::RowArity { .. }
            | Error::EmptyField { .. }
            | Error::UnknownPhase { .. } => "table",
            Error::UnmappedSpecies { .. } | Error::AliasOutsideVirusList { .. } => "species",
            Error::TooManyDrugs { .. }
            | Error::RegistrySize { .. }
            | Error::UnknownVirus { .. }
            | Error::MissingLabels { .. }
            | Error::LabelLength { .. } => "labels",
            Error::Shape { .. }
            | Error::NonFinite { .. }
            | Error::StaleTape
            | Error::NonScalarLoss { .. }
            | Error::NonBinaryTarget { .. } => "tensor",
            Error::HoldoutNotFound { .. } | Error::EmptySplit { .. } => "split",
            Error::Config(_) => "config",
            Error::EmptyInput(_) => "empty-input",
            Error::Divergence { .. } => "divergence",
            Error::Checkpoint(_) => "checkpoint",
            Error::EncodingMismatch(_) => "encoding",
            Error::ConfigMismatch { .. } => "config-mismatch",
            Error::MissingArtifact { .. } => "missing-artifact",
            Error::ArtifactChanged { .. } => "artifact-changed",
            Error::Internal(_) => "internal",
        }
    }
}
