//! Drug-repurposing experiment engine: sequence corpora, antiviral label
//! encodings, dataset balancing, from-scratch CNN/LSTM models and reports.

pub mod corpus;
pub mod dataset;
pub mod error;
pub mod labels;
pub mod manifest;
pub mod models;
pub mod report;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
