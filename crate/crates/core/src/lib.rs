//! Multilingual passage retrieval toolkit.
//!
//! Stages: sparse (BM25) and dense retrieval, hybrid fusion and candidate
//! pooling, training-data forging (pool negatives, query-to-query transfer,
//! pseudo labels), pair scoring and reranking, correlation-aware run
//! ensembling, and nDCG / recall evaluation.

pub mod corpus;
pub mod dense;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod forge;
pub mod fusion;
pub mod rerank;
pub mod pipeline;
pub mod rng;
pub mod run;
pub mod sparse;
pub mod synth;
pub mod textio;
pub mod validate;

pub use error::{Error, Result};
