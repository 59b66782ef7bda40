//! Relational table learning over foreign-key graphs.
//!
//! The crate turns a set of typed tables linked by foreign keys into a
//! heterogeneous graph, encodes the target table with a column-attention
//! table encoder, propagates embeddings with a graph-convolution encoder,
//! and co-trains both against labels on the target table. Everything runs
//! on a small built-in f64 autodiff engine; no external ML runtime.

pub mod bridge;
pub mod cli;
pub mod datasets;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod init;
pub mod llm;
pub mod table;
pub mod tensor;
pub mod tnn;

pub use error::{Error, Result};
