//! Graph prompt tuning with importance-based pruning of prompt units, on top
//! of a small reverse-mode autodiff and a two-layer GCN.

pub mod autodiff;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod hetgraph;
pub mod optim;
pub mod pretrain;
pub mod prompting;
pub mod pruning;

pub use error::{Error, Result};
