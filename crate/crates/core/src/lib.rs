//! Pre-trained dimension reduction and bootstrapped evaluation of user-level
//! embeddings for small-sample prediction tasks.

pub mod aggregate;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fkp;
pub mod fsutil;
pub mod linalg;
pub mod linmod;
pub mod reduce;
pub mod report;
pub mod seed;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
