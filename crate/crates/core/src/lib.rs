//! Tool retrieval with a trainable dense encoder and a query rewriter that
//! are trained against each other.

pub mod catalog;
pub mod cotrain;
pub mod dpo;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod optim;
pub mod rewriter;
pub mod rng;

pub use error::{Error, Result};
