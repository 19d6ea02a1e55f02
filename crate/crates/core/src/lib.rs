//! Incremental top-down PCFG parsing and syntactic language modeling.
//!
//! Trees are stop-augmented and left-factored, a relative-frequency PCFG is
//! induced from them, and rule probabilities are refined by interpolating
//! conditional estimates over tree-walking context functions. The beam parser
//! works left to right through the words, so the probability mass left on its
//! queues yields conditional word probabilities as a by-product.

pub mod check;
pub mod conditioning;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod grammar;
pub mod heads;
pub mod langmodel;
pub mod lookahead;
pub mod mixture;
pub mod model_file;
pub mod oracle;
pub mod parser;
pub mod pipeline;
pub mod report;
pub mod state;
pub mod treebank;

pub use error::{Error, Result};
