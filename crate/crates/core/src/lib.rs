//! Sequential transfer-learning experiments at desk scale.
//!
//! A miniature transformer encoder is trained through an ordered list of task
//! stages (masked-LM, NER, question classification, span-extraction QA) and
//! evaluated zero-shot on reading-comprehension dev sets from other domains.
//!
//! * [`datakit`] parses the task formats, builds the word-level vocabulary and
//!   generates synthetic domains.
//! * [`model`] holds the encoder, task heads, hand-written backward pass,
//!   Adam and checkpoint I/O.
//! * [`pipeline`] chains stages into regimens and regimens into grids.
//! * [`eval`] scores answers with SQuAD semantics and probes forgetting.
//! * [`report`] renders result tables.

pub mod datakit;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod report;

pub use error::{Error, Result};
