//! Data model, sequence formats, decoding, metrics and span alignment for
//! skill-controlled question generation.
//!
//! Model backends plug in through [`backend::Seq2SeqBackend`]; training lives
//! in `skillforge-modelkit`.

pub mod alignment;
pub mod backend;
pub mod corpus;
pub mod decoding;
pub mod metrics;
pub mod seqformat;
pub mod synthetic;
pub mod text;
