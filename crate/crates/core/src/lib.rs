//! Multilingual dialogue processing: translate a non-English doctor-patient
//! dialogue to English, run question answering and summarization on it, and
//! translate the results back. Includes a mock backend server and an
//! evaluation harness.

pub mod cli;
pub mod client;
pub mod corpus;
pub mod metrics;
pub mod mockserve;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod prompts;
pub mod protocol;
pub mod sentences;
pub mod synthetic;
