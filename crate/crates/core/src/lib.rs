//! Lexical personality-structure workbench for LLM-simulated populations.
//!
//! The crate covers the whole experiment loop:
//!
//! - [`gateway`]: chat-completion access over live HTTP, scripted replay and a
//!   deterministic synthetic respondent, with retry and rate limiting.
//! - [`persona`]: biography generation and census-curated populations.
//! - [`survey`]: adjective and HEXACO-PI-R administration, the resumable
//!   response store, and analysis-ready response matrices.
//! - [`factors`]: ipsatisation, eigen-spectrum, principal components,
//!   varimax/promax rotation, factor scores and k-sweeps.
//! - [`psychometrics`]: reliability, similarity, consistency and validity.
//! - [`report`]: CSV tables and SVG charts.
//! - [`pipeline`]: the end-to-end analysis used by the command-line tool.

pub mod factors;
pub mod gateway;
pub mod likert;
pub mod persona;
pub mod pipeline;
pub mod psychometrics;
pub mod report;
pub mod stats;
pub mod survey;

pub use likert::LikertScale;
