//! Text-classification experimentation toolkit.
//!
//! * [`gateway`]: the pluggable boundary to language models (mock, HTTP)
//! * [`prompting`]: patterns, verbalizers and instruction prompts
//! * [`labeldesc`]: label-description data construction
//! * [`selection`]: in-context demonstration selection
//! * [`distractor`]: cloze distractor features and the feature-based ranker
//! * [`metrics`]: evaluation and analysis

pub mod distractor;
pub mod fixtures;
pub mod gateway;
pub mod hash;
pub mod labeldesc;
pub mod metrics;
pub mod model;
pub mod prompting;
pub mod rng;
pub mod selection;

pub use model::{
    ClozeInstance, Demonstration, Label, LabelSpace, ScoreVector, TextExample, WordForm,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
