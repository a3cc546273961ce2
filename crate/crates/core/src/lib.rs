//! Explains which interpretable acoustic information a black-box speech
//! embedding relies on for emotion recognition.
//!
//! The pipeline classifies each emotion against neutral speech with an L2
//! logistic model, ranks embedding dimensions by exact linear SHAP, finds the
//! smallest top-ranked subset with the best cross-validated F1, and then
//! probes acoustic features from all dimensions versus that subset with ridge
//! regression. Features that the subset encodes better than the full
//! embedding score a high information increase.

pub mod attrib;
pub mod cli;
pub mod crossval;
pub mod dataio;
pub mod error;
pub mod linmod;
pub mod pipeline;
pub mod probe;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
