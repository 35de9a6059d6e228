//! Distributional disagreement between classifiers.
//!
//! Measures how much models disagree using Top-1, Hellinger, Jensen–Shannon
//! and symmetrized KL notions; fits ID-vs-OOD agreement and accuracy lines;
//! estimates OOD error without OOD labels; scores OOD detection by ROC-AUC;
//! and computes class-aggregated calibration error.

pub mod analysis;
pub mod calibration;
pub mod detect;
pub mod divergence;
pub mod domain;
pub mod error;
pub mod estimate;
pub mod grid;
pub mod io;
mod linalg;
pub mod linefit;
pub mod numeric;
pub mod report;
pub mod synth;
pub mod transform;

pub use divergence::{EpsilonPolicy, Notion};
pub use domain::{EnsembleManifest, LabelVector, ModelPair, Pairing, PredictionSet};
pub use error::{Error, ErrorClass, Result};
