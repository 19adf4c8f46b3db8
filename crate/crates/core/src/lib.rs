//! Symbol error rate analysis for QAM receivers that oversample and quantize
//! each symbol with a few-bit ADC.

pub mod channel;
pub mod detectors;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod optimizer;
pub mod quantizer;
pub mod ser;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Constellation, DecisionRule, DetectionPmf, Detector, KappaVector, QuantizerSpec, SystemConfig};
