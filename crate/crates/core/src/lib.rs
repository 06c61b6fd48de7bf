//! Segment-contextualized ECG beat classification.
//!
//! The pipeline ingests WFDB records, cuts 10-second context segments,
//! detects R peaks, extracts a 23-dimensional rhythm-morphology feature
//! vector per beat, trains two evidence-tiered softmax classifiers, and
//! routes each segment between them with a confidence gate whose threshold
//! is induced on a held-out split:
//!
//! ```text
//! fetch -> ingest -> augment -> detect -> features -> train -> sweep
//!                                     -> evaluate -> stress -> report
//! ```
//!
//! Numeric stages are generic over the [`Real`] scalar (f32 or f64); the
//! pipeline and CLI use the f64 aliases below.

pub mod augment;
pub mod error;
pub mod evalx;
pub mod features;
pub mod ingest;
pub mod model;
pub mod num;
pub mod peaks;
pub mod pipeline;
pub mod routing;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::{AamiClass, BeatClass, Record, Segment, SegmentOrigin};
pub use num::Real;

/// f64-backed aliases used by the pipeline stages and the CLI.
pub type BeatFeatures64 = features::BeatFeatures<f64>;
pub type Posterior64 = model::Posterior<f64>;
pub type ClassifierParams64 = model::ClassifierParams<f64>;
pub type SegmentConfidence64 = routing::SegmentConfidence<f64>;
