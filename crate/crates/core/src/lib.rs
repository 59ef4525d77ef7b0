//! Hierarchical attention temporal convolutional network (HA-TCN) for
//! binary time-series classification, with receptive-field based
//! explanations, a handcrafted-feature baseline, a synthetic handgrip
//! cohort, and a subject-level cross-validation harness.

pub mod autodiff;
pub mod baseline;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod explain;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod train;

pub use checkpoint::Checkpoint;
pub use data::{Dataset, Label, Series, SynthConfig};
pub use error::{Error, Result};
pub use explain::{ExplainSettings, RelevanceProfile, Segment};
pub use grid::TensorGrid;
pub use metrics::{Metrics, Summary};
pub use model::{DilationSchedule, ForwardTrace, HatcnConfig, HatcnModel, Variant};
pub use train::{CvConfig, CvReport, TrainConfig};
