//! Behavior subtraction for pixel-level video anomaly detection.
//!
//! Frames are reduced to binary motion labels, labels to connected-component
//! size descriptors, and both to a per-pixel sliding-window event statistic
//! `e_t`. Training keeps the per-pixel maximum (or mean) of `e_t` as a
//! background behavior image `B`; at test time a pixel is anomalous when
//! `e_t - B` exceeds a threshold.

pub mod analyze;
pub mod behavior;
pub mod config;
pub mod descriptor;
pub mod detect;
pub mod error;
pub mod event;
pub mod frame;
pub mod ingest;
pub mod markov;
pub mod motion;
pub mod pipeline;
pub mod pnm;
pub mod synth;

pub use behavior::{train, BehaviorImage, SurrogateKind, TrainingMetadata};
pub use config::Config;
pub use descriptor::{Connectivity, DescriptorField, DescriptorParams};
pub use detect::{subtract, summarize, AnomalyMap, Confusion, Detector};
pub use error::{Error, Result};
pub use event::{EventField, EventParams, EventState};
pub use frame::{Frame, Geometry};
pub use motion::{BackgroundModel, LabelField};
pub use pipeline::Pipeline;
pub use synth::SceneScript;
