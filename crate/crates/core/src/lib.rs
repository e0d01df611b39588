//! Light real-time fault-detection network for freight-train rolling-stock
//! imagery, built from scratch on a small deterministic tensor core.
//!
//! The crate provides:
//!
//! - a depthwise-separable convolutional backbone with three detection
//!   taps at strides 8, 16 and 16 ([`backbone`]);
//! - two multi-scale feature-fusion blocks feeding a region proposal
//!   network and a position-sensitive detection head ([`fusion`],
//!   [`rpn`], [`mlps`], [`detector`]);
//! - a single-stage joint SGD trainer with deterministic minibatch
//!   sampling and a CSV loss log ([`train`]);
//! - a synthetic scene generator that stands in for the proprietary
//!   wayside-camera datasets ([`synth`]);
//! - image-level evaluation metrics and an analytic parameter/compute
//!   profiler ([`metrics`], [`profile`]).
//!
//! Everything is seeded and single-threaded: two runs with the same seed
//! produce bit-identical weights, logs and detections.

pub mod backbone;
pub mod checkpoint;
pub mod detector;
pub mod error;
pub mod fusion;
pub mod metrics;
pub mod mlps;
pub mod ops;
pub mod params;
pub mod profile;
pub mod rng;
pub mod rpn;
pub mod synth;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Lcg64;
pub use tensor::{Elem, Tensor};
