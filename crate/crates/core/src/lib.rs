//! Cross-modal feature fusion and hierarchical multi-object tracking.
//!
//! The crate implements a desk-scale pipeline:
//!
//! * [`tensor`] — a minimal deterministic dense-tensor kernel (convolution,
//!   batch normalization, activations, concatenation, affine layers, seeded
//!   Gaussian noise) plus the [`store`] parameter file format.
//! * [`fusion`] — iterative perturb-and-refine harmonization of two modality
//!   feature maps into one fused representation.
//! * [`refiner`] — plug-and-play time-conditioned iterative enhancement of a
//!   fused feature map.
//! * [`tracker`] — confidence-staged association of detections to tracks with
//!   constant-velocity prediction and optimal assignment.
//! * [`metrics`] — CLEAR and identity tracking metrics plus feature-map
//!   statistics.
//! * [`simulator`] — deterministic synthetic scenarios with occlusion and
//!   detection corruption.
//! * [`mot_io`] / [`config`] — MOT-style text formats and key-value configs.
//!
//! Everything is seed-deterministic: the same inputs, weights, and seeds
//! produce bit-identical outputs on every platform.

pub mod assignment;
pub mod bbox;
pub mod config;
pub mod fusion;
pub mod metrics;
pub mod mot_io;
pub mod refiner;
pub mod rng;
pub mod simulator;
pub mod store;
pub mod synthetic;
pub mod tensor;
pub mod tracker;

#[cfg(feature = "test-support")]
pub mod test_support;

pub use bbox::BBox;
pub use tensor::{FeatureMap, TensorError};
