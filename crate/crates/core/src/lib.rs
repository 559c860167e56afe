//! Monocular articulated pose estimation from joint confidence maps and part
//! orientation fields.
//!
//! The pipeline: [`synth`] renders observations of a known skeleton,
//! [`pofield`] decodes them, [`fitting`] recovers per-frame model parameters
//! with staged Levenberg-Marquardt, [`tracking`] refines a sequence with flow
//! targets, and [`eval`] scores the results.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod camera;
pub mod cli;
pub mod container;
pub mod error;
pub mod eval;
pub mod fitting;
pub mod io;
pub mod kinematics;
pub mod model;
pub mod pofield;
pub mod prior;
pub mod rng;
pub mod skeleton;
pub mod so3;
pub mod synth;
pub mod tracking;

pub use camera::{Camera, Crop};
pub use error::{Error, Result};
pub use model::{BodyModel, ModelSpec, Network};
pub use pofield::{
    FieldSettings, FieldStack, FrameObservation, Keypoint, Observation, Orientation,
};
pub use skeleton::{ModelParams, SkeletonDef};
