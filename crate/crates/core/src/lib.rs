//! Mixture-model trajectory prediction with prediction-based, anchor-based and
//! evolving + distinct anchor label assignment.
//!
//! The crate is organised bottom-up: [`types`] and [`geometry`] hold the
//! shared vocabulary, [`anchors`] and [`assignment`] decide which mixture
//! component is supervised, [`loss`] and [`model`] produce exact gradients,
//! [`data`] synthesises and persists scenes, [`metrics`] evaluates, and
//! [`train`] / [`pipeline`] tie everything into runnable experiments.

pub mod anchors;
pub mod assignment;
pub mod data;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod train;
pub mod types;

pub use error::{Error, Result};
pub use exec::Exec;
