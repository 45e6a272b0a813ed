//! Latent-time disease progression models anchored on diagnosis events.
//!
//! Longitudinal marker values are mapped to a severity percentile scale and
//! then to a Gaussian scale, aligned on a per-subject latent onset time, and
//! fitted jointly with a multivariate linear mixed model using NUTS.

// NaN-rejecting checks are written as `!(x < y)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod normal;
pub mod par;
pub mod prediction;
pub mod sampler;
pub mod simulator;
pub mod target;
pub mod transform;

pub use error::{Error, Result};
