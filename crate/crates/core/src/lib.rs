//! Extended target tracking with multiple random matrices.
//!
//! A target is a set of elliptic subobjects sharing one kinematic state. Each
//! subobject has a gamma-distributed measurement rate and an inverse Wishart
//! extension; the joint density is a mixture over motion modes and
//! association hypotheses.

pub mod assoc;
pub mod correct;
pub mod error;
pub mod model;
pub mod motion;
pub mod predict;
pub mod reduce;
pub mod rng;
pub mod sampling;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{GgiwComponent, GgiwMixture, ModelConfig, StateLayout, TargetEstimate};
pub use stats::{GammaParams, InverseWishartParams, SpdMatrix};
