//! Novel class discovery on dense features.
//!
//! A two-head MLP is pretrained on labeled examples of old classes, then a
//! new-class head is trained on unlabeled examples with pseudo-pair and
//! pseudo-label learning plus joint-label mixing of unlabeled examples with
//! labeled examples and with confident unlabeled anchors.

pub mod baseline_losses;
pub mod datasets;
pub mod error;
pub mod kv;
pub mod metrics;
pub mod numcore;
pub mod openmix;
pub mod rng;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
