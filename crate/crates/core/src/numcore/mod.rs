//! Numeric substrate: dense matrices, softmax, the two-head MLP with
//! hand-derived gradients, RMSprop and the checkpoint format.
//!
//! Everything here is single-threaded with a fixed reduction order, so a
//! forward/backward pass is bitwise reproducible for identical inputs.

pub mod checkpoint;
mod mat;
mod model;
mod optim;
mod softmax;

pub use mat::{dot, norm2, Mat};
pub use model::{Architecture, Dense, ForwardPass, Model, ParamGroup, Params};
pub use optim::RmsProp;
pub use softmax::{log_softmax, softmax, softmax_backward, softmax_in_place, softmax_rows};
