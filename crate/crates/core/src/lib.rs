//! LIPT inference engine: tensors, sparse window masks, masked window
//! attention, reparameterizable conv blocks and the network built from them.

pub mod attention;
pub mod bench;
pub mod error;
pub mod hrm;
pub mod io;
pub mod metrics;
pub mod model;
pub mod resize;
pub mod tensor;
pub mod window;

pub use error::{Error, Result};
pub use tensor::{ConvWeights, Shape, Tensor};
