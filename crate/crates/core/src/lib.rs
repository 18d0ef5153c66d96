//! Inference kernels and tooling for channel-shuffle CNNs: grouped and
//! depthwise convolutions, the shuffle-unit architecture family, a static
//! mult-add/connectivity analyzer and a single-thread benchmark harness.

pub mod analysis;
pub mod arch;
pub mod bench;
pub mod error;
pub mod kernels;
pub mod model;
pub mod tensor;
pub mod units;
pub mod util;

pub use error::{Error, Result};
pub use tensor::Tensor;
