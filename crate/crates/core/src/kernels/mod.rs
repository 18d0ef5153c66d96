//! Numeric primitives: convolutions, channel shuffle, pooling, batch-norm
//! folding, activation and the fully connected head.
//!
//! All kernels are pure, reentrant and perform no implicit multithreading;
//! the benchmark harness relies on [`parallelism`] staying at one worker.

pub mod bn;
pub mod conv;
pub mod linear;
pub mod pool;
pub mod shuffle;

pub use bn::{add_channel_bias, bn_apply, fold_bn, BnParams};
pub use conv::{conv2d_fast, conv2d_naive, ConvSpec};
pub use linear::{fully_connected, relu};
pub use pool::{avg_pool, global_avg_pool, max_pool};
pub use shuffle::{channel_shuffle, channel_shuffle_perm};

/// Number of compute workers the kernel layer may use. Always 1: there is no
/// internal parallelism anywhere in this crate.
pub fn parallelism() -> usize {
    1
}
