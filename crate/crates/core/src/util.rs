//! Seeded sampling helpers shared by weight init, the verify suites and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tensor with entries uniform in [-1, 1), reproducible from `seed`.
pub fn random_tensor(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = seeded_rng(seed);
    let data = (0..n * c * h * w)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    Tensor::new(n, c, h, w, data).expect("valid shape")
}

/// Weight buffer with entries uniform in [-1, 1), reproducible from `seed`.
pub fn random_weights(len: usize, seed: u64) -> Vec<f32> {
    let mut rng = seeded_rng(seed);
    (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

/// Largest elementwise `|a - b| / (|b| + 1e-6)` over two equally shaped tensors.
pub fn max_rel_err(a: &Tensor, b: &Tensor) -> f32 {
    assert_eq!(a.shape(), b.shape(), "max_rel_err requires equal shapes");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / (y.abs() + 1e-6))
        .fold(0.0, f32::max)
}
