//! Fully connected head and ReLU activation.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Matrix-vector product plus bias over a `(n, c, 1, 1)` input;
/// `weights: [classes, c]` row-major. Output shape `(n, classes, 1, 1)`.
pub fn fully_connected(
    x: &Tensor,
    weights: &[f32],
    bias: &[f32],
    classes: usize,
) -> Result<Tensor> {
    let (n, c, h, w) = x.shape();
    if h != 1 || w != 1 {
        return Err(Error::ShapeMismatch(format!(
            "fully_connected expects 1x1 spatial dims, got {h}x{w}"
        )));
    }
    if weights.len() != classes * c || bias.len() != classes {
        return Err(Error::ShapeMismatch(format!(
            "fully_connected weights {}/bias {} do not match {classes} classes x {c} features",
            weights.len(),
            bias.len()
        )));
    }
    let mut out = Tensor::zeros(n, classes, 1, 1)?;
    for b in 0..n {
        let features = &x.data()[b * c..(b + 1) * c];
        for j in 0..classes {
            let row = &weights[j * c..(j + 1) * c];
            let dot: f32 = row.iter().zip(features).map(|(w, f)| w * f).sum();
            out.plane_mut(b, j)[0] = dot + bias[j];
        }
    }
    Ok(out)
}

/// Elementwise `max(0, v)`.
pub fn relu(x: &Tensor) -> Tensor {
    let (n, c, h, w) = x.shape();
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(n, c, h, w, data).expect("shape preserved")
}
