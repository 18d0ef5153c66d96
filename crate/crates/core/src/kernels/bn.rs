//! Inference-time batch normalization: per-channel affine transform and
//! folding of the transform into the preceding convolution's weights.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Frozen batch-norm statistics and affine parameters for one layer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BnParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f32,
}

impl BnParams {
    /// Identity transform: gamma 1, beta 0, mean 0, var 1.
    pub fn identity(channels: usize) -> Self {
        BnParams {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        let lens = [
            self.gamma.len(),
            self.beta.len(),
            self.running_mean.len(),
            self.running_var.len(),
        ];
        if lens.iter().any(|&l| l != channels) {
            return Err(Error::ShapeMismatch(format!(
                "bn parameter lengths {lens:?} do not match {channels} channels"
            )));
        }
        if self
            .running_var
            .iter()
            .any(|&v| v + self.epsilon <= 0.0)
        {
            return Err(Error::InvalidSpec(
                "running_var + epsilon must be positive per channel".into(),
            ));
        }
        Ok(())
    }
}

/// `y = gamma * (x - mean) / sqrt(var + eps) + beta`, per channel.
pub fn bn_apply(x: &Tensor, bn: &BnParams) -> Result<Tensor> {
    bn.validate(x.channels())?;
    let mut out = x.clone();
    for b in 0..x.batch() {
        for ch in 0..x.channels() {
            let scale = bn.gamma[ch] / (bn.running_var[ch] + bn.epsilon).sqrt();
            let shift = bn.beta[ch] - bn.running_mean[ch] * scale;
            for v in out.plane_mut(b, ch) {
                *v = *v * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Adds a per-output-channel bias (the product of folding).
pub fn add_channel_bias(x: &Tensor, bias: &[f32]) -> Result<Tensor> {
    if bias.len() != x.channels() {
        return Err(Error::ShapeMismatch(format!(
            "bias length {} does not match {} channels",
            bias.len(),
            x.channels()
        )));
    }
    let mut out = x.clone();
    for b in 0..x.batch() {
        for (ch, &bv) in bias.iter().enumerate() {
            for v in out.plane_mut(b, ch) {
                *v += bv;
            }
        }
    }
    Ok(out)
}

/// Folds batch norm into conv weights and bias:
/// `w'[j] = w[j] * gamma[j] / sqrt(var[j] + eps)` and
/// `b'[j] = beta[j] + (bias[j] - mean[j]) * gamma[j] / sqrt(var[j] + eps)`.
///
/// `weights` holds `out_channels` equal-sized blocks.
pub fn fold_bn(
    weights: &[f32],
    bias: &[f32],
    bn: &BnParams,
    out_channels: usize,
) -> Result<(Vec<f32>, Vec<f32>)> {
    bn.validate(out_channels)?;
    if bias.len() != out_channels {
        return Err(Error::ShapeMismatch(format!(
            "bias length {} does not match {out_channels} output channels",
            bias.len()
        )));
    }
    if out_channels == 0 || !weights.len().is_multiple_of(out_channels) {
        return Err(Error::ShapeMismatch(format!(
            "weight buffer of {} cannot be split into {out_channels} channel blocks",
            weights.len()
        )));
    }
    let block = weights.len() / out_channels;
    let mut w_out = Vec::with_capacity(weights.len());
    let mut b_out = Vec::with_capacity(out_channels);
    for j in 0..out_channels {
        let scale = bn.gamma[j] / (bn.running_var[j] + bn.epsilon).sqrt();
        w_out.extend(weights[j * block..(j + 1) * block].iter().map(|v| v * scale));
        b_out.push(bn.beta[j] + (bias[j] - bn.running_mean[j]) * scale);
    }
    Ok((w_out, b_out))
}
