//! Building blocks: the channel-shuffle unit (stride 1 and stride 2) and the
//! four comparison units used for matched-complexity width studies.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::kernels::{
    avg_pool, bn_apply, channel_shuffle, conv2d_fast, relu, BnParams, ConvSpec,
};
use crate::tensor::Tensor;

/// Rounds `value` to the nearest positive multiple of `groups`, ties upward.
/// `None` when the value rounds to zero multiples.
pub fn round_to_group_multiple(value: f64, groups: usize) -> Option<usize> {
    let k = (value / groups as f64 + 0.5).floor() as i64;
    if k < 1 {
        None
    } else {
        Some(k as usize * groups)
    }
}

/// Bottleneck width rule shared by the shuffle and xception-like units:
/// a quarter of the output channels, rounded to a multiple of `groups`.
pub fn bottleneck_channels(out_channels: usize, groups: usize) -> Option<usize> {
    round_to_group_multiple(out_channels as f64 / 4.0, groups)
}

/// Configuration of one shuffle unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ShuffleUnitSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
    pub stride: usize,
    pub bottleneck_channels: usize,
    /// False only for the first unit of Stage 2, whose input is too thin to
    /// split into groups.
    pub first_pw_grouped: bool,
}

impl ShuffleUnitSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        groups: usize,
        stride: usize,
        first_pw_grouped: bool,
    ) -> Result<Self> {
        let m = bottleneck_channels(out_channels, groups).ok_or_else(|| {
            Error::InvalidSpec(format!(
                "bottleneck of {out_channels}/4 collapses to zero at {groups} groups"
            ))
        })?;
        let spec = ShuffleUnitSpec {
            in_channels,
            out_channels,
            groups,
            stride,
            bottleneck_channels: m,
            first_pw_grouped,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Channels produced by the residual branch: all of `out_channels` for
    /// stride 1, the concat complement `out - in` for stride 2.
    pub fn branch_channels(&self) -> usize {
        if self.stride == 1 {
            self.out_channels
        } else {
            self.out_channels - self.in_channels
        }
    }

    pub fn pw1_conv(&self) -> ConvSpec {
        let g = if self.first_pw_grouped { self.groups } else { 1 };
        ConvSpec::pointwise(self.in_channels, self.bottleneck_channels, g)
    }

    pub fn dw_conv(&self) -> ConvSpec {
        ConvSpec::depthwise3x3(self.bottleneck_channels, self.stride)
    }

    pub fn pw2_conv(&self) -> ConvSpec {
        ConvSpec::pointwise(self.bottleneck_channels, self.branch_channels(), self.groups)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 {
            return Err(Error::InvalidSpec("groups must be >= 1".into()));
        }
        if !(self.stride == 1 || self.stride == 2) {
            return Err(Error::InvalidSpec(format!(
                "unit stride must be 1 or 2, got {}",
                self.stride
            )));
        }
        if self.stride == 1 && self.in_channels != self.out_channels {
            return Err(Error::InvalidSpec(format!(
                "stride-1 unit needs matching channels for the residual add, got {} -> {}",
                self.in_channels, self.out_channels
            )));
        }
        if self.stride == 2 && self.out_channels <= self.in_channels {
            return Err(Error::InvalidSpec(format!(
                "stride-2 unit needs out > in for the concat shortcut, got {} -> {}",
                self.in_channels, self.out_channels
            )));
        }
        if Some(self.bottleneck_channels) != bottleneck_channels(self.out_channels, self.groups) {
            return Err(Error::InvalidSpec(format!(
                "bottleneck {} is not {}/4 rounded to a multiple of {}",
                self.bottleneck_channels, self.out_channels, self.groups
            )));
        }
        self.pw1_conv().validate()?;
        self.dw_conv().validate()?;
        self.pw2_conv().validate()?;
        Ok(())
    }
}

/// One convolution layer with its batch norm and optional trailing ReLU.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvLayer {
    pub spec: ConvSpec,
    pub weights: Vec<f32>,
    pub bn: BnParams,
    pub relu: bool,
}

impl ConvLayer {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = conv2d_fast(x, &self.weights, &self.spec)?;
        let y = bn_apply(&y, &self.bn)?;
        Ok(if self.relu { relu(&y) } else { y })
    }
}

/// Weights of one shuffle unit: pointwise, depthwise, pointwise.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ShuffleUnitWeights {
    pub pw1: ConvLayer,
    pub dw: ConvLayer,
    pub pw2: ConvLayer,
}

/// Seeded He-style initializer: normal with std `sqrt(2 / fan_in)`.
pub fn he_weights(spec: &ConvSpec, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let fan_in = (spec.in_channels / spec.groups) * spec.kernel * spec.kernel;
    let normal = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt()).expect("valid std");
    (0..spec.weight_len())
        .map(|_| normal.sample(rng) as f32)
        .collect()
}

fn conv_layer(spec: ConvSpec, rng: &mut ChaCha8Rng, relu: bool) -> ConvLayer {
    ConvLayer {
        weights: he_weights(&spec, rng),
        bn: BnParams::identity(spec.out_channels),
        spec,
        relu,
    }
}

fn zero_conv_layer(spec: ConvSpec, relu: bool) -> ConvLayer {
    ConvLayer {
        weights: vec![0.0; spec.weight_len()],
        bn: BnParams::identity(spec.out_channels),
        spec,
        relu,
    }
}

pub fn init_shuffle_unit_weights(spec: &ShuffleUnitSpec, rng: &mut ChaCha8Rng) -> ShuffleUnitWeights {
    ShuffleUnitWeights {
        pw1: conv_layer(spec.pw1_conv(), rng, true),
        // No ReLU after the depthwise stage.
        dw: conv_layer(spec.dw_conv(), rng, false),
        // The merge (add or concat) carries the closing ReLU.
        pw2: conv_layer(spec.pw2_conv(), rng, false),
    }
}

pub fn zero_shuffle_unit_weights(spec: &ShuffleUnitSpec) -> ShuffleUnitWeights {
    ShuffleUnitWeights {
        pw1: zero_conv_layer(spec.pw1_conv(), true),
        dw: zero_conv_layer(spec.dw_conv(), false),
        pw2: zero_conv_layer(spec.pw2_conv(), false),
    }
}

/// Forward pass of one shuffle unit.
///
/// Branch: pointwise (grouped or dense) + BN + ReLU, channel shuffle,
/// depthwise 3x3 (stride s) + BN, pointwise grouped + BN. Stride 1 adds the
/// input and applies ReLU; stride 2 concatenates a 3x3/s2 average-pooled
/// shortcut with the branch and applies ReLU after the concat.
pub fn shuffle_unit_forward(
    spec: &ShuffleUnitSpec,
    x: &Tensor,
    weights: &ShuffleUnitWeights,
) -> Result<Tensor> {
    shuffle_unit_forward_impl(spec, x, weights, true)
}

pub(crate) fn shuffle_unit_forward_impl(
    spec: &ShuffleUnitSpec,
    x: &Tensor,
    weights: &ShuffleUnitWeights,
    apply_shuffle: bool,
) -> Result<Tensor> {
    spec.validate()?;
    if x.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "unit expects {} input channels, got {}",
            spec.in_channels,
            x.channels()
        )));
    }
    let mut branch = weights.pw1.forward(x)?;
    if apply_shuffle {
        branch = channel_shuffle(&branch, spec.groups)?;
    }
    let branch = weights.dw.forward(&branch)?;
    let branch = weights.pw2.forward(&branch)?;

    if spec.stride == 1 {
        Ok(relu(&x.add_elementwise(&branch)?))
    } else {
        let shortcut = avg_pool(x, 3, 2, 1)?;
        Ok(relu(&shortcut.concat_channels(&branch)?))
    }
}

/// Which comparison structure a unit follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ComparisonKind {
    VggLike,
    ResNet,
    ResNeXt,
    XceptionLike,
}

impl ComparisonKind {
    pub fn name(&self) -> &'static str {
        match self {
            ComparisonKind::VggLike => "vgg_like",
            ComparisonKind::ResNet => "resnet",
            ComparisonKind::ResNeXt => "resnext",
            ComparisonKind::XceptionLike => "xception_like",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "vgg_like" => Ok(ComparisonKind::VggLike),
            "resnet" => Ok(ComparisonKind::ResNet),
            "resnext" => Ok(ComparisonKind::ResNeXt),
            "xception_like" => Ok(ComparisonKind::XceptionLike),
            other => Err(Error::InvalidSpec(format!("unknown unit kind '{other}'"))),
        }
    }
}

/// ResNeXt settings: cardinality 16 with a 1:2 bottleneck ratio.
pub const RESNEXT_CARDINALITY: usize = 16;

/// Configuration of one comparison unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ComparisonUnitSpec {
    pub kind: ComparisonKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl ComparisonUnitSpec {
    pub fn new(kind: ComparisonKind, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        ComparisonUnitSpec {
            kind,
            in_channels,
            out_channels,
            stride,
        }
    }

    /// Bottleneck width: 1:4 for the resnet unit, 1:2 (rounded to the
    /// cardinality) for the resnext unit.
    pub fn bottleneck(&self) -> usize {
        match self.kind {
            ComparisonKind::ResNet => (self.out_channels / 4).max(1),
            ComparisonKind::ResNeXt => {
                round_to_group_multiple(self.out_channels as f64 / 2.0, RESNEXT_CARDINALITY)
                    .unwrap_or(RESNEXT_CARDINALITY)
            }
            _ => 0,
        }
    }

    /// Equivalent shuffle-unit spec for the xception-like structure (g = 1).
    pub fn as_shuffle_spec(&self) -> Result<ShuffleUnitSpec> {
        ShuffleUnitSpec::new(self.in_channels, self.out_channels, 1, self.stride, true)
    }

    /// Main-path convolutions, in forward order, with their trailing-ReLU flags.
    pub fn conv_stack(&self) -> Result<Vec<(ConvSpec, bool)>> {
        let c = self.in_channels;
        let o = self.out_channels;
        let s = self.stride;
        match self.kind {
            ComparisonKind::VggLike => Ok(vec![
                (conv3x3(c, o, s, 1), true),
                (conv3x3(o, o, 1, 1), true),
            ]),
            ComparisonKind::ResNet => {
                let m = self.bottleneck();
                Ok(vec![
                    (ConvSpec::pointwise(c, m, 1), true),
                    (conv3x3(m, m, s, 1), true),
                    (ConvSpec::pointwise(m, o, 1), false),
                ])
            }
            ComparisonKind::ResNeXt => {
                let m = self.bottleneck();
                Ok(vec![
                    (ConvSpec::pointwise(c, m, 1), true),
                    (conv3x3(m, m, s, RESNEXT_CARDINALITY), true),
                    (ConvSpec::pointwise(m, o, 1), false),
                ])
            }
            ComparisonKind::XceptionLike => {
                let spec = self.as_shuffle_spec()?;
                Ok(vec![
                    (spec.pw1_conv(), true),
                    (spec.dw_conv(), false),
                    (spec.pw2_conv(), false),
                ])
            }
        }
    }

    /// Projection shortcut for the residual kinds when shape changes.
    pub fn shortcut_conv(&self) -> Option<ConvSpec> {
        match self.kind {
            ComparisonKind::ResNet | ComparisonKind::ResNeXt
                if self.stride != 1 || self.in_channels != self.out_channels =>
            {
                Some(ConvSpec {
                    in_channels: self.in_channels,
                    out_channels: self.out_channels,
                    kernel: 1,
                    stride: self.stride,
                    pad: 0,
                    groups: 1,
                    depthwise: false,
                })
            }
            _ => None,
        }
    }
}

fn conv3x3(c_in: usize, c_out: usize, stride: usize, groups: usize) -> ConvSpec {
    ConvSpec {
        in_channels: c_in,
        out_channels: c_out,
        kernel: 3,
        stride,
        pad: 1,
        groups,
        depthwise: false,
    }
}

/// Weights of one comparison unit.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ComparisonUnitWeights {
    /// Plain stack (vgg-like): convolutions applied in order.
    Stack(Vec<ConvLayer>),
    /// Residual bottleneck (resnet / resnext) with optional projection shortcut.
    Residual {
        convs: Vec<ConvLayer>,
        shortcut: Option<Box<ConvLayer>>,
    },
    /// Xception-like reuses the shuffle unit with g = 1.
    Shuffle(Box<ShuffleUnitWeights>),
}

pub fn init_comparison_unit_weights(
    spec: &ComparisonUnitSpec,
    rng: &mut ChaCha8Rng,
) -> Result<ComparisonUnitWeights> {
    match spec.kind {
        ComparisonKind::VggLike => Ok(ComparisonUnitWeights::Stack(
            spec.conv_stack()?
                .into_iter()
                .map(|(cs, r)| conv_layer(cs, rng, r))
                .collect(),
        )),
        ComparisonKind::ResNet | ComparisonKind::ResNeXt => Ok(ComparisonUnitWeights::Residual {
            convs: spec
                .conv_stack()?
                .into_iter()
                .map(|(cs, r)| conv_layer(cs, rng, r))
                .collect(),
            shortcut: spec.shortcut_conv().map(|cs| Box::new(conv_layer(cs, rng, false))),
        }),
        ComparisonKind::XceptionLike => Ok(ComparisonUnitWeights::Shuffle(Box::new(
            init_shuffle_unit_weights(&spec.as_shuffle_spec()?, rng),
        ))),
    }
}

pub fn zero_comparison_unit_weights(spec: &ComparisonUnitSpec) -> Result<ComparisonUnitWeights> {
    match spec.kind {
        ComparisonKind::VggLike => Ok(ComparisonUnitWeights::Stack(
            spec.conv_stack()?
                .into_iter()
                .map(|(cs, r)| zero_conv_layer(cs, r))
                .collect(),
        )),
        ComparisonKind::ResNet | ComparisonKind::ResNeXt => Ok(ComparisonUnitWeights::Residual {
            convs: spec
                .conv_stack()?
                .into_iter()
                .map(|(cs, r)| zero_conv_layer(cs, r))
                .collect(),
            shortcut: spec.shortcut_conv().map(|cs| Box::new(zero_conv_layer(cs, false))),
        }),
        ComparisonKind::XceptionLike => Ok(ComparisonUnitWeights::Shuffle(Box::new(
            zero_shuffle_unit_weights(&spec.as_shuffle_spec()?),
        ))),
    }
}

/// Forward pass of one comparison unit.
pub fn comparison_unit_forward(
    spec: &ComparisonUnitSpec,
    x: &Tensor,
    weights: &ComparisonUnitWeights,
) -> Result<Tensor> {
    if x.channels() != spec.in_channels {
        return Err(Error::ShapeMismatch(format!(
            "unit expects {} input channels, got {}",
            spec.in_channels,
            x.channels()
        )));
    }
    match (spec.kind, weights) {
        (ComparisonKind::VggLike, ComparisonUnitWeights::Stack(convs)) => {
            let mut y = x.clone();
            for layer in convs {
                y = layer.forward(&y)?;
            }
            Ok(y)
        }
        (
            ComparisonKind::ResNet | ComparisonKind::ResNeXt,
            ComparisonUnitWeights::Residual { convs, shortcut },
        ) => {
            let mut y = x.clone();
            for layer in convs {
                y = layer.forward(&y)?;
            }
            let sc = match shortcut {
                Some(layer) => layer.forward(x)?,
                None => x.clone(),
            };
            Ok(relu(&y.add_elementwise(&sc)?))
        }
        (ComparisonKind::XceptionLike, ComparisonUnitWeights::Shuffle(w)) => {
            shuffle_unit_forward(&spec.as_shuffle_spec()?, x, w)
        }
        _ => Err(Error::InvalidSpec(
            "comparison weights do not match unit kind".into(),
        )),
    }
}
