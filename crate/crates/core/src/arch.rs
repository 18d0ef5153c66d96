//! Whole-network builders: the shuffle-unit architecture family (all group
//! counts, width scales and the shallow variant) and comparison networks
//! whose stage widths are matched to a reference complexity budget.

use rand_chacha::ChaCha8Rng;

use crate::analysis::{count_flops_descs, LayerDesc};
use crate::error::{Error, Result};
use crate::kernels::{fully_connected, global_avg_pool, max_pool, BnParams, ConvSpec};
use crate::tensor::Tensor;
use crate::units::{
    comparison_unit_forward, he_weights, init_comparison_unit_weights, init_shuffle_unit_weights,
    round_to_group_multiple, shuffle_unit_forward, ComparisonKind, ComparisonUnitSpec,
    ComparisonUnitWeights, ConvLayer, ShuffleUnitSpec, ShuffleUnitWeights,
};

pub const CONV1_BASE_CHANNELS: usize = 24;
pub const CLASSES: usize = 1000;

/// Stage output channels at scale 1 for the tabulated group counts.
pub fn table_stage_channels(groups: usize) -> Option<(usize, usize, usize)> {
    match groups {
        1 => Some((144, 288, 576)),
        2 => Some((200, 400, 800)),
        3 => Some((240, 480, 960)),
        4 => Some((272, 544, 1088)),
        8 => Some((384, 768, 1536)),
        _ => None,
    }
}

/// Stride-1 unit repeats per stage; each stage is led by one stride-2 unit.
pub fn stage_repeats(shallow: bool) -> [usize; 3] {
    if shallow {
        [1, 3, 1]
    } else {
        [3, 7, 3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Family {
    ShuffleNet,
    Comparison(ComparisonKind),
}

/// One executable layer of a built network.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Layer {
    Conv(ConvLayer),
    MaxPool {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    ShuffleUnit {
        spec: ShuffleUnitSpec,
        weights: Box<ShuffleUnitWeights>,
    },
    ComparisonUnit {
        spec: ComparisonUnitSpec,
        weights: ComparisonUnitWeights,
    },
    GlobalAvgPool,
    FullyConnected {
        in_features: usize,
        classes: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    },
}

impl Layer {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv(layer) => layer.forward(x),
            Layer::MaxPool { kernel, stride, pad } => max_pool(x, *kernel, *stride, *pad),
            Layer::ShuffleUnit { spec, weights } => shuffle_unit_forward(spec, x, weights),
            Layer::ComparisonUnit { spec, weights } => comparison_unit_forward(spec, x, weights),
            Layer::GlobalAvgPool => global_avg_pool(x),
            Layer::FullyConnected {
                weights,
                bias,
                classes,
                ..
            } => fully_connected(x, weights, bias, *classes),
        }
    }

    pub fn desc(&self) -> LayerDesc {
        match self {
            Layer::Conv(layer) => LayerDesc::Conv(layer.spec),
            Layer::MaxPool { kernel, stride, pad } => LayerDesc::MaxPool {
                kernel: *kernel,
                stride: *stride,
                pad: *pad,
            },
            Layer::ShuffleUnit { spec, .. } => LayerDesc::ShuffleUnit(*spec),
            Layer::ComparisonUnit { spec, .. } => LayerDesc::ComparisonUnit(*spec),
            Layer::GlobalAvgPool => LayerDesc::GlobalAvgPool,
            Layer::FullyConnected {
                in_features,
                classes,
                ..
            } => LayerDesc::FullyConnected {
                in_features: *in_features,
                classes: *classes,
            },
        }
    }
}

/// A built network: declarative layer list plus materialized weights.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NetworkSpec {
    pub family: Family,
    pub groups: usize,
    pub scale: f32,
    pub shallow: bool,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    pub fn name(&self) -> String {
        match self.family {
            Family::ShuffleNet => format!(
                "shufflenet-g{}-s{}{}",
                self.groups,
                self.scale,
                if self.shallow { "-shallow" } else { "" }
            ),
            Family::Comparison(kind) => {
                format!("{}-w{}", kind.name(), self.stage_widths().last().copied().unwrap_or(0))
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn layer_descs(&self) -> Vec<LayerDesc> {
        self.layers.iter().map(Layer::desc).collect()
    }

    /// Output channels of each stage's units, in stage order.
    pub fn stage_widths(&self) -> Vec<usize> {
        let mut widths = Vec::new();
        for layer in &self.layers {
            let (out, stride) = match layer {
                Layer::ShuffleUnit { spec, .. } => (spec.out_channels, spec.stride),
                Layer::ComparisonUnit { spec, .. } => (spec.out_channels, spec.stride),
                _ => continue,
            };
            if stride == 2 || widths.is_empty() {
                widths.push(out);
            } else {
                *widths.last_mut().unwrap() = out;
            }
        }
        widths
    }

    pub fn unit_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::ShuffleUnit { .. } | Layer::ComparisonUnit { .. }))
            .count()
    }

    /// Convolution/FC layers carrying weights, the conventional depth count.
    pub fn weighted_layer_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(_) | Layer::FullyConnected { .. } => 1,
                Layer::ShuffleUnit { .. } => 3,
                Layer::ComparisonUnit { spec, .. } => {
                    spec.conv_stack().map(|s| s.len()).unwrap_or(0)
                        + usize::from(spec.shortcut_conv().is_some())
                }
                _ => 0,
            })
            .sum()
    }

    /// Spatial dims after each layer for a given input, mostly a debug aid.
    pub fn spatial_chain(&self, h: usize, w: usize) -> Result<Vec<(usize, usize)>> {
        let mut dims = vec![(h, w)];
        let (mut h, mut w) = (h, w);
        for desc in self.layer_descs() {
            (h, w) = desc.out_hw(h, w)?;
            dims.push((h, w));
        }
        Ok(dims)
    }
}

fn validate_scale(scale: f32) -> Result<()> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidSpec(format!("invalid scale {scale}")));
    }
    Ok(())
}

fn scaled_channels(base: usize, scale: f32, groups: usize, what: &str) -> Result<usize> {
    round_to_group_multiple(base as f64 * scale as f64, groups).ok_or_else(|| {
        Error::InvalidSpec(format!(
            "{what} ({base} x {scale}) collapses to zero channels at {groups} groups"
        ))
    })
}

/// Layer plan for the shuffle-unit architecture, weights not yet attached.
fn shufflenet_descs(
    conv1_channels: usize,
    stages: (usize, usize, usize),
    repeats: [usize; 3],
    groups: usize,
) -> Result<Vec<LayerDesc>> {
    let mut descs = vec![
        LayerDesc::Conv(ConvSpec {
            in_channels: 3,
            out_channels: conv1_channels,
            kernel: 3,
            stride: 2,
            pad: 1,
            groups: 1,
            depthwise: false,
        }),
        LayerDesc::MaxPool {
            kernel: 3,
            stride: 2,
            pad: 1,
        },
    ];
    let stage_channels = [stages.0, stages.1, stages.2];
    let mut in_c = conv1_channels;
    for (stage_idx, (&out_c, &repeat)) in stage_channels.iter().zip(repeats.iter()).enumerate() {
        // The first pointwise layer of Stage 2 stays dense: its input is thin.
        let first_grouped = stage_idx != 0;
        descs.push(LayerDesc::ShuffleUnit(ShuffleUnitSpec::new(
            in_c,
            out_c,
            groups,
            2,
            first_grouped,
        )?));
        for _ in 0..repeat {
            descs.push(LayerDesc::ShuffleUnit(ShuffleUnitSpec::new(
                out_c, out_c, groups, 1, true,
            )?));
        }
        in_c = out_c;
    }
    descs.push(LayerDesc::GlobalAvgPool);
    descs.push(LayerDesc::FullyConnected {
        in_features: in_c,
        classes: CLASSES,
    });
    Ok(descs)
}

/// Attaches seeded weights to a layer plan.
fn materialize(descs: &[LayerDesc], seed: u64) -> Result<Vec<Layer>> {
    let mut rng: ChaCha8Rng = crate::util::seeded_rng(seed);
    descs
        .iter()
        .map(|desc| {
            Ok(match desc {
                LayerDesc::Conv(spec) => Layer::Conv(ConvLayer {
                    weights: he_weights(spec, &mut rng),
                    bn: BnParams::identity(spec.out_channels),
                    spec: *spec,
                    relu: true,
                }),
                LayerDesc::MaxPool { kernel, stride, pad } => Layer::MaxPool {
                    kernel: *kernel,
                    stride: *stride,
                    pad: *pad,
                },
                LayerDesc::ShuffleUnit(spec) => Layer::ShuffleUnit {
                    spec: *spec,
                    weights: Box::new(init_shuffle_unit_weights(spec, &mut rng)),
                },
                LayerDesc::ComparisonUnit(spec) => Layer::ComparisonUnit {
                    spec: *spec,
                    weights: init_comparison_unit_weights(spec, &mut rng)?,
                },
                LayerDesc::GlobalAvgPool => Layer::GlobalAvgPool,
                LayerDesc::FullyConnected {
                    in_features,
                    classes,
                } => {
                    let fc_spec = ConvSpec::pointwise(*in_features, *classes, 1);
                    Layer::FullyConnected {
                        in_features: *in_features,
                        classes: *classes,
                        weights: he_weights(&fc_spec, &mut rng),
                        bias: vec![0.0; *classes],
                    }
                }
            })
        })
        .collect()
}

/// Builds the architecture for one of the tabulated group counts.
pub fn build_shufflenet(groups: usize, scale: f32, shallow: bool, seed: u64) -> Result<NetworkSpec> {
    let base = table_stage_channels(groups).ok_or_else(|| {
        Error::InvalidSpec(format!(
            "no tabulated stage channels for groups={groups}; use build_shufflenet_with_channels"
        ))
    })?;
    build_shufflenet_with_channels(groups, scale, shallow, seed, base)
}

/// Builder with explicit scale-1 stage channels, for untabulated group counts.
pub fn build_shufflenet_with_channels(
    groups: usize,
    scale: f32,
    shallow: bool,
    seed: u64,
    base: (usize, usize, usize),
) -> Result<NetworkSpec> {
    validate_scale(scale)?;
    if groups == 0 {
        return Err(Error::InvalidSpec("groups must be >= 1".into()));
    }
    // Every grouped layer must stay divisible after scaling; the stride-2
    // concat in particular needs (stage - conv1) divisible by the group
    // count, so conv1 rounds to a group multiple like the stage widths do.
    let conv1_channels = scaled_channels(CONV1_BASE_CHANNELS, scale, groups, "conv1 channels")?;
    let stages = (
        scaled_channels(base.0, scale, groups, "stage 2 channels")?,
        scaled_channels(base.1, scale, groups, "stage 3 channels")?,
        scaled_channels(base.2, scale, groups, "stage 4 channels")?,
    );
    let descs = shufflenet_descs(conv1_channels, stages, stage_repeats(shallow), groups)?;
    Ok(NetworkSpec {
        family: Family::ShuffleNet,
        groups,
        scale,
        shallow,
        seed,
        layers: materialize(&descs, seed)?,
    })
}

/// Result of matching a comparison structure to a reference budget.
#[derive(Debug, Clone)]
pub struct ComparisonBuild {
    pub network: NetworkSpec,
    /// Reference mult-adds at 224x224.
    pub budget: u64,
    /// Achieved mult-adds at 224x224.
    pub achieved: u64,
    pub rel_err: f64,
    /// Smallest tolerance from the 2% doubling ladder that admits `rel_err`.
    pub tolerance: f64,
}

struct ComparisonTemplate {
    conv1_channels: usize,
    repeats: [usize; 3],
    seed: u64,
    scale: f32,
    groups: usize,
}

fn reference_template(reference: &NetworkSpec) -> Result<ComparisonTemplate> {
    let mut conv1_channels = None;
    let mut repeats = Vec::new();
    for layer in &reference.layers {
        match layer {
            Layer::Conv(cl) if conv1_channels.is_none() => {
                conv1_channels = Some(cl.spec.out_channels)
            }
            Layer::ShuffleUnit { spec, .. } => {
                if spec.stride == 2 {
                    repeats.push(0usize);
                } else if let Some(last) = repeats.last_mut() {
                    *last += 1;
                }
            }
            _ => {}
        }
    }
    let (conv1_channels, [r2, r3, r4]) = match (conv1_channels, repeats.as_slice()) {
        (Some(c), &[r2, r3, r4]) => (c, [r2, r3, r4]),
        _ => {
            return Err(Error::InvalidSpec(
                "reference network is not a three-stage shuffle architecture".into(),
            ))
        }
    };
    Ok(ComparisonTemplate {
        conv1_channels,
        repeats: [r2, r3, r4],
        seed: reference.seed,
        scale: reference.scale,
        groups: reference.groups,
    })
}

fn comparison_descs(
    kind: ComparisonKind,
    stage2_width: usize,
    template: &ComparisonTemplate,
) -> Result<Vec<LayerDesc>> {
    let stages = [stage2_width, 2 * stage2_width, 4 * stage2_width];
    let mut descs = vec![
        LayerDesc::Conv(ConvSpec {
            in_channels: 3,
            out_channels: template.conv1_channels,
            kernel: 3,
            stride: 2,
            pad: 1,
            groups: 1,
            depthwise: false,
        }),
        LayerDesc::MaxPool {
            kernel: 3,
            stride: 2,
            pad: 1,
        },
    ];
    let mut in_c = template.conv1_channels;
    for (&out_c, &repeat) in stages.iter().zip(template.repeats.iter()) {
        let first = ComparisonUnitSpec::new(kind, in_c, out_c, 2);
        validate_comparison_unit(&first)?;
        descs.push(LayerDesc::ComparisonUnit(first));
        for _ in 0..repeat {
            let unit = ComparisonUnitSpec::new(kind, out_c, out_c, 1);
            validate_comparison_unit(&unit)?;
            descs.push(LayerDesc::ComparisonUnit(unit));
        }
        in_c = out_c;
    }
    descs.push(LayerDesc::GlobalAvgPool);
    descs.push(LayerDesc::FullyConnected {
        in_features: in_c,
        classes: CLASSES,
    });
    Ok(descs)
}

fn validate_comparison_unit(spec: &ComparisonUnitSpec) -> Result<()> {
    for (conv, _) in spec.conv_stack()? {
        conv.validate()?;
    }
    if let Some(sc) = spec.shortcut_conv() {
        sc.validate()?;
    }
    Ok(())
}

/// Replaces the units of `reference` with `kind` units and binary-searches
/// the stage-2 width (stages double from there) until the 224x224 mult-adds
/// match the reference budget. Starts at a 2% tolerance and doubles it until
/// some integer width fits.
pub fn build_comparison(kind: ComparisonKind, reference: &NetworkSpec) -> Result<ComparisonBuild> {
    let template = reference_template(reference)?;
    let budget = count_flops_descs(&reference.layer_descs(), (224, 224))?.total_mult_adds;

    let cost_of = |w: usize| -> Option<u64> {
        let descs = comparison_descs(kind, w, &template).ok()?;
        count_flops_descs(&descs, (224, 224))
            .ok()
            .map(|r| r.total_mult_adds)
    };

    // Smallest valid width, then an exponential bracket around the budget.
    let mut w_min = 1usize;
    while cost_of(w_min).is_none() {
        w_min += 1;
        if w_min > 1 << 20 {
            return Err(Error::InvalidSpec(format!(
                "no valid width for {} units",
                kind.name()
            )));
        }
    }
    let mut hi = w_min;
    while cost_of(hi).expect("widths above w_min stay valid") < budget {
        hi *= 2;
    }
    let mut lo = w_min;
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if cost_of(mid).expect("bracketed width") < budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let rel = |w: usize| -> f64 {
        let c = cost_of(w).expect("candidate width") as f64;
        (c - budget as f64).abs() / budget as f64
    };
    let best = if cost_of(lo).expect("lo") >= budget || rel(lo) <= rel(hi) {
        lo
    } else {
        hi
    };

    let rel_err = rel(best);
    let mut tolerance = 0.02;
    while rel_err > tolerance {
        tolerance *= 2.0;
    }

    let descs = comparison_descs(kind, best, &template)?;
    let achieved = count_flops_descs(&descs, (224, 224))?.total_mult_adds;
    Ok(ComparisonBuild {
        network: NetworkSpec {
            family: Family::Comparison(kind),
            groups: template.groups,
            scale: template.scale,
            shallow: false,
            seed: template.seed,
            layers: materialize(&descs, template.seed)?,
        },
        budget,
        achieved,
        rel_err,
        tolerance,
    })
}
