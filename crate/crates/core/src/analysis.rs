//! Static cost model and channel-connectivity analysis.
//!
//! Mult-adds are counted for convolution and fully connected layers only;
//! batch norm, pooling, shuffle and ReLU contribute zero. One multiply
//! accumulate counts as one operation. The data-movement model charges four
//! bytes per input, output and weight element, one pass, no cache modeling.

use crate::arch::NetworkSpec;
use crate::error::{Error, Result};
use crate::kernels::{channel_shuffle_perm, ConvSpec};
use crate::units::{ComparisonUnitSpec, ShuffleUnitSpec};

/// Weight-free view of a layer, sufficient for cost and shape analysis.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum LayerDesc {
    Conv(ConvSpec),
    MaxPool {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    ShuffleUnit(ShuffleUnitSpec),
    ComparisonUnit(ComparisonUnitSpec),
    GlobalAvgPool,
    FullyConnected {
        in_features: usize,
        classes: usize,
    },
}

fn pool_out_dims(h: usize, w: usize, k: usize, s: usize, p: usize) -> Result<(usize, usize)> {
    let (sh, sw) = (h + 2 * p, w + 2 * p);
    if sh < k || sw < k {
        return Err(Error::DegenerateOutput(format!(
            "pool k={k} does not fit {h}x{w} with pad {p}"
        )));
    }
    Ok(((sh - k) / s + 1, (sw - k) / s + 1))
}

impl LayerDesc {
    /// Spatial dims after this layer.
    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        match self {
            LayerDesc::Conv(spec) => spec.out_dims(h, w),
            LayerDesc::MaxPool { kernel, stride, pad } => pool_out_dims(h, w, *kernel, *stride, *pad),
            LayerDesc::ShuffleUnit(spec) => spec.dw_conv().out_dims(h, w),
            LayerDesc::ComparisonUnit(spec) => {
                if spec.stride == 2 {
                    pool_out_dims(h, w, 3, 2, 1)
                } else {
                    Ok((h, w))
                }
            }
            LayerDesc::GlobalAvgPool => Ok((1, 1)),
            LayerDesc::FullyConnected { .. } => Ok((1, 1)),
        }
    }
}

/// One row of a [`CostReport`].
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CostRow {
    pub name: String,
    pub kind: String,
    pub out_shape: (usize, usize, usize, usize),
    pub mult_adds: u64,
    pub params: u64,
    /// 4 bytes per input, output and weight element, read plus written.
    pub bytes: u64,
    /// mult_adds / bytes.
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub total_mult_adds: u64,
    pub total_params: u64,
    pub total_bytes: u64,
}

fn conv_kind(spec: &ConvSpec) -> String {
    if spec.depthwise || (spec.groups == spec.in_channels && spec.groups == spec.out_channels) {
        return format!("dwconv{k}x{k}", k = spec.kernel);
    }
    let grouped = if spec.groups > 1 { "g" } else { "" };
    format!("{grouped}conv{k}x{k}", k = spec.kernel)
}

fn row(
    name: String,
    kind: String,
    out_shape: (usize, usize, usize, usize),
    mult_adds: u64,
    params: u64,
    bytes: u64,
) -> CostRow {
    CostRow {
        name,
        kind,
        out_shape,
        mult_adds,
        params,
        bytes,
        intensity: if bytes == 0 {
            0.0
        } else {
            mult_adds as f64 / bytes as f64
        },
    }
}

/// Cost row of one convolution (with its batch norm's affine parameters).
fn conv_row(name: &str, spec: &ConvSpec, h: usize, w: usize) -> Result<(CostRow, (usize, usize))> {
    spec.validate()?;
    let (oh, ow) = spec.out_dims(h, w)?;
    let per_out = (spec.in_channels / spec.groups) * spec.kernel * spec.kernel;
    let mult_adds = (oh * ow * spec.out_channels) as u64 * per_out as u64;
    let weight_elems = spec.weight_len() as u64;
    let bytes = 4 * (spec.in_channels as u64 * (h * w) as u64
        + spec.out_channels as u64 * (oh * ow) as u64
        + weight_elems);
    let params = weight_elems + 2 * spec.out_channels as u64;
    Ok((
        row(
            name.to_string(),
            conv_kind(spec),
            (1, spec.out_channels, oh, ow),
            mult_adds,
            params,
            bytes,
        ),
        (oh, ow),
    ))
}

#[allow(clippy::too_many_arguments)]
fn pool_row(
    name: &str,
    kind: &str,
    channels: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
) -> Result<(CostRow, (usize, usize))> {
    let (oh, ow) = pool_out_dims(h, w, k, s, p)?;
    let bytes = 4 * channels as u64 * ((h * w) as u64 + (oh * ow) as u64);
    Ok((
        row(
            name.to_string(),
            kind.to_string(),
            (1, channels, oh, ow),
            0,
            0,
            bytes,
        ),
        (oh, ow),
    ))
}

struct Walker {
    rows: Vec<CostRow>,
    channels: Option<usize>,
    stage: usize,
    unit_in_stage: usize,
}

impl Walker {
    fn check_channels(&mut self, expected: usize, at: &str) -> Result<()> {
        if let Some(c) = self.channels {
            if c != expected {
                return Err(Error::ShapeMismatch(format!(
                    "{at} expects {expected} input channels but the running chain carries {c}"
                )));
            }
        }
        Ok(())
    }

    fn unit_name(&mut self, stride: usize) -> String {
        if stride == 2 || self.stage == 1 {
            self.stage += 1;
            self.unit_in_stage = 1;
        } else {
            self.unit_in_stage += 1;
        }
        format!("stage{}.unit{}", self.stage, self.unit_in_stage)
    }
}

/// Per-layer cost rows and totals for a layer plan at the given input size.
pub fn count_flops_descs(descs: &[LayerDesc], input_hw: (usize, usize)) -> Result<CostReport> {
    let (mut h, mut w) = input_hw;
    let mut walker = Walker {
        rows: Vec::new(),
        channels: None,
        stage: 1,
        unit_in_stage: 0,
    };
    let mut conv_index = 0usize;

    for desc in descs {
        match desc {
            LayerDesc::Conv(spec) => {
                conv_index += 1;
                walker.check_channels(spec.in_channels, "conv")?;
                let (r, hw) = conv_row(&format!("conv{conv_index}"), spec, h, w)?;
                walker.channels = Some(spec.out_channels);
                (h, w) = hw;
                walker.rows.push(r);
            }
            LayerDesc::MaxPool { kernel, stride, pad } => {
                let c = walker.channels.unwrap_or(0);
                let (r, hw) = pool_row("maxpool", "maxpool", c, h, w, *kernel, *stride, *pad)?;
                (h, w) = hw;
                walker.rows.push(r);
            }
            LayerDesc::ShuffleUnit(spec) => {
                spec.validate()?;
                walker.check_channels(spec.in_channels, "shuffle unit")?;
                let name = walker.unit_name(spec.stride);

                let (pw1, _) = conv_row(&format!("{name}.pw1"), &spec.pw1_conv(), h, w)?;
                walker.rows.push(pw1);
                let m = spec.bottleneck_channels;
                walker.rows.push(row(
                    format!("{name}.shuffle"),
                    "shuffle".into(),
                    (1, m, h, w),
                    0,
                    0,
                    4 * 2 * (m * h * w) as u64,
                ));
                let (dw, dw_hw) = conv_row(&format!("{name}.dw"), &spec.dw_conv(), h, w)?;
                walker.rows.push(dw);
                let (pw2, _) = conv_row(&format!("{name}.pw2"), &spec.pw2_conv(), dw_hw.0, dw_hw.1)?;
                walker.rows.push(pw2);
                if spec.stride == 2 {
                    let (sc, _) = pool_row(
                        &format!("{name}.shortcut"),
                        "avgpool",
                        spec.in_channels,
                        h,
                        w,
                        3,
                        2,
                        1,
                    )?;
                    walker.rows.push(sc);
                }
                walker.channels = Some(spec.out_channels);
                (h, w) = dw_hw;
            }
            LayerDesc::ComparisonUnit(spec) => {
                walker.check_channels(spec.in_channels, "comparison unit")?;
                let name = walker.unit_name(spec.stride);
                let (mut ch, mut cw) = (h, w);
                for (i, (conv, _)) in spec.conv_stack()?.iter().enumerate() {
                    let (r, hw) = conv_row(&format!("{name}.conv{}", i + 1), conv, ch, cw)?;
                    walker.rows.push(r);
                    (ch, cw) = hw;
                }
                if let Some(sc) = spec.shortcut_conv() {
                    let (r, _) = conv_row(&format!("{name}.shortcut"), &sc, h, w)?;
                    walker.rows.push(r);
                }
                walker.channels = Some(spec.out_channels);
                (h, w) = (ch, cw);
            }
            LayerDesc::GlobalAvgPool => {
                let c = walker.channels.unwrap_or(0);
                walker.rows.push(row(
                    "gap".into(),
                    "gap".into(),
                    (1, c, 1, 1),
                    0,
                    0,
                    4 * (c * h * w + c) as u64,
                ));
                (h, w) = (1, 1);
            }
            LayerDesc::FullyConnected {
                in_features,
                classes,
            } => {
                walker.check_channels(*in_features, "fc")?;
                if (h, w) != (1, 1) {
                    return Err(Error::ShapeMismatch(format!(
                        "fc expects 1x1 spatial input, got {h}x{w}"
                    )));
                }
                let weight_elems = (*in_features * *classes + *classes) as u64;
                let mult_adds = (*in_features * *classes) as u64;
                let bytes = 4 * (*in_features as u64 + *classes as u64 + weight_elems);
                walker.rows.push(row(
                    "fc".into(),
                    "fc".into(),
                    (1, *classes, 1, 1),
                    mult_adds,
                    weight_elems,
                    bytes,
                ));
                walker.channels = Some(*classes);
            }
        }
    }

    let total_mult_adds = walker.rows.iter().map(|r| r.mult_adds).sum();
    let total_params = walker.rows.iter().map(|r| r.params).sum();
    let total_bytes = walker.rows.iter().map(|r| r.bytes).sum();
    Ok(CostReport {
        rows: walker.rows,
        total_mult_adds,
        total_params,
        total_bytes,
    })
}

/// Per-layer cost rows and totals for a built network.
pub fn count_flops(spec: &NetworkSpec, input_hw: (usize, usize)) -> Result<CostReport> {
    count_flops_descs(&spec.layer_descs(), input_hw)
}

/// Unit families with closed-form stride-1 costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitKind {
    ResNet,
    ResNeXt,
    ShuffleNet,
}

impl UnitKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "resnet" => Ok(UnitKind::ResNet),
            "resnext" => Ok(UnitKind::ResNeXt),
            "shufflenet" => Ok(UnitKind::ShuffleNet),
            other => Err(Error::InvalidSpec(format!("unknown unit kind '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UnitKind::ResNet => "resnet",
            UnitKind::ResNeXt => "resnext",
            UnitKind::ShuffleNet => "shufflenet",
        }
    }
}

fn require_positive(values: &[(&'static str, usize)]) -> Result<()> {
    for (what, v) in values {
        if *v == 0 {
            return Err(Error::InvalidSpec(format!("{what} must be >= 1")));
        }
    }
    Ok(())
}

fn require_divisible(what: &'static str, value: usize, groups: usize) -> Result<()> {
    if !value.is_multiple_of(groups) {
        return Err(Error::Divisibility {
            what,
            value,
            groups,
        });
    }
    Ok(())
}

/// Closed-form mult-adds of one stride-1 unit on a `c x h x w` input with
/// bottleneck width `m`: `hw(2cm + 9m^2)` for the resnet bottleneck,
/// `hw(2cm + 9m^2/g)` for resnext, `hw(2cm/g + 9m)` for the shuffle unit.
pub fn unit_flops(
    kind: UnitKind,
    c: usize,
    h: usize,
    w: usize,
    m: usize,
    g: usize,
) -> Result<u64> {
    require_positive(&[("c", c), ("h", h), ("w", w), ("m", m), ("g", g)])?;
    let hw = (h * w) as u64;
    let (c64, m64, g64) = (c as u64, m as u64, g as u64);
    let inner = match kind {
        UnitKind::ResNet => 2 * c64 * m64 + 9 * m64 * m64,
        UnitKind::ResNeXt => {
            require_divisible("m", m, g)?;
            2 * c64 * m64 + 9 * m64 * (m64 / g64)
        }
        UnitKind::ShuffleNet => {
            require_divisible("c", c, g)?;
            require_divisible("m", m, g)?;
            2 * (c64 / g64) * m64 + 9 * m64
        }
    };
    Ok(hw * inner)
}

/// Per-layer mult-adds of one stride-2 shuffle unit: first pointwise at the
/// incoming resolution, depthwise and second pointwise at the halved one;
/// the concat shortcut makes the branch produce `o - c` channels.
pub fn unit_flops_stride2(
    c: usize,
    o: usize,
    h: usize,
    w: usize,
    m: usize,
    g: usize,
    first_pw_grouped: bool,
) -> Result<u64> {
    require_positive(&[("c", c), ("o", o), ("h", h), ("w", w), ("m", m), ("g", g)])?;
    if o <= c {
        return Err(Error::InvalidSpec(format!(
            "stride-2 unit needs o > c, got {c} -> {o}"
        )));
    }
    require_divisible("m", m, g)?;
    require_divisible("branch channels", o - c, g)?;
    if first_pw_grouped {
        require_divisible("c", c, g)?;
    }
    let (oh, ow) = ((h - 1) / 2 + 1, (w - 1) / 2 + 1);
    let pw1_in = if first_pw_grouped { c / g } else { c };
    let pw1 = (h * w) as u64 * (pw1_in * m) as u64;
    let dw = (oh * ow) as u64 * (9 * m) as u64;
    let pw2 = (oh * ow) as u64 * ((m / g) * (o - c)) as u64;
    Ok(pw1 + dw + pw2)
}

/// Fraction of a resnext unit's mult-adds spent in its pointwise layers.
pub fn resnext_pointwise_share(c: usize, m: usize, g: usize) -> Result<f64> {
    require_positive(&[("c", c), ("m", m), ("g", g)])?;
    require_divisible("m", m, g)?;
    let pw = 2 * (c as u64) * (m as u64);
    let total = pw + 9 * (m as u64) * (m as u64 / g as u64);
    Ok(pw as f64 / total as f64)
}

/// Convolutions of one stride-1 unit, for costing via the same per-layer
/// machinery that prices whole networks.
pub fn unit_conv_stack(kind: UnitKind, c: usize, m: usize, g: usize) -> Vec<ConvSpec> {
    let conv3 = |cin: usize, cout: usize, groups: usize, depthwise: bool| ConvSpec {
        in_channels: cin,
        out_channels: cout,
        kernel: 3,
        stride: 1,
        pad: 1,
        groups,
        depthwise,
    };
    match kind {
        UnitKind::ResNet => vec![
            ConvSpec::pointwise(c, m, 1),
            conv3(m, m, 1, false),
            ConvSpec::pointwise(m, c, 1),
        ],
        UnitKind::ResNeXt => vec![
            ConvSpec::pointwise(c, m, 1),
            conv3(m, m, g, false),
            ConvSpec::pointwise(m, c, 1),
        ],
        UnitKind::ShuffleNet => vec![
            ConvSpec::pointwise(c, m, g),
            conv3(m, m, m, true),
            ConvSpec::pointwise(m, c, g),
        ],
    }
}

/// Sums [`unit_conv_stack`] through the per-layer cost rows.
pub fn unit_flops_counted(
    kind: UnitKind,
    c: usize,
    h: usize,
    w: usize,
    m: usize,
    g: usize,
) -> Result<u64> {
    let mut total = 0u64;
    let (mut ch, mut cw) = (h, w);
    for (i, conv) in unit_conv_stack(kind, c, m, g).iter().enumerate() {
        let (r, hw) = conv_row(&format!("conv{}", i + 1), conv, ch, cw)?;
        total += r.mult_adds;
        (ch, cw) = hw;
    }
    Ok(total)
}

/// Boolean channel-reachability matrix `reach[out][in]` across a layer stack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyMask {
    pub out_channels: usize,
    pub in_channels: usize,
    data: Vec<bool>,
}

impl DependencyMask {
    fn identity(c: usize) -> Self {
        let mut data = vec![false; c * c];
        for i in 0..c {
            data[i * c + i] = true;
        }
        DependencyMask {
            out_channels: c,
            in_channels: c,
            data,
        }
    }

    /// Expected mask of a grouped layer stack with no cross-group mixing.
    pub fn block_diagonal(out_channels: usize, in_channels: usize, groups: usize) -> Self {
        let og = out_channels / groups;
        let ig = in_channels / groups;
        let mut data = vec![false; out_channels * in_channels];
        for o in 0..out_channels {
            for i in 0..in_channels {
                data[o * in_channels + i] = o / og == i / ig;
            }
        }
        DependencyMask {
            out_channels,
            in_channels,
            data,
        }
    }

    pub fn full(out_channels: usize, in_channels: usize) -> Self {
        DependencyMask {
            out_channels,
            in_channels,
            data: vec![true; out_channels * in_channels],
        }
    }

    #[inline]
    pub fn get(&self, out: usize, inp: usize) -> bool {
        self.data[out * self.in_channels + inp]
    }

    pub fn is_fully_connected(&self) -> bool {
        self.data.iter().all(|&v| v)
    }

    /// Grid rendering: '#' related, '.' unrelated; rows are output channels.
    pub fn to_grid(&self) -> String {
        let mut s = String::new();
        for o in 0..self.out_channels {
            for i in 0..self.in_channels {
                s.push(if self.get(o, i) { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// One layer of a connectivity stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackLayer {
    GroupedPointwise {
        in_channels: usize,
        out_channels: usize,
        groups: usize,
    },
    Shuffle {
        channels: usize,
        groups: usize,
    },
}

impl StackLayer {
    fn in_channels(&self) -> usize {
        match self {
            StackLayer::GroupedPointwise { in_channels, .. } => *in_channels,
            StackLayer::Shuffle { channels, .. } => *channels,
        }
    }
}

/// Propagates structural reachability through grouped pointwise convolutions
/// and shuffles: grouped layers connect within groups, shuffles permute.
pub fn connectivity_mask(stack: &[StackLayer]) -> Result<DependencyMask> {
    let first = stack
        .first()
        .ok_or_else(|| Error::InvalidSpec("connectivity stack is empty".into()))?;
    let mut mask = DependencyMask::identity(first.in_channels());

    for layer in stack {
        if layer.in_channels() != mask.out_channels {
            return Err(Error::ShapeMismatch(format!(
                "stack layer expects {} channels, previous layer produced {}",
                layer.in_channels(),
                mask.out_channels
            )));
        }
        let stepped = match layer {
            StackLayer::GroupedPointwise {
                in_channels,
                out_channels,
                groups,
            } => {
                require_divisible("in_channels", *in_channels, *groups)?;
                require_divisible("out_channels", *out_channels, *groups)?;
                let og = out_channels / groups;
                let ig = in_channels / groups;
                let mut next = DependencyMask {
                    out_channels: *out_channels,
                    in_channels: mask.in_channels,
                    data: vec![false; out_channels * mask.in_channels],
                };
                for o in 0..*out_channels {
                    let g = o / og;
                    for mid in g * ig..(g + 1) * ig {
                        for i in 0..mask.in_channels {
                            if mask.get(mid, i) {
                                next.data[o * next.in_channels + i] = true;
                            }
                        }
                    }
                }
                next
            }
            StackLayer::Shuffle { channels, groups } => {
                let perm = channel_shuffle_perm(*channels, *groups)?;
                let mut next = DependencyMask {
                    out_channels: *channels,
                    in_channels: mask.in_channels,
                    data: vec![false; channels * mask.in_channels],
                };
                for (o, &src) in perm.iter().enumerate() {
                    for i in 0..mask.in_channels {
                        if mask.get(src, i) {
                            next.data[o * next.in_channels + i] = true;
                        }
                    }
                }
                next
            }
        };
        mask = stepped;
    }

    debug_assert!(
        (0..mask.out_channels).all(|o| (0..mask.in_channels).any(|i| mask.get(o, i))),
        "every output channel must reach at least one input"
    );
    Ok(mask)
}

fn round4(v: f64) -> f64 {
    (v * 10_000.0).round() / 10_000.0
}

fn shape_str(s: (usize, usize, usize, usize)) -> String {
    format!("{}x{}x{}x{}", s.0, s.1, s.2, s.3)
}

impl CostReport {
    pub fn overall_intensity(&self) -> f64 {
        if self.total_bytes == 0 {
            0.0
        } else {
            self.total_mult_adds as f64 / self.total_bytes as f64
        }
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                serde_json::json!({
                    "layer": r.name,
                    "kind": r.kind,
                    "out_shape": shape_str(r.out_shape),
                    "mult_adds": r.mult_adds,
                    "params": r.params,
                    "bytes": r.bytes,
                    "intensity": round4(r.intensity),
                })
            })
            .collect();
        let value = serde_json::json!({
            "rows": rows,
            "totals": {
                "mult_adds": self.total_mult_adds,
                "params": self.total_params,
                "bytes": self.total_bytes,
                "intensity": round4(self.overall_intensity()),
            }
        });
        serde_json::to_string_pretty(&value).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,kind,out_shape,mult_adds,params,bytes,intensity\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.4}\n",
                r.name,
                r.kind,
                shape_str(r.out_shape),
                r.mult_adds,
                r.params,
                r.bytes,
                r.intensity
            ));
        }
        out.push_str(&format!(
            "total,,,{},{},{},{:.4}\n",
            self.total_mult_adds,
            self.total_params,
            self.total_bytes,
            self.overall_intensity()
        ));
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:<12} {:>14} {:>12} {:>10} {:>12} {:>10}\n",
            "layer", "kind", "out_shape", "mult_adds", "params", "bytes", "intensity"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<20} {:<12} {:>14} {:>12} {:>10} {:>12} {:>10.4}\n",
                r.name,
                r.kind,
                shape_str(r.out_shape),
                r.mult_adds,
                r.params,
                r.bytes,
                r.intensity
            ));
        }
        out.push_str(&format!(
            "{:<20} {:<12} {:>14} {:>12} {:>10} {:>12} {:>10.4}\n",
            "total",
            "",
            "",
            self.total_mult_adds,
            self.total_params,
            self.total_bytes,
            self.overall_intensity()
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::build_shufflenet;

    #[test]
    fn closed_form_examples() {
        assert_eq!(
            unit_flops(UnitKind::ResNet, 240, 28, 28, 60, 1).unwrap(),
            47_980_800
        );
        assert_eq!(
            unit_flops(UnitKind::ShuffleNet, 240, 28, 28, 60, 3).unwrap(),
            7_949_760
        );
    }

    #[test]
    fn resnext_share_is_93_4_percent() {
        let share = resnext_pointwise_share(256, 128, 32).unwrap();
        assert!((share - 0.934).abs() < 0.0005, "share {share}");
        // The share is independent of resolution by construction; the
        // counted route confirms at two sizes.
        let a = unit_flops_counted(UnitKind::ResNeXt, 256, 7, 7, 128, 32).unwrap();
        let b = unit_flops_counted(UnitKind::ResNeXt, 256, 14, 14, 128, 32).unwrap();
        assert_eq!(b, 4 * a);
    }

    #[test]
    fn closed_form_matches_counted_route() {
        for kind in [UnitKind::ResNet, UnitKind::ResNeXt, UnitKind::ShuffleNet] {
            let (c, m, g) = (48, 24, 4);
            for hw in [(7usize, 7usize), (28, 28), (13, 5)] {
                assert_eq!(
                    unit_flops(kind, c, hw.0, hw.1, m, g).unwrap(),
                    unit_flops_counted(kind, c, hw.0, hw.1, m, g).unwrap(),
                    "{kind:?} {hw:?}"
                );
            }
        }
    }

    #[test]
    fn stride2_unit_cost_example() {
        let cost = unit_flops_stride2(24, 240, 56, 56, 60, 3, false).unwrap();
        assert_eq!(cost, 8_326_080);
        assert!(unit_flops_stride2(240, 240, 28, 28, 60, 3, true).is_err());
    }

    #[test]
    fn count_flops_reproduces_table_totals() {
        let expected = [
            (1usize, 143_078_976u64),
            (2, 140_836_512),
            (3, 137_460_672),
            (4, 134_339_776),
            (8, 138_365_952),
        ];
        for (g, want) in expected {
            let net = build_shufflenet(g, 1.0, false, 42).unwrap();
            let report = count_flops(&net, (224, 224)).unwrap();
            assert_eq!(report.total_mult_adds, want, "g={g}");
        }
    }

    #[test]
    fn count_flops_matches_single_unit_formula() {
        let spec = ShuffleUnitSpec::new(240, 240, 3, 1, true).unwrap();
        let report = count_flops_descs(&[LayerDesc::ShuffleUnit(spec)], (28, 28)).unwrap();
        assert_eq!(
            report.total_mult_adds,
            unit_flops(UnitKind::ShuffleNet, 240, 28, 28, 60, 3).unwrap()
        );
    }

    #[test]
    fn doubling_resolution_quadruples_convs_only() {
        let net = build_shufflenet(3, 1.0, false, 42).unwrap();
        let base = count_flops(&net, (224, 224)).unwrap();
        let big = count_flops(&net, (448, 448)).unwrap();
        for (a, b) in base.rows.iter().zip(&big.rows) {
            if a.kind == "fc" {
                assert_eq!(a.mult_adds, b.mult_adds);
            } else if a.mult_adds > 0 {
                assert_eq!(4 * a.mult_adds, b.mult_adds, "{}", a.name);
            }
        }
    }

    #[test]
    fn degenerate_resolution_fails_small_one_bottoms_out() {
        let net = build_shufflenet(3, 1.0, false, 42).unwrap();
        assert!(count_flops(&net, (0, 224)).is_err());
        // Padding keeps every stage alive down to 1x1 planes.
        let tiny = count_flops(&net, (16, 16)).unwrap();
        assert!(tiny.total_mult_adds > 0);
    }

    #[test]
    fn connectivity_two_grouped_layers_block_diagonal() {
        let stack = [
            StackLayer::GroupedPointwise {
                in_channels: 4,
                out_channels: 4,
                groups: 2,
            },
            StackLayer::GroupedPointwise {
                in_channels: 4,
                out_channels: 4,
                groups: 2,
            },
        ];
        let mask = connectivity_mask(&stack).unwrap();
        assert_eq!(mask, DependencyMask::block_diagonal(4, 4, 2));
        assert!(!mask.is_fully_connected());
    }

    #[test]
    fn connectivity_shuffle_fully_relates() {
        let stack = [
            StackLayer::GroupedPointwise {
                in_channels: 4,
                out_channels: 4,
                groups: 2,
            },
            StackLayer::Shuffle {
                channels: 4,
                groups: 2,
            },
            StackLayer::GroupedPointwise {
                in_channels: 4,
                out_channels: 4,
                groups: 2,
            },
        ];
        let mask = connectivity_mask(&stack).unwrap();
        assert_eq!(mask, DependencyMask::full(4, 4));
    }

    #[test]
    fn connectivity_dense_layer_is_full() {
        let stack = [StackLayer::GroupedPointwise {
            in_channels: 6,
            out_channels: 8,
            groups: 1,
        }];
        assert!(connectivity_mask(&stack).unwrap().is_fully_connected());
    }

    #[test]
    fn connectivity_rejects_channel_mismatch() {
        let stack = [
            StackLayer::GroupedPointwise {
                in_channels: 4,
                out_channels: 6,
                groups: 2,
            },
            StackLayer::GroupedPointwise {
                in_channels: 4,
                out_channels: 4,
                groups: 2,
            },
        ];
        assert!(connectivity_mask(&stack).is_err());
    }

    #[test]
    fn doubling_scale_roughly_quadruples_cost() {
        // conv1 and fc scale sub-quadratically, so the ratio sits below 4.
        let base = count_flops(&build_shufflenet(3, 1.0, false, 42).unwrap(), (224, 224)).unwrap();
        let twice = count_flops(&build_shufflenet(3, 2.0, false, 42).unwrap(), (224, 224)).unwrap();
        let ratio = twice.total_mult_adds as f64 / base.total_mult_adds as f64;
        assert!((3.4..=4.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn csv_has_totals_row_last() {
        let net = build_shufflenet(3, 0.25, false, 42).unwrap();
        let report = count_flops(&net, (224, 224)).unwrap();
        let csv = report.to_csv();
        let last = csv.lines().last().unwrap();
        assert!(last.starts_with("total,"));
    }
}
