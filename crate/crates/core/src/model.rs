//! Binary model container.
//!
//! Layout, all little-endian: magic `SNF1`, version u32, groups u32,
//! scale f32, shallow u8, seed u64, layer count u32, then one tagged record
//! per layer. Weight blobs are raw f32 bit patterns, so a
//! serialize/deserialize/serialize round trip is byte-identical.

use std::fs;
use std::path::Path;

use crate::arch::{Family, Layer, NetworkSpec};
use crate::error::{Error, Result};
use crate::kernels::{BnParams, ConvSpec};
use crate::units::{ConvLayer, ShuffleUnitSpec, ShuffleUnitWeights};

pub const MAGIC: [u8; 4] = *b"SNF1";
pub const VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_MAXPOOL: u8 = 2;
const TAG_SHUFFLE_UNIT: u8 = 3;
const TAG_GLOBAL_AVG_POOL: u8 = 4;
const TAG_FULLY_CONNECTED: u8 = 5;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32_vec(&mut self, v: &[f32]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f32(*x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::CorruptModel(format!(
                "unexpected end of file at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
    fn f32_vec(&mut self) -> Result<Vec<f32>> {
        let len = self.u64()? as usize;
        let bytes = self.take(len.checked_mul(4).ok_or_else(|| {
            Error::CorruptModel("weight blob length overflows".into())
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn write_conv_spec(w: &mut Writer, spec: &ConvSpec) {
    w.u32(spec.in_channels as u32);
    w.u32(spec.out_channels as u32);
    w.u32(spec.kernel as u32);
    w.u32(spec.stride as u32);
    w.u32(spec.pad as u32);
    w.u32(spec.groups as u32);
    w.u8(spec.depthwise as u8);
}

fn read_conv_spec(r: &mut Reader) -> Result<ConvSpec> {
    Ok(ConvSpec {
        in_channels: r.usize32()?,
        out_channels: r.usize32()?,
        kernel: r.usize32()?,
        stride: r.usize32()?,
        pad: r.usize32()?,
        groups: r.usize32()?,
        depthwise: r.u8()? != 0,
    })
}

fn write_bn(w: &mut Writer, bn: &BnParams) {
    w.f32(bn.epsilon);
    w.f32_vec(&bn.gamma);
    w.f32_vec(&bn.beta);
    w.f32_vec(&bn.running_mean);
    w.f32_vec(&bn.running_var);
}

fn read_bn(r: &mut Reader) -> Result<BnParams> {
    Ok(BnParams {
        epsilon: r.f32()?,
        gamma: r.f32_vec()?,
        beta: r.f32_vec()?,
        running_mean: r.f32_vec()?,
        running_var: r.f32_vec()?,
    })
}

fn write_conv_layer(w: &mut Writer, layer: &ConvLayer) {
    write_conv_spec(w, &layer.spec);
    w.u8(layer.relu as u8);
    w.f32_vec(&layer.weights);
    write_bn(w, &layer.bn);
}

fn read_conv_layer(r: &mut Reader) -> Result<ConvLayer> {
    let spec = read_conv_spec(r)?;
    let relu = r.u8()? != 0;
    let weights = r.f32_vec()?;
    let bn = read_bn(r)?;
    if weights.len() != spec.weight_len() {
        return Err(Error::CorruptModel(format!(
            "conv weight blob has {} elements, spec wants {}",
            weights.len(),
            spec.weight_len()
        )));
    }
    Ok(ConvLayer {
        spec,
        weights,
        bn,
        relu,
    })
}

pub fn serialize_model(spec: &NetworkSpec) -> Result<Vec<u8>> {
    if spec.family != Family::ShuffleNet {
        return Err(Error::InvalidSpec(
            "only shuffle-unit networks are serializable".into(),
        ));
    }
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.u32(VERSION);
    w.u32(spec.groups as u32);
    w.f32(spec.scale);
    w.u8(spec.shallow as u8);
    w.u64(spec.seed);
    w.u32(spec.layers.len() as u32);
    for layer in &spec.layers {
        match layer {
            Layer::Conv(cl) => {
                w.u8(TAG_CONV);
                write_conv_layer(&mut w, cl);
            }
            Layer::MaxPool { kernel, stride, pad } => {
                w.u8(TAG_MAXPOOL);
                w.u32(*kernel as u32);
                w.u32(*stride as u32);
                w.u32(*pad as u32);
            }
            Layer::ShuffleUnit { spec: us, weights } => {
                w.u8(TAG_SHUFFLE_UNIT);
                w.u32(us.in_channels as u32);
                w.u32(us.out_channels as u32);
                w.u32(us.groups as u32);
                w.u32(us.stride as u32);
                w.u32(us.bottleneck_channels as u32);
                w.u8(us.first_pw_grouped as u8);
                write_conv_layer(&mut w, &weights.pw1);
                write_conv_layer(&mut w, &weights.dw);
                write_conv_layer(&mut w, &weights.pw2);
            }
            Layer::GlobalAvgPool => w.u8(TAG_GLOBAL_AVG_POOL),
            Layer::FullyConnected {
                in_features,
                classes,
                weights,
                bias,
            } => {
                w.u8(TAG_FULLY_CONNECTED);
                w.u32(*in_features as u32);
                w.u32(*classes as u32);
                w.f32_vec(weights);
                w.f32_vec(bias);
            }
            Layer::ComparisonUnit { .. } => {
                return Err(Error::InvalidSpec(
                    "comparison units are not serializable".into(),
                ))
            }
        }
    }
    Ok(w.buf)
}

pub fn deserialize_model(bytes: &[u8]) -> Result<NetworkSpec> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::CorruptModel(format!(
            "bad magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::CorruptModel(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let groups = r.usize32()?;
    let scale = r.f32()?;
    let shallow = r.u8()? != 0;
    let seed = r.u64()?;
    let layer_count = r.usize32()?;

    let mut layers = Vec::with_capacity(layer_count.min(1 << 16));
    for _ in 0..layer_count {
        let tag = r.u8()?;
        let layer = match tag {
            TAG_CONV => Layer::Conv(read_conv_layer(&mut r)?),
            TAG_MAXPOOL => Layer::MaxPool {
                kernel: r.usize32()?,
                stride: r.usize32()?,
                pad: r.usize32()?,
            },
            TAG_SHUFFLE_UNIT => {
                let us = ShuffleUnitSpec {
                    in_channels: r.usize32()?,
                    out_channels: r.usize32()?,
                    groups: r.usize32()?,
                    stride: r.usize32()?,
                    bottleneck_channels: r.usize32()?,
                    first_pw_grouped: r.u8()? != 0,
                };
                us.validate()
                    .map_err(|e| Error::CorruptModel(format!("bad unit record: {e}")))?;
                let weights = Box::new(ShuffleUnitWeights {
                    pw1: read_conv_layer(&mut r)?,
                    dw: read_conv_layer(&mut r)?,
                    pw2: read_conv_layer(&mut r)?,
                });
                Layer::ShuffleUnit { spec: us, weights }
            }
            TAG_GLOBAL_AVG_POOL => Layer::GlobalAvgPool,
            TAG_FULLY_CONNECTED => {
                let in_features = r.usize32()?;
                let classes = r.usize32()?;
                let weights = r.f32_vec()?;
                let bias = r.f32_vec()?;
                if weights.len() != in_features * classes || bias.len() != classes {
                    return Err(Error::CorruptModel("bad fc record lengths".into()));
                }
                Layer::FullyConnected {
                    in_features,
                    classes,
                    weights,
                    bias,
                }
            }
            other => {
                return Err(Error::CorruptModel(format!("unknown layer tag {other}")));
            }
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptModel(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - r.pos
        )));
    }
    Ok(NetworkSpec {
        family: Family::ShuffleNet,
        groups,
        scale,
        shallow,
        seed,
        layers,
    })
}

pub fn save_model(spec: &NetworkSpec, path: impl AsRef<Path>) -> Result<()> {
    let bytes = serialize_model(spec)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let bytes = fs::read(path)?;
    deserialize_model(&bytes)
}
