//! 2-D convolution kernels: a direct reference implementation and an
//! im2col + blocked-GEMM fast path with a specialized depthwise kernel.
//!
//! Weight layout is `[c_out, c_in / groups, k, k]`, row-major. Output channel
//! `j` belongs to group `j / (c_out / groups)` and reads only the input
//! channels of that group.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Hyper-parameters of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Square kernel extent.
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub depthwise: bool,
}

impl ConvSpec {
    pub fn pointwise(in_channels: usize, out_channels: usize, groups: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel: 1,
            stride: 1,
            pad: 0,
            groups,
            depthwise: false,
        }
    }

    pub fn depthwise3x3(channels: usize, stride: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel: 3,
            stride,
            pad: 1,
            groups: channels,
            depthwise: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 {
            return Err(Error::InvalidSpec(format!(
                "conv dimensions must be >= 1: {self:?}"
            )));
        }
        if !(self.stride == 1 || self.stride == 2) {
            return Err(Error::InvalidSpec(format!(
                "conv stride must be 1 or 2, got {}",
                self.stride
            )));
        }
        if self.groups == 0 {
            return Err(Error::InvalidSpec("groups must be >= 1".into()));
        }
        if !self.in_channels.is_multiple_of(self.groups) {
            return Err(Error::Divisibility {
                what: "in_channels",
                value: self.in_channels,
                groups: self.groups,
            });
        }
        if !self.out_channels.is_multiple_of(self.groups) {
            return Err(Error::Divisibility {
                what: "out_channels",
                value: self.out_channels,
                groups: self.groups,
            });
        }
        if self.depthwise
            && (self.groups != self.in_channels
                || self.out_channels != self.in_channels
                || self.kernel != 3)
        {
            return Err(Error::InvalidSpec(format!(
                "depthwise requires groups == in_channels == out_channels and kernel 3: {self:?}"
            )));
        }
        Ok(())
    }

    /// Output spatial dims: `floor((d + 2p - k) / s) + 1` for each of h, w.
    pub fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let span_h = h + 2 * self.pad;
        let span_w = w + 2 * self.pad;
        if span_h < self.kernel || span_w < self.kernel {
            return Err(Error::DegenerateOutput(format!(
                "kernel {} does not fit input {}x{} with pad {}",
                self.kernel, h, w, self.pad
            )));
        }
        Ok((
            (span_h - self.kernel) / self.stride + 1,
            (span_w - self.kernel) / self.stride + 1,
        ))
    }

    /// Number of weight elements: `c_out * (c_in / g) * k * k`.
    pub fn weight_len(&self) -> usize {
        self.out_channels * (self.in_channels / self.groups) * self.kernel * self.kernel
    }

    fn check_args(&self, x: &Tensor, weights: &[f32]) -> Result<()> {
        self.validate()?;
        if x.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels, spec expects {}",
                x.channels(),
                self.in_channels
            )));
        }
        if weights.len() != self.weight_len() {
            return Err(Error::ShapeMismatch(format!(
                "weight buffer has {} elements, spec expects {}",
                weights.len(),
                self.weight_len()
            )));
        }
        Ok(())
    }
}

/// Direct seven-loop convolution. The reference oracle for every fast path.
pub fn conv2d_naive(x: &Tensor, weights: &[f32], spec: &ConvSpec) -> Result<Tensor> {
    spec.check_args(x, weights)?;
    let (n, _, h, w) = x.shape();
    let (oh, ow) = spec.out_dims(h, w)?;
    let cig = spec.in_channels / spec.groups; // channels per input group
    let cog = spec.out_channels / spec.groups;
    let k = spec.kernel;
    let mut out = Tensor::zeros(n, spec.out_channels, oh, ow)?;

    for b in 0..n {
        for oc in 0..spec.out_channels {
            let group = oc / cog;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for ic in 0..cig {
                        for ky in 0..k {
                            let iy = (oy * spec.stride + ky) as isize - spec.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = (ox * spec.stride + kx) as isize - spec.pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let wv = weights[((oc * cig + ic) * k + ky) * k + kx];
                                let xv = x.at(b, group * cig + ic, iy as usize, ix as usize);
                                acc += wv * xv;
                            }
                        }
                    }
                    out.plane_mut(b, oc)[oy * ow + ox] = acc;
                }
            }
        }
    }
    Ok(out)
}

/// im2col + blocked matrix-multiply execution path. Grouped convolutions run
/// one multiply per group; depthwise takes a direct kernel over a padded
/// scratch plane. Numerically matches [`conv2d_naive`] within relative 1e-4.
pub fn conv2d_fast(x: &Tensor, weights: &[f32], spec: &ConvSpec) -> Result<Tensor> {
    spec.check_args(x, weights)?;
    let full_group = spec.groups == spec.in_channels && spec.groups == spec.out_channels;
    if spec.kernel == 3 && (spec.depthwise || full_group) {
        return depthwise3x3_direct(x, weights, spec);
    }
    let (n, _, h, w) = x.shape();
    let (oh, ow) = spec.out_dims(h, w)?;
    let cig = spec.in_channels / spec.groups;
    let cog = spec.out_channels / spec.groups;
    let k = spec.kernel;
    let cols_k = cig * k * k;
    let cols_n = oh * ow;
    let mut out = Tensor::zeros(n, spec.out_channels, oh, ow)?;

    // 1x1 stride-1 unpadded convolutions skip im2col: the input channel
    // planes already form the column matrix.
    let direct_pointwise = k == 1 && spec.stride == 1 && spec.pad == 0;
    let mut cols = if direct_pointwise {
        Vec::new()
    } else {
        vec![0.0f32; cols_k * cols_n]
    };

    for b in 0..n {
        for g in 0..spec.groups {
            let a = &weights[g * cog * cols_k..(g + 1) * cog * cols_k];
            let hw = h * w;
            let out_base = (b * spec.out_channels + g * cog) * cols_n;
            let out_block = &mut out.data_mut()[out_base..out_base + cog * cols_n];
            if direct_pointwise {
                let in_base = (b * spec.in_channels + g * cig) * hw;
                let bmat = &x.data()[in_base..in_base + cig * hw];
                gemm(a, bmat, out_block, cog, cols_k, cols_n);
            } else {
                im2col_group(x, b, g * cig, cig, spec, oh, ow, &mut cols);
                gemm(a, &cols, out_block, cog, cols_k, cols_n);
            }
        }
    }
    Ok(out)
}

/// Packs one input-channel group into a `[cig*k*k, oh*ow]` column matrix.
#[allow(clippy::too_many_arguments)]
fn im2col_group(
    x: &Tensor,
    batch: usize,
    c_lo: usize,
    cig: usize,
    spec: &ConvSpec,
    oh: usize,
    ow: usize,
    cols: &mut [f32],
) {
    let (_, _, h, w) = x.shape();
    let k = spec.kernel;
    let s = spec.stride;
    let p = spec.pad as isize;
    for ic in 0..cig {
        let plane = x.plane(batch, c_lo + ic);
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ic * k + ky) * k + kx) * oh * ow..][..oh * ow];
                for oy in 0..oh {
                    let iy = (oy * s + ky) as isize - p;
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    if s == 1 {
                        // Zero the padded edges, memcpy the in-bounds span.
                        let ix0 = kx as isize - p;
                        let lo = (-ix0).clamp(0, ow as isize) as usize;
                        let hi = ((w as isize - ix0).clamp(0, ow as isize) as usize).max(lo);
                        dst[..lo].fill(0.0);
                        dst[hi..].fill(0.0);
                        if lo < hi {
                            let start = (ix0 + lo as isize) as usize;
                            dst[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            *d = if ix >= 0 && (ix as usize) < w {
                                src[ix as usize]
                            } else {
                                0.0
                            };
                        }
                    }
                }
            }
        }
    }
}

/// `c += a * b` with `a: [m, k]`, `b: [k, n]`, `c: [m, n]`, all row-major.
/// Blocked over columns so the streamed slice of `b` stays cache-resident.
fn gemm(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    const NB: usize = 256;
    let mut j0 = 0;
    while j0 < n {
        let nb = NB.min(n - j0);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let c_row = &mut c[i * n + j0..i * n + j0 + nb];
            for (kk, &aik) in a_row.iter().enumerate() {
                let b_row = &b[kk * n + j0..kk * n + j0 + nb];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += aik * bv;
                }
            }
        }
        j0 += nb;
    }
}

/// Direct 3x3 depthwise kernel over a zero-padded scratch plane; im2col
/// degenerates at one channel per group.
fn depthwise3x3_direct(x: &Tensor, weights: &[f32], spec: &ConvSpec) -> Result<Tensor> {
    let (n, c, h, w) = x.shape();
    let (oh, ow) = spec.out_dims(h, w)?;
    let s = spec.stride;
    let p = spec.pad;
    let ph = h + 2 * p;
    let pw = w + 2 * p;
    let mut padded = vec![0.0f32; ph * pw];
    let mut out = Tensor::zeros(n, c, oh, ow)?;

    for b in 0..n {
        for ch in 0..c {
            let plane = x.plane(b, ch);
            if p > 0 {
                padded.fill(0.0);
            }
            for y in 0..h {
                padded[(y + p) * pw + p..(y + p) * pw + p + w]
                    .copy_from_slice(&plane[y * w..(y + 1) * w]);
            }
            let wk = &weights[ch * 9..(ch + 1) * 9];
            let dst = out.plane_mut(b, ch);
            for oy in 0..oh {
                let r0 = &padded[(oy * s) * pw..(oy * s) * pw + pw];
                let r1 = &padded[(oy * s + 1) * pw..(oy * s + 1) * pw + pw];
                let r2 = &padded[(oy * s + 2) * pw..(oy * s + 2) * pw + pw];
                let drow = &mut dst[oy * ow..(oy + 1) * ow];
                for (ox, d) in drow.iter_mut().enumerate() {
                    let ix = ox * s;
                    *d = wk[0] * r0[ix]
                        + wk[1] * r0[ix + 1]
                        + wk[2] * r0[ix + 2]
                        + wk[3] * r1[ix]
                        + wk[4] * r1[ix + 1]
                        + wk[5] * r1[ix + 2]
                        + wk[6] * r2[ix]
                        + wk[7] * r2[ix + 1]
                        + wk[8] * r2[ix + 2];
                }
            }
        }
    }
    Ok(out)
}
