//! Dense rank-4 tensor in NCHW layout.
//!
//! All kernels in this crate trade in [`Tensor`] values. Data is a single
//! contiguous `f32` buffer ordered batch, channel, row, column, so each
//! `(n, c)` spatial plane is a contiguous `h * w` slice.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor from a flat NCHW buffer. Every dimension must be at
    /// least 1 and the buffer length must equal `n * c * h * w`.
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::ShapeMismatch(format!(
                "all dimensions must be >= 1, got ({n},{c},{h},{w})"
            )));
        }
        let want = n * c * h * w;
        if data.len() != want {
            return Err(Error::ShapeMismatch(format!(
                "data length {} does not match shape ({n},{c},{h},{w}) = {want}",
                data.len()
            )));
        }
        Ok(Tensor { n, c, h, w, data })
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        Tensor::new(n, c, h, w, vec![0.0; n * c * h * w])
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn batch(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    /// Contiguous `h * w` spatial plane for one (batch, channel) pair.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub(crate) fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let hw = self.h * self.w;
        let start = (n * self.c + c) * hw;
        &mut self.data[start..start + hw]
    }

    /// Concatenates `other` after `self` along the channel axis.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        if self.n != other.n || self.h != other.h || self.w != other.w {
            return Err(Error::ShapeMismatch(format!(
                "concat_channels requires matching n/h/w, got ({},{},{}) vs ({},{},{})",
                self.n, self.h, self.w, other.n, other.h, other.w
            )));
        }
        let c_out = self.c + other.c;
        let hw = self.h * self.w;
        let mut data = Vec::with_capacity(self.n * c_out * hw);
        for n in 0..self.n {
            data.extend_from_slice(&self.data[n * self.c * hw..(n + 1) * self.c * hw]);
            data.extend_from_slice(&other.data[n * other.c * hw..(n + 1) * other.c * hw]);
        }
        Tensor::new(self.n, c_out, self.h, self.w, data)
    }

    /// Elementwise sum; shapes must be identical.
    pub fn add_elementwise(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "add_elementwise requires identical shapes, got {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Tensor::new(self.n, self.c, self.h, self.w, data)
    }

    /// Copies channels `lo..hi` (half-open, non-empty) into a new tensor.
    pub fn slice_channels(&self, lo: usize, hi: usize) -> Result<Tensor> {
        if lo >= hi || hi > self.c {
            return Err(Error::ChannelRange {
                lo,
                hi,
                channels: self.c,
            });
        }
        let c_out = hi - lo;
        let hw = self.h * self.w;
        let mut data = Vec::with_capacity(self.n * c_out * hw);
        for n in 0..self.n {
            let start = (n * self.c + lo) * hw;
            data.extend_from_slice(&self.data[start..start + c_out * hw]);
        }
        Tensor::new(self.n, c_out, self.h, self.w, data)
    }
}
