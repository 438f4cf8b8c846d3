//! Dense NCHW tensors and the kernels the network is built from.
//!
//! Every kernel here is a pure function with a fixed per-element summation
//! order, so results are bit-identical across runs and thread counts.

mod conv;
mod elementwise;
mod matmul;
mod norm;
mod resize;
mod shuffle;

pub use conv::{conv2d, Conv2dParams, PadMode};
pub use elementwise::{add, gelu, gelu_scalar, mul, ElementwiseOp, elementwise_map};
pub use matmul::{matmul_batched, MatrixBatch};
pub use norm::{rms_norm, softmax_axis, Axis};
pub use resize::{area_resize, bicubic_resize, bilinear_resize};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};


use crate::error::{shape_err, Result};

/// Extent of a rank-4 tensor in (batch, channels, height, width) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape4 {
    pub const fn new(batch: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            batch,
            channels,
            height,
            width,
        }
    }

    pub const fn numel(&self) -> usize {
        self.batch * self.channels * self.height * self.width
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }

    pub const fn with_channels(self, channels: usize) -> Self {
        Self { channels, ..self }
    }

    pub const fn as_array(&self) -> [usize; 4] {
        [self.batch, self.channels, self.height, self.width]
    }
}

impl std::fmt::Display for Shape4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.batch, self.channels, self.height, self.width
        )
    }
}

impl From<[usize; 4]> for Shape4 {
    fn from(d: [usize; 4]) -> Self {
        Self::new(d[0], d[1], d[2], d[3])
    }
}

/// Row-major `f32` tensor indexed as `(b, c, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape4,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(shape: impl Into<Shape4>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Shape4>, value: f32) -> Self {
        let shape = shape.into();
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn from_vec(shape: impl Into<Shape4>, data: Vec<f32>) -> Result<Self> {
        let shape = shape.into();
        if data.len() != shape.numel() {
            return Err(shape_err!(
                "{} elements do not fill a {shape} tensor ({} expected)",
                data.len(),
                shape.numel()
            ));
        }
        Ok(Self { shape, data })
    }

    /// Builds a tensor by evaluating `f(b, c, h, w)` at every index.
    pub fn from_fn(
        shape: impl Into<Shape4>,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Self {
        let shape = shape.into();
        let mut data = Vec::with_capacity(shape.numel());
        for b in 0..shape.batch {
            for c in 0..shape.channels {
                for h in 0..shape.height {
                    for w in 0..shape.width {
                        data.push(f(b, c, h, w));
                    }
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape.batch
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, c: usize, h: usize, w: usize) -> usize {
        ((b * self.shape.channels + c) * self.shape.height + h) * self.shape.width + w
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.offset(b, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, h: usize, w: usize, value: f32) {
        let i = self.offset(b, c, h, w);
        self.data[i] = value;
    }

    /// The contiguous `h x w` plane of channel `c` in batch item `b`.
    pub fn plane(&self, b: usize, c: usize) -> &[f32] {
        let n = self.shape.plane();
        let start = (b * self.shape.channels + c) * n;
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, b: usize, c: usize) -> &mut [f32] {
        let n = self.shape.plane();
        let start = (b * self.shape.channels + c) * n;
        &mut self.data[start..start + n]
    }

    /// Copies channels `start..start + len` into a new tensor.
    pub fn channel_slice(&self, start: usize, len: usize) -> Result<Tensor4> {
        if start + len > self.shape.channels {
            return Err(shape_err!(
                "channel slice {start}..{} out of range for {}",
                start + len,
                self.shape
            ));
        }
        let shape = self.shape.with_channels(len);
        let n = self.shape.plane();
        let mut data = Vec::with_capacity(shape.numel());
        for b in 0..self.shape.batch {
            let from = (b * self.shape.channels + start) * n;
            data.extend_from_slice(&self.data[from..from + len * n]);
        }
        Ok(Tensor4 { shape, data })
    }

    /// Splits the channel axis into `parts` equal chunks, in order.
    pub fn split_channels(&self, parts: usize) -> Result<Vec<Tensor4>> {
        if parts == 0 || !self.shape.channels.is_multiple_of(parts) {
            return Err(shape_err!(
                "cannot split {} channels into {parts} equal parts",
                self.shape.channels
            ));
        }
        let len = self.shape.channels / parts;
        (0..parts).map(|i| self.channel_slice(i * len, len)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor4) -> f32 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }

    /// Bitwise equality of shape and payload (distinguishes `-0.0`, equal NaNs).
    pub fn bit_eq(&self, other: &Tensor4) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Concatenates along the channel axis in argument order.
pub fn concat_channels(parts: &[&Tensor4]) -> Result<Tensor4> {
    let first = parts
        .first()
        .ok_or_else(|| shape_err!("concat_channels needs at least one tensor"))?;
    let base = first.shape();
    for p in parts {
        let s = p.shape();
        if (s.batch, s.height, s.width) != (base.batch, base.height, base.width) {
            return Err(shape_err!("cannot concat {s} with {base} along channels"));
        }
    }
    let channels = parts.iter().map(|p| p.channels()).sum();
    let shape = base.with_channels(channels);
    let n = base.plane();
    let mut data = Vec::with_capacity(shape.numel());
    for b in 0..base.batch {
        for p in parts {
            let c = p.channels();
            data.extend_from_slice(&p.data()[b * c * n..(b + 1) * c * n]);
        }
    }
    Tensor4::from_vec(shape, data)
}

/// Extends the bottom and right edges by mirroring, without repeating the
/// edge sample. Any amount of padding is allowed.
pub fn reflect_pad(input: &Tensor4, bottom: usize, right: usize) -> Tensor4 {
    let s = input.shape();
    Tensor4::from_fn([s.batch, s.channels, s.height + bottom, s.width + right], |b, c, h, w| {
        input.get(
            b,
            c,
            reflect_index(h as isize, s.height),
            reflect_index(w as isize, s.width),
        )
    })
}

/// The top-left `height x width` window of every plane.
pub fn crop(input: &Tensor4, height: usize, width: usize) -> Result<Tensor4> {
    let s = input.shape();
    if height > s.height || width > s.width {
        return Err(shape_err!("cannot crop {s} to {height}x{width}"));
    }
    Ok(Tensor4::from_fn([s.batch, s.channels, height, width], |b, c, h, w| {
        input.get(b, c, h, w)
    }))
}

/// Index into `0..n` after mirroring `i` about the edges without repeating
/// the edge sample (`-1 -> 1`, `n -> n - 2`). Handles arbitrary overshoot.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}
