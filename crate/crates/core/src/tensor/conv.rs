use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{reflect_index, Shape4, Tensor4};
use crate::error::{shape_err, PixieError, Result};

/// How the border is extended before a convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    #[default]
    Zeros,
    /// Mirror without repeating the edge sample. Requires `padding < dim`.
    Reflect,
}

/// Weights and geometry of a square 2D convolution.
///
/// `weight` has dims `(c_out, c_in / groups, k, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams {
    pub weight: Tensor4,
    pub bias: Option<Vec<f32>>,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub pad_mode: PadMode,
}

impl Conv2dParams {
    /// Dense convolution with stride 1 and "same" padding (`k / 2`).
    pub fn new(weight: Tensor4, bias: Option<Vec<f32>>) -> Self {
        let padding = weight.height() / 2;
        Self {
            weight,
            bias,
            stride: 1,
            padding,
            groups: 1,
            pad_mode: PadMode::Zeros,
        }
    }

    /// Depthwise convolution: one `k x k` filter per channel.
    pub fn depthwise(weight: Tensor4, bias: Option<Vec<f32>>) -> Self {
        let groups = weight.batch();
        Self::new(weight, bias).with_groups(groups)
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_pad_mode(mut self, pad_mode: PadMode) -> Self {
        self.pad_mode = pad_mode;
        self
    }

    pub fn out_channels(&self) -> usize {
        self.weight.batch()
    }

    pub fn in_channels(&self) -> usize {
        self.weight.channels() * self.groups
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.height()
    }

    pub fn bias_mut(&mut self) -> Option<&mut Vec<f32>> {
        self.bias.as_mut()
    }

    fn validate(&self, input: Shape4) -> Result<()> {
        let w = self.weight.shape();
        if w.height != w.width {
            return Err(shape_err!("conv kernel must be square, got {w}"));
        }
        if self.stride == 0 || self.groups == 0 {
            return Err(shape_err!("conv stride and groups must be positive"));
        }
        if !w.batch.is_multiple_of(self.groups) {
            return Err(shape_err!(
                "{} output channels not divisible by {} groups",
                w.batch,
                self.groups
            ));
        }
        if input.channels != self.in_channels() {
            return Err(shape_err!(
                "conv expects {} input channels, got {} ({input})",
                self.in_channels(),
                input.channels
            ));
        }
        if let Some(bias) = &self.bias {
            if bias.len() != w.batch {
                return Err(shape_err!(
                    "conv bias has {} entries for {} output channels",
                    bias.len(),
                    w.batch
                ));
            }
        }
        if self.pad_mode == PadMode::Reflect
            && self.padding > 0
            && (self.padding >= input.height || self.padding >= input.width)
        {
            return Err(PixieError::UnsupportedPad {
                padding: self.padding,
                height: input.height,
                width: input.width,
            });
        }
        let k = w.height;
        if input.height + 2 * self.padding < k || input.width + 2 * self.padding < k {
            return Err(shape_err!(
                "padded input {}x{} smaller than {k}x{k} kernel",
                input.height + 2 * self.padding,
                input.width + 2 * self.padding
            ));
        }
        Ok(())
    }
}

fn pad(input: &Tensor4, padding: usize, mode: PadMode) -> Tensor4 {
    let s = input.shape();
    let (h, w) = (s.height as isize, s.width as isize);
    let p = padding as isize;
    let shape = Shape4::new(s.batch, s.channels, s.height + 2 * padding, s.width + 2 * padding);
    Tensor4::from_fn(shape, |b, c, y, x| {
        let (sy, sx) = (y as isize - p, x as isize - p);
        match mode {
            PadMode::Zeros => {
                if sy < 0 || sx < 0 || sy >= h || sx >= w {
                    0.0
                } else {
                    input.get(b, c, sy as usize, sx as usize)
                }
            }
            PadMode::Reflect => input.get(
                b,
                c,
                reflect_index(sy, s.height),
                reflect_index(sx, s.width),
            ),
        }
    })
}

/// 2D convolution over NCHW input.
///
/// Each output element starts at `0.0`, accumulates `weight * input` over
/// kernel rows, kernel columns, then input channels of its group (in that
/// nesting order), and finally adds the bias.
pub fn conv2d(input: &Tensor4, params: &Conv2dParams) -> Result<Tensor4> {
    params.validate(input.shape())?;
    let padded;
    let src = if params.padding > 0 {
        padded = pad(input, params.padding, params.pad_mode);
        &padded
    } else {
        input
    };

    let k = params.kernel_size();
    let stride = params.stride;
    let (hp, wp) = (src.height(), src.width());
    let ho = (hp - k) / stride + 1;
    let wo = (wp - k) / stride + 1;
    let c_out = params.out_channels();
    let cin_g = params.weight.channels();
    let cout_g = c_out / params.groups;
    let out_shape = Shape4::new(input.batch(), c_out, ho, wo);
    let mut out = Tensor4::zeros(out_shape);
    let plane = ho * wo;
    if plane == 0 {
        return Ok(out);
    }

    let weight = params.weight.data();
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, acc)| {
            let b = idx / c_out;
            let co = idx % c_out;
            let group = co / cout_g;
            if k == 1 && stride == 1 {
                let w_row = &weight[co * cin_g..(co + 1) * cin_g];
                for (ci_local, &wv) in w_row.iter().enumerate() {
                    let src_plane = src.plane(b, group * cin_g + ci_local);
                    for (a, &x) in acc.iter_mut().zip(src_plane) {
                        *a += wv * x;
                    }
                }
            } else {
                for ky in 0..k {
                    for kx in 0..k {
                        for ci_local in 0..cin_g {
                            let wv = weight[((co * cin_g + ci_local) * k + ky) * k + kx];
                            let src_plane = src.plane(b, group * cin_g + ci_local);
                            for oy in 0..ho {
                                let row = &src_plane[(oy * stride + ky) * wp..(oy * stride + ky + 1) * wp];
                                let acc_row = &mut acc[oy * wo..(oy + 1) * wo];
                                if stride == 1 {
                                    for (a, &x) in acc_row.iter_mut().zip(&row[kx..kx + wo]) {
                                        *a += wv * x;
                                    }
                                } else {
                                    for (ox, a) in acc_row.iter_mut().enumerate() {
                                        *a += wv * row[ox * stride + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(bias) = &params.bias {
                let bv = bias[co];
                for a in acc.iter_mut() {
                    *a += bv;
                }
            }
        });
    Ok(out)
}
