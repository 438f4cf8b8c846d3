//! Separable resampling with half-pixel centers.
//!
//! An output sample `dst` maps to the source coordinate
//! `(dst + 0.5) * in / out - 0.5`, evaluated in `f64`. Each axis is resampled
//! independently, width first and then height.

use super::{Shape4, Tensor4};
use crate::error::{shape_err, Result};

fn source_coord(dst: usize, len_in: usize, len_out: usize) -> f64 {
    (dst as f64 + 0.5) * (len_in as f64 / len_out as f64) - 0.5
}

/// Interpolation taps for one output sample: `value = v[center] + sum w * (v[i] - v[center])`.
///
/// Writing the blend relative to the center sample keeps constant signals
/// exact and makes grid-aligned samples reproduce the input bit for bit.
#[derive(Clone, Debug)]
struct Taps {
    center: usize,
    others: Vec<(usize, f32)>,
}

fn bilinear_taps(len_in: usize, len_out: usize) -> Vec<Taps> {
    (0..len_out)
        .map(|dst| {
            let src = source_coord(dst, len_in, len_out).clamp(0.0, (len_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(len_in - 1);
            let t = (src - i0 as f64) as f32;
            Taps {
                center: i0,
                others: vec![(i1, t)],
            }
        })
        .collect()
}

/// Catmull-Rom cubic convolution kernel (`a = -0.5`).
fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

fn bicubic_taps(len_in: usize, len_out: usize) -> Vec<Taps> {
    let last = len_in as isize - 1;
    let clamp = |i: isize| i.clamp(0, last) as usize;
    (0..len_out)
        .map(|dst| {
            let src = source_coord(dst, len_in, len_out);
            let base = src.floor();
            let t = src - base;
            let i = base as isize;
            Taps {
                center: clamp(i),
                others: vec![
                    (clamp(i - 1), cubic_weight(1.0 + t) as f32),
                    (clamp(i + 1), cubic_weight(1.0 - t) as f32),
                    (clamp(i + 2), cubic_weight(2.0 - t) as f32),
                ],
            }
        })
        .collect()
}

#[inline]
fn blend(taps: &Taps, sample: impl Fn(usize) -> f32) -> f32 {
    let c = sample(taps.center);
    let mut acc = c;
    for &(i, w) in &taps.others {
        acc += w * (sample(i) - c);
    }
    acc
}

fn separable(input: &Tensor4, out_h: usize, out_w: usize, taps: fn(usize, usize) -> Vec<Taps>) -> Result<Tensor4> {
    let s = input.shape();
    if out_h == 0 || out_w == 0 {
        return Err(shape_err!("resize target must be at least 1x1, got {out_h}x{out_w}"));
    }
    if s.height == 0 || s.width == 0 {
        return Err(shape_err!("cannot resize empty input {s}"));
    }
    let wt = taps(s.width, out_w);
    let ht = taps(s.height, out_h);
    let mid_shape = Shape4::new(s.batch, s.channels, s.height, out_w);
    let mut mid = Tensor4::zeros(mid_shape);
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = input.plane(b, c);
            let dst = mid.plane_mut(b, c);
            for y in 0..s.height {
                let row = &src[y * s.width..(y + 1) * s.width];
                for (x, t) in wt.iter().enumerate() {
                    dst[y * out_w + x] = blend(t, |i| row[i]);
                }
            }
        }
    }
    let mut out = Tensor4::zeros(Shape4::new(s.batch, s.channels, out_h, out_w));
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = mid.plane(b, c);
            let dst = out.plane_mut(b, c);
            for (y, t) in ht.iter().enumerate() {
                for x in 0..out_w {
                    dst[y * out_w + x] = blend(t, |i| src[i * out_w + x]);
                }
            }
        }
    }
    Ok(out)
}

/// Bilinear resize; source coordinates are clamped to `[0, in - 1]`.
pub fn bilinear_resize(input: &Tensor4, out_h: usize, out_w: usize) -> Result<Tensor4> {
    separable(input, out_h, out_w, bilinear_taps)
}

/// Catmull-Rom bicubic resize with clamped sample indices. May overshoot.
pub fn bicubic_resize(input: &Tensor4, out_h: usize, out_w: usize) -> Result<Tensor4> {
    separable(input, out_h, out_w, bicubic_taps)
}

/// Box downsampling: each output cell is the mean of a `factor x factor` block.
///
/// Deviations from the block's first sample are averaged and added back, so
/// constant blocks come out exact.
pub fn area_resize(input: &Tensor4, factor: usize) -> Result<Tensor4> {
    let s = input.shape();
    if factor == 0 || !s.height.is_multiple_of(factor) || !s.width.is_multiple_of(factor) {
        return Err(shape_err!(
            "area resize factor {factor} does not divide {}x{}",
            s.height,
            s.width
        ));
    }
    if factor == 1 {
        return Ok(input.clone());
    }
    let (oh, ow) = (s.height / factor, s.width / factor);
    let count = (factor * factor) as f32;
    let mut out = Tensor4::zeros(Shape4::new(s.batch, s.channels, oh, ow));
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = input.plane(b, c);
            let dst = out.plane_mut(b, c);
            for oy in 0..oh {
                for ox in 0..ow {
                    let first = src[oy * factor * s.width + ox * factor];
                    let mut sum = 0.0f32;
                    for dy in 0..factor {
                        let row = (oy * factor + dy) * s.width + ox * factor;
                        for &v in &src[row..row + factor] {
                            sum += v - first;
                        }
                    }
                    dst[oy * ow + ox] = first + sum / count;
                }
            }
        }
    }
    Ok(out)
}
