use super::{Shape4, Tensor4};
use crate::error::{shape_err, Result};

/// Space-to-depth. Source offset `(dy, dx)` of channel `c` lands in output
/// channel `c * r^2 + dy * r + dx`.
pub fn pixel_unshuffle(input: &Tensor4, r: usize) -> Result<Tensor4> {
    let s = input.shape();
    if r == 0 || !s.height.is_multiple_of(r) || !s.width.is_multiple_of(r) {
        return Err(shape_err!(
            "pixel_unshuffle factor {r} does not divide {}x{}",
            s.height,
            s.width
        ));
    }
    let (oh, ow) = (s.height / r, s.width / r);
    let out_shape = Shape4::new(s.batch, s.channels * r * r, oh, ow);
    let mut out = Tensor4::zeros(out_shape);
    for b in 0..s.batch {
        for c in 0..s.channels {
            let src = input.plane(b, c);
            for dy in 0..r {
                for dx in 0..r {
                    let dst = out.plane_mut(b, c * r * r + dy * r + dx);
                    for y in 0..oh {
                        let row = (y * r + dy) * s.width;
                        for x in 0..ow {
                            dst[y * ow + x] = src[row + x * r + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Depth-to-space; the exact inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle(input: &Tensor4, r: usize) -> Result<Tensor4> {
    let s = input.shape();
    if r == 0 || !s.channels.is_multiple_of(r * r) {
        return Err(shape_err!(
            "pixel_shuffle factor {r} needs channels divisible by {}, got {}",
            r * r,
            s.channels
        ));
    }
    let c_out = s.channels / (r * r);
    let (oh, ow) = (s.height * r, s.width * r);
    let mut out = Tensor4::zeros(Shape4::new(s.batch, c_out, oh, ow));
    for b in 0..s.batch {
        for c in 0..c_out {
            for dy in 0..r {
                for dx in 0..r {
                    let src = input.plane(b, c * r * r + dy * r + dx);
                    let dst = out.plane_mut(b, c);
                    for y in 0..s.height {
                        let row = (y * r + dy) * ow;
                        for x in 0..s.width {
                            dst[row + x * r + dx] = src[y * s.width + x];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
