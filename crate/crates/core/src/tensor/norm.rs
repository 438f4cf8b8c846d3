use super::Tensor4;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Batch,
    Channel,
    Height,
    Width,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::Batch => 0,
            Axis::Channel => 1,
            Axis::Height => 2,
            Axis::Width => 3,
        }
    }
}

/// Softmax over every 1D slice along `axis`, max-subtracted.
///
/// Exponentials and the normalizer are evaluated in `f64`.
pub fn softmax_axis(input: &Tensor4, axis: Axis) -> Tensor4 {
    let dims = input.shape().as_array();
    let strides = [dims[1] * dims[2] * dims[3], dims[2] * dims[3], dims[3], 1];
    let a = axis.index();
    let (len, step) = (dims[a], strides[a]);
    let mut out = input.clone();
    if len == 0 {
        return out;
    }
    let src = input.data();
    let dst = out.data_mut();
    let mut buf = vec![0f64; len];

    let mut outer = dims;
    outer[a] = 1;
    for i0 in 0..outer[0] {
        for i1 in 0..outer[1] {
            for i2 in 0..outer[2] {
                for i3 in 0..outer[3] {
                    let base = i0 * strides[0] + i1 * strides[1] + i2 * strides[2] + i3 * strides[3];
                    let max = (0..len)
                        .map(|j| src[base + j * step])
                        .fold(f32::NEG_INFINITY, f32::max) as f64;
                    let mut sum = 0.0;
                    for (j, e) in buf.iter_mut().enumerate() {
                        *e = (src[base + j * step] as f64 - max).exp();
                        sum += *e;
                    }
                    for (j, e) in buf.iter().enumerate() {
                        dst[base + j * step] = (e / sum) as f32;
                    }
                }
            }
        }
    }
    out
}

/// Root-mean-square normalization across channels at each pixel:
/// `y = x / sqrt(mean_c(x^2) + eps) * scale[c]`.
pub fn rms_norm(input: &Tensor4, scale: &[f32], eps: f32) -> Result<Tensor4> {
    let s = input.shape();
    if scale.len() != s.channels {
        return Err(shape_err!(
            "rms_norm scale has {} entries for {} channels",
            scale.len(),
            s.channels
        ));
    }
    let n = s.plane();
    let mut out = Tensor4::zeros(s);
    let mut inv = vec![0f32; n];
    for b in 0..s.batch {
        inv.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..s.channels {
            for (acc, &x) in inv.iter_mut().zip(input.plane(b, c)) {
                *acc += x * x;
            }
        }
        let count = s.channels as f32;
        for v in inv.iter_mut() {
            *v = 1.0 / (*v / count + eps).sqrt();
        }
        for (c, &g) in scale.iter().enumerate() {
            let src = input.plane(b, c);
            let dst = out.plane_mut(b, c);
            for ((y, &x), &r) in dst.iter_mut().zip(src).zip(&inv) {
                *y = x * r * g;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let x = Tensor4::zeros([1, 1, 1, 2]);
        assert_eq!(softmax_axis(&x, Axis::Width).data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_ln2() {
        let x = Tensor4::from_vec([1, 1, 1, 2], vec![std::f32::consts::LN_2, 0.0]).unwrap();
        let y = softmax_axis(&x, Axis::Width);
        assert!((y.data()[0] - 2.0 / 3.0).abs() < 1e-7);
        assert!((y.data()[1] - 1.0 / 3.0).abs() < 1e-7);
    }

    #[test]
    fn softmax_slices_sum_to_one_on_every_axis() {
        let x = Tensor4::from_fn([2, 3, 4, 5], |b, c, h, w| ((b * 60 + c * 20 + h * 5 + w) as f32 * 1.7).sin() * 30.0);
        for axis in [Axis::Batch, Axis::Channel, Axis::Height, Axis::Width] {
            let y = softmax_axis(&x, axis);
            // sum along channel for a fixed pixel as a spot check of the strided walk
            if axis == Axis::Channel {
                let s: f64 = (0..3).map(|c| y.get(1, c, 2, 3) as f64).sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
            let total: f64 = y.data().iter().map(|&v| v as f64).sum();
            let slices = x.shape().numel() / x.shape().as_array()[axis.index()];
            assert!((total - slices as f64).abs() < 1e-4);
        }
    }

    #[test]
    fn rms_norm_zero_stays_zero() {
        let x = Tensor4::zeros([1, 3, 2, 2]);
        let y = rms_norm(&x, &[1.0; 3], 1e-6).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rms_norm_three_four() {
        let x = Tensor4::from_vec([1, 2, 1, 1], vec![3.0, 4.0]).unwrap();
        let y = rms_norm(&x, &[1.0, 1.0], 0.0).unwrap();
        let r = 12.5f32.sqrt();
        assert!((y.data()[0] - 3.0 / r).abs() < 1e-6);
        assert!((y.data()[1] - 4.0 / r).abs() < 1e-6);
    }

    #[test]
    fn rms_norm_is_linear_in_scale() {
        let x = Tensor4::from_fn([2, 4, 3, 3], |b, c, h, w| ((b + 2 * c + 3 * h + 5 * w) as f32).cos());
        let scale = [0.5, -1.25, 2.0, 0.3];
        let doubled: Vec<f32> = scale.iter().map(|s| 2.0 * s).collect();
        let y1 = rms_norm(&x, &scale, 1e-6).unwrap();
        let y2 = rms_norm(&x, &doubled, 1e-6).unwrap();
        for (a, b) in y1.data().iter().zip(y2.data()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn rms_norm_scale_length_checked() {
        assert!(rms_norm(&Tensor4::zeros([1, 3, 1, 1]), &[1.0; 2], 1e-6).is_err());
    }
}
