//! Full-reference image metrics and the seam-energy diagnostic.

use crate::error::{shape_err, Result};
use crate::tensor::{reflect_index, Tensor4};

/// SSIM stabilizers at unit dynamic range.
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Side of the square SSIM window. The window covers offsets `-3..=4` around each pixel.
pub const SSIM_WINDOW: usize = 8;

fn same_dims(a: &Tensor4, b: &Tensor4) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!("cannot compare {} with {}", a.shape(), b.shape()));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn mse(a: &[f32], b: &[f32]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    sum / a.len().max(1) as f64
}

/// `10 log10(peak^2 / MSE)`, or `+inf` when the inputs are equal.
pub fn psnr(a: &Tensor4, b: &Tensor4, peak: f64) -> Result<f64> {
    same_dims(a, b)?;
    Ok(psnr_from_mse(mse(a.data(), b.data()), peak))
}

/// Channel-mean grayscale planes in `f64`, one per batch item.
fn grayscale(t: &Tensor4) -> Vec<Vec<f64>> {
    let s = t.shape();
    (0..s.batch)
        .map(|b| {
            let mut g = vec![0.0f64; s.plane()];
            for c in 0..s.channels {
                for (acc, &v) in g.iter_mut().zip(t.plane(b, c)) {
                    *acc += v as f64;
                }
            }
            g.iter_mut().for_each(|v| *v /= s.channels as f64);
            g
        })
        .collect()
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    const LO: isize = -(SSIM_WINDOW as isize / 2 - 1);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..SSIM_WINDOW as isize {
                let yy = reflect_index(y as isize + LO + dy, h);
                for dx in 0..SSIM_WINDOW as isize {
                    let xx = reflect_index(x as isize + LO + dx, w);
                    let (va, vb) = (a[yy * w + xx], b[yy * w + xx]);
                    sa += va;
                    sb += vb;
                    saa += va * va;
                    sbb += vb * vb;
                    sab += va * vb;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = saa / n - ma * ma;
            let vb = sbb / n - mb * mb;
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
        }
    }
    total / (h * w) as f64
}

/// Mean local SSIM of the channel-mean grayscale images, averaged over the batch.
pub fn ssim(a: &Tensor4, b: &Tensor4) -> Result<f64> {
    same_dims(a, b)?;
    let s = a.shape();
    if s.height < 2 || s.width < 2 {
        return Err(shape_err!("SSIM needs at least 2x2 pixels, got {}x{}", s.height, s.width));
    }
    let (ga, gb) = (grayscale(a), grayscale(b));
    let sum: f64 = ga
        .iter()
        .zip(&gb)
        .map(|(x, y)| ssim_plane(x, y, s.height, s.width))
        .sum();
    Ok(sum / s.batch as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// `+inf` when the images are identical.
    pub psnr_db: f64,
    pub ssim: f64,
    /// PSNR of each channel over the whole batch.
    pub psnr_per_channel: Vec<f64>,
}

/// PSNR (peak 1) and SSIM of two images.
pub fn compare(a: &Tensor4, b: &Tensor4) -> Result<MetricReport> {
    let psnr_db = psnr(a, b, 1.0)?;
    let s = a.shape();
    let psnr_per_channel = (0..s.channels)
        .map(|c| {
            let (mut sum, mut count) = (0.0, 0usize);
            for bi in 0..s.batch {
                sum += mse(a.plane(bi, c), b.plane(bi, c)) * s.plane() as f64;
                count += s.plane();
            }
            psnr_from_mse(sum / count.max(1) as f64, 1.0)
        })
        .collect();
    Ok(MetricReport {
        psnr_db,
        ssim: ssim(a, b)?,
        psnr_per_channel,
    })
}

/// Mean absolute step across patch boundaries divided by the mean absolute
/// step inside patches, over horizontal and vertical neighbour pairs of every
/// channel.
///
/// A pair straddles a boundary when its second pixel starts a new patch.
/// Returns 1.0 when both means are zero and `+inf` when only the interior
/// mean is zero.
pub fn seam_energy_ratio(field: &Tensor4, patch: usize) -> Result<f64> {
    let s = field.shape();
    if patch < 2 || !s.height.is_multiple_of(patch) || !s.width.is_multiple_of(patch) {
        return Err(shape_err!(
            "seam ratio needs a patch of at least 2 dividing {}x{}, got {patch}",
            s.height,
            s.width
        ));
    }
    let (mut seam, mut seam_n, mut inner, mut inner_n) = (0.0f64, 0u64, 0.0f64, 0u64);
    let mut tally = |d: f64, boundary: bool| {
        if boundary {
            seam += d;
            seam_n += 1;
        } else {
            inner += d;
            inner_n += 1;
        }
    };
    for b in 0..s.batch {
        for c in 0..s.channels {
            let p = field.plane(b, c);
            for y in 0..s.height {
                for x in 0..s.width {
                    let v = p[y * s.width + x] as f64;
                    if x + 1 < s.width {
                        tally((p[y * s.width + x + 1] as f64 - v).abs(), (x + 1) % patch == 0);
                    }
                    if y + 1 < s.height {
                        tally((p[(y + 1) * s.width + x] as f64 - v).abs(), (y + 1) % patch == 0);
                    }
                }
            }
        }
    }
    let seam = if seam_n > 0 { seam / seam_n as f64 } else { 0.0 };
    let inner = if inner_n > 0 { inner / inner_n as f64 } else { 0.0 };
    Ok(match (seam == 0.0, inner == 0.0) {
        (true, true) => 1.0,
        (false, true) => f64::INFINITY,
        _ => seam / inner,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_cases() {
        let z = Tensor4::zeros([1, 3, 4, 4]);
        assert_eq!(psnr(&z, &z, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&z, &Tensor4::full([1, 3, 4, 4], 1.0), 1.0).unwrap(), 0.0);
        let tenth = psnr(&z, &Tensor4::full([1, 3, 4, 4], 0.1), 1.0).unwrap();
        assert!((tenth - 20.0).abs() < 1e-6, "{tenth}");
        assert!(psnr(&z, &Tensor4::zeros([1, 3, 4, 5]), 1.0).is_err());
    }

    #[test]
    fn ssim_of_constants() {
        let a = Tensor4::full([1, 3, 9, 9], 0.3);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let b = Tensor4::full([1, 3, 9, 9], 0.8);
        assert!(ssim(&a, &b).unwrap() < 1.0);
    }

    #[test]
    fn seam_sentinels() {
        assert_eq!(seam_energy_ratio(&Tensor4::full([1, 2, 8, 8], 3.0), 4).unwrap(), 1.0);
        let blocks = Tensor4::from_fn([1, 1, 8, 8], |_, _, h, w| ((h / 4) * 2 + w / 4) as f32);
        assert_eq!(seam_energy_ratio(&blocks, 4).unwrap(), f64::INFINITY);
        let ramp = Tensor4::from_fn([1, 1, 8, 8], |_, _, _, w| w as f32);
        assert!((seam_energy_ratio(&ramp, 4).unwrap() - 1.0).abs() < 1e-12);
        assert!(seam_energy_ratio(&ramp, 3).is_err());
    }
}
