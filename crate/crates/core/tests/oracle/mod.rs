//! Slow reference implementations written directly from the defining
//! formulas, plus helpers shared by the integration and acceptance tests.
#![allow(dead_code, clippy::needless_range_loop)]

use pixie::enhance::SccParams;
use pixie::params::WeightStore;
use pixie::restormer::{GdfnParams, MdtaParams};
use pixie::rng::SplitMix64;
use pixie::tensor::{Conv2dParams, PadMode};
use pixie::Tensor4;

pub const RMS_EPS: f64 = 1e-6;
pub const L2_EPS: f64 = 1e-12;

/// `max |got - want| / max |want|`, with the denominator floored at 1e-12.
pub fn rel_err(got: &Tensor4, want: &Tensor4) -> f64 {
    assert_eq!(got.shape(), want.shape());
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&g, &w) in got.data().iter().zip(want.data()) {
        num = num.max((g as f64 - w as f64).abs());
        den = den.max((w as f64).abs());
    }
    num / den.max(1e-12)
}

pub fn random_tensor(seed: u64, shape: [usize; 4], bound: f64) -> Tensor4 {
    let mut rng = SplitMix64::new(seed);
    Tensor4::from_fn(shape, |_, _, _, _| rng.uniform(bound))
}

/// Perturbs every tensor so scales and temperatures are not all ones.
pub fn jitter(store: &mut WeightStore, seed: u64) {
    let names: Vec<String> = store.iter().map(|t| t.name.clone()).collect();
    let mut rng = SplitMix64::new(seed);
    for n in names {
        for v in &mut store.get_mut(&n).unwrap().data {
            *v += 0.25 * rng.uniform(1.0) + if n.ends_with("temperature") { 0.5 } else { 0.0 };
        }
    }
}

/// Mirror index without repeating the edge sample, by explicit bouncing.
fn bounce(mut i: isize, n: usize) -> Option<usize> {
    let n = n as isize;
    if n == 1 {
        return Some(0);
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return Some(i as usize);
        }
    }
}

/// Direct-definition convolution accumulated in f64.
pub fn naive_conv2d(x: &Tensor4, p: &Conv2dParams) -> Tensor4 {
    let s = x.shape();
    let w = &p.weight;
    let (c_out, cin_g, k) = (w.batch(), w.channels(), w.height());
    let groups = p.groups;
    let cout_g = c_out / groups;
    let pad = p.padding as isize;
    let oh = (s.height + 2 * p.padding - k) / p.stride + 1;
    let ow = (s.width + 2 * p.padding - k) / p.stride + 1;
    Tensor4::from_fn([s.batch, c_out, oh, ow], |b, co, oy, ox| {
        let g = co / cout_g;
        let mut acc = p.bias.as_ref().map_or(0.0, |bias| bias[co] as f64);
        for ci in 0..cin_g {
            let cin = g * cin_g + ci;
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * p.stride + ky) as isize - pad;
                    let ix = (ox * p.stride + kx) as isize - pad;
                    let v = match p.pad_mode {
                        PadMode::Zeros => {
                            if iy < 0 || ix < 0 || iy >= s.height as isize || ix >= s.width as isize {
                                continue;
                            }
                            x.get(b, cin, iy as usize, ix as usize)
                        }
                        PadMode::Reflect => {
                            x.get(b, cin, bounce(iy, s.height).unwrap(), bounce(ix, s.width).unwrap())
                        }
                    };
                    acc += w.get(co, ci, ky, kx) as f64 * v as f64;
                }
            }
        }
        acc as f32
    })
}

pub fn naive_rms_norm(x: &Tensor4, scale: &[f32]) -> Tensor4 {
    let s = x.shape();
    Tensor4::from_fn(s, |b, c, h, w| {
        let ms: f64 = (0..s.channels).map(|k| (x.get(b, k, h, w) as f64).powi(2)).sum::<f64>() / s.channels as f64;
        (x.get(b, c, h, w) as f64 / (ms + RMS_EPS).sqrt() * scale[c] as f64) as f32
    })
}

pub fn naive_gelu(v: f64) -> f64 {
    0.5 * v * (1.0 + libm::erf(v / std::f64::consts::SQRT_2))
}

/// Transposed attention with dense loops in f64.
pub fn naive_mdta(x: &Tensor4, p: &MdtaParams) -> Tensor4 {
    let s = x.shape();
    let y = naive_rms_norm(x, &p.norm);
    let q = naive_conv2d(&naive_conv2d(&y, &p.q_pw), &p.q_dw);
    let k = naive_conv2d(&naive_conv2d(&y, &p.k_pw), &p.k_dw);
    let v = naive_conv2d(&naive_conv2d(&y, &p.v_pw), &p.v_dw);
    let heads = p.temperature.len();
    let d = s.channels / heads;
    let n = s.height * s.width;
    let row = |t: &Tensor4, b: usize, c: usize| -> Vec<f64> { t.plane(b, c).iter().map(|&v| v as f64).collect() };
    let unit = |r: Vec<f64>| -> Vec<f64> {
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt().max(L2_EPS);
        r.into_iter().map(|v| v / norm).collect()
    };
    let mut attended = Tensor4::zeros(s);
    for b in 0..s.batch {
        for h in 0..heads {
            let qs: Vec<_> = (0..d).map(|i| unit(row(&q, b, h * d + i))).collect();
            let ks: Vec<_> = (0..d).map(|i| unit(row(&k, b, h * d + i))).collect();
            let vs: Vec<_> = (0..d).map(|i| row(&v, b, h * d + i)).collect();
            for i in 0..d {
                let logits: Vec<f64> = (0..d)
                    .map(|j| (0..n).map(|t| qs[i][t] * ks[j][t]).sum::<f64>() / p.temperature[h] as f64)
                    .collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let z: f64 = e.iter().sum();
                let out = attended.plane_mut(b, h * d + i);
                for (t, o) in out.iter_mut().enumerate() {
                    *o = (0..d).map(|j| e[j] / z * vs[j][t]).sum::<f64>() as f32;
                }
            }
        }
    }
    naive_conv2d(&attended, &p.out)
}

pub fn naive_gdfn(x: &Tensor4, p: &GdfnParams) -> Tensor4 {
    let y = naive_rms_norm(x, &p.norm);
    let u1 = naive_conv2d(&naive_conv2d(&y, &p.u1_pw), &p.u1_dw);
    let u2 = naive_conv2d(&naive_conv2d(&y, &p.u2_pw), &p.u2_dw);
    let gated = Tensor4::from_fn(u1.shape(), |b, c, h, w| {
        (naive_gelu(u1.get(b, c, h, w) as f64) * u2.get(b, c, h, w) as f64) as f32
    });
    naive_conv2d(&gated, &p.out)
}

pub fn naive_unshuffle(x: &Tensor4, r: usize) -> Tensor4 {
    let s = x.shape();
    Tensor4::from_fn([s.batch, s.channels * r * r, s.height / r, s.width / r], |b, c, y, xx| {
        let (src_c, off) = (c / (r * r), c % (r * r));
        x.get(b, src_c, y * r + off / r, xx * r + off % r)
    })
}

pub fn naive_shuffle(x: &Tensor4, r: usize) -> Tensor4 {
    let s = x.shape();
    Tensor4::from_fn([s.batch, s.channels / (r * r), s.height * r, s.width * r], |b, c, y, xx| {
        x.get(b, c * r * r + (y % r) * r + xx % r, y / r, xx / r)
    })
}

pub fn naive_scc(x: &Tensor4, p: &SccParams) -> Tensor4 {
    match p {
        SccParams::Full {
            patch,
            compress,
            mdta,
            expand,
        } => {
            let z = naive_mdta(&naive_conv2d(&naive_unshuffle(x, *patch), compress), mdta);
            naive_shuffle(&naive_conv2d(&z, expand), *patch)
        }
        SccParams::ChannelOnly { compress, mdta, expand } => {
            naive_conv2d(&naive_mdta(&naive_conv2d(x, compress), mdta), expand)
        }
        SccParams::SpatialOnly { patch, mdta } => naive_shuffle(&naive_mdta(&naive_unshuffle(x, *patch), mdta), *patch),
        SccParams::None { mdta } => naive_mdta(x, mdta),
    }
}

/// Two-dimensional bilinear sample at half-pixel centers with edge clamping.
pub fn naive_bilinear(x: &Tensor4, oh: usize, ow: usize) -> Tensor4 {
    let s = x.shape();
    let coord = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let src = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = src.floor() as usize;
        (i0, (i0 + 1).min(n_in - 1), src - i0 as f64)
    };
    Tensor4::from_fn([s.batch, s.channels, oh, ow], |b, c, y, xx| {
        let (y0, y1, ty) = coord(y, s.height, oh);
        let (x0, x1, tx) = coord(xx, s.width, ow);
        let g = |yy, xv| x.get(b, c, yy, xv) as f64;
        ((1.0 - ty) * ((1.0 - tx) * g(y0, x0) + tx * g(y0, x1)) + ty * ((1.0 - tx) * g(y1, x0) + tx * g(y1, x1))) as f32
    })
}
