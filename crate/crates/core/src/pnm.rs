//! Binary PPM (P6) and PGM (P5) with 8-bit samples.
//!
//! Samples decode to `v / 255` and encode as `round(clamp(v, 0, 1) * 255)`,
//! so decode followed by encode reproduces the payload exactly.

use std::fs;
use std::path::Path;

use crate::error::{shape_err, PixieError, Result};
use crate::tensor::{Shape4, Tensor4};

struct Header {
    width: usize,
    height: usize,
    payload_start: usize,
}

fn parse_header(bytes: &[u8], magic: &[u8; 2]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        let got = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(PixieError::Format(format!(
            "expected '{}' image, found magic {got:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments before each field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n' && b != b'\r') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(match bytes.get(pos) {
                None => PixieError::Length("image header ends early".into()),
                Some(_) => PixieError::Format(format!("image header field {} is not a number", i + 1)),
            });
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| PixieError::Format("image header number out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        None => return Err(PixieError::Length("image header ends before the pixel data".into())),
        Some(_) => return Err(PixieError::Format("image header must end with one whitespace byte".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(PixieError::Unsupported(format!("only maxval 255 is supported, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(PixieError::Format(format!("image has zero size {width}x{height}")));
    }
    Ok(Header {
        width,
        height,
        payload_start: pos,
    })
}

fn decode(bytes: &[u8], magic: &[u8; 2], channels: usize) -> Result<Tensor4> {
    let h = parse_header(bytes, magic)?;
    let n = h.width * h.height * channels;
    let payload = &bytes[h.payload_start..];
    if payload.len() != n {
        return Err(PixieError::Length(format!(
            "{}x{} image needs {n} payload bytes, found {}",
            h.width,
            h.height,
            payload.len()
        )));
    }
    let plane = h.width * h.height;
    let mut data = vec![0.0f32; n];
    for (i, px) in payload.chunks_exact(channels).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = v as f32 / 255.0;
        }
    }
    Tensor4::from_vec(Shape4::new(1, channels, h.height, h.width), data)
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(image: &Tensor4, magic: &str, channels: usize) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.batch != 1 || s.channels != channels {
        return Err(shape_err!("{magic} encodes 1x{channels}xHxW tensors, got {s}"));
    }
    let mut out = format!("{magic}\n{} {}\n255\n", s.width, s.height).into_bytes();
    out.reserve(s.plane() * channels);
    for i in 0..s.plane() {
        for c in 0..channels {
            out.push(quantize(image.plane(0, c)[i]));
        }
    }
    Ok(out)
}

/// Decodes a P6 image into a `(1, 3, H, W)` tensor.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor4> {
    decode(bytes, b"P6", 3)
}

/// Decodes a P5 image into a `(1, 1, H, W)` tensor.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor4> {
    decode(bytes, b"P5", 1)
}

/// Decodes either format, choosing by magic.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor4> {
    match bytes.get(..2) {
        Some(b"P5") => decode_pgm(bytes),
        _ => decode_ppm(bytes),
    }
}

pub fn encode_ppm(image: &Tensor4) -> Result<Vec<u8>> {
    encode(image, "P6", 3)
}

pub fn encode_pgm(image: &Tensor4) -> Result<Vec<u8>> {
    encode(image, "P5", 1)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Tensor4> {
    decode_ppm(&fs::read(path)?)
}

pub fn write_ppm(path: impl AsRef<Path>, image: &Tensor4) -> Result<()> {
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor4> {
    decode_image(&fs::read(path)?)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Tensor4> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Tensor4) -> Result<()> {
    fs::write(path, encode_pgm(image)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_roundtrip() {
        let mut f = b"P6\n2 2\n255\n".to_vec();
        f.extend([0, 1, 2, 3, 4, 5, 250, 251, 252, 253, 254, 255]);
        let t = decode_ppm(&f).unwrap();
        assert_eq!(t.shape(), Shape4::new(1, 3, 2, 2));
        assert_eq!(t.get(0, 1, 0, 1), 4.0 / 255.0);
        assert_eq!(encode_ppm(&t).unwrap(), f);
    }

    #[test]
    fn header_comments_and_whitespace() {
        let mut f = b"P5 # gray\n# another\n 3\t1 255\r".to_vec();
        f.extend([7, 8, 9]);
        let t = decode_pgm(&f).unwrap();
        assert_eq!(t.data(), &[7.0 / 255.0, 8.0 / 255.0, 9.0 / 255.0]);
    }

    #[test]
    fn errors() {
        let mut f = b"P6\n2 2\n255\n".to_vec();
        f.extend([0; 11]);
        assert!(matches!(decode_ppm(&f), Err(PixieError::Length(_))));
        assert!(matches!(decode_ppm(b"P5\n1 1\n255\n\0"), Err(PixieError::Format(_))));
        assert!(matches!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0"), Err(PixieError::Unsupported(_))));
        assert!(matches!(decode_ppm(b"P6\n1 1"), Err(PixieError::Length(_))));
        assert!(encode_ppm(&Tensor4::zeros([1, 1, 2, 2])).is_err());
    }

    #[test]
    fn encode_clamps() {
        let t = Tensor4::from_vec([1, 1, 1, 3], vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(&encode_pgm(&t).unwrap()[11..], &[0, 128, 255]);
    }
}
