//! Image tensors and binary Netpbm (P5 grayscale, P6 RGB) I/O.

use std::path::Path;

use crate::error::{Error, Result};

/// `H x W x C` image with pixels normalized to [0, 1], stored row-major with
/// interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    bit_depth: u32,
    pixels: Vec<f64>,
}

impl ImageTensor {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        bit_depth: u32,
        pixels: Vec<f64>,
    ) -> Result<Self> {
        if height * width * channels == 0 {
            return Err(Error::arg("image has a zero dimension"));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::arg(format!(
                "{}x{}x{} image needs {} pixels, got {}",
                height,
                width,
                channels,
                height * width * channels,
                pixels.len()
            )));
        }
        if !(1..=16).contains(&bit_depth) {
            return Err(Error::arg(format!("bit depth {bit_depth} outside 1..=16")));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::arg(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            bit_depth,
            pixels,
        })
    }

    /// Builds an image from unconstrained values by clamping into [0, 1].
    pub fn from_clamped(
        shape: (usize, usize, usize),
        bit_depth: u32,
        values: &[f64],
    ) -> Result<Self> {
        let pixels = values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Self::new(shape.0, shape.1, shape.2, bit_depth, pixels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Flattened length `n = H * W * C`.
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn bit_depth(&self) -> u32 {
        self.bit_depth
    }

    /// Largest representable integer pixel value, `2^bit_depth - 1`.
    pub fn max_value(&self) -> f64 {
        ((1u32 << self.bit_depth) - 1) as f64
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn load_pnm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        decode_pnm(&bytes).map_err(|e| match e {
            Error::Format { what, detail } => Error::Format {
                what,
                detail: format!("{}: {detail}", path.display()),
            },
            other => other,
        })
    }

    pub fn save_pnm(&self, path: &Path) -> Result<()> {
        crate::io_util::write_atomic(path, &encode_pnm(self)?)
    }
}

fn bits_for(maxval: u32) -> u32 {
    32 - maxval.leading_zeros()
}

struct Header<'a> {
    fields: [u32; 3],
    rest: &'a [u8],
}

fn parse_header(bytes: &[u8]) -> Result<Header<'_>> {
    let bad = |d: &str| Error::format("netpbm image", d.to_string());
    let mut pos = 2;
    let mut fields = [0u32; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .unwrap()
            .parse()
            .map_err(|_| bad("header field out of range"))?;
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(bad("missing whitespace after maxval")),
    }
    Ok(Header {
        fields,
        rest: &bytes[pos..],
    })
}

/// Decodes a binary P5 or P6 image; 16-bit rasters are big-endian.
pub fn decode_pnm(bytes: &[u8]) -> Result<ImageTensor> {
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => {
            return Err(Error::format(
                "netpbm image",
                "magic number is not P5 or P6",
            ))
        }
    };
    let Header {
        fields: [width, height, maxval],
        rest,
    } = parse_header(bytes)?;
    if width == 0 || height == 0 {
        return Err(Error::format("netpbm image", "zero width or height"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            "netpbm image",
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    let n = width as usize * height as usize * channels;
    let wide = maxval > 255;
    let need = if wide { 2 * n } else { n };
    if rest.len() < need {
        return Err(Error::format(
            "netpbm image",
            format!("raster has {} bytes, expected {need}", rest.len()),
        ));
    }
    let raw: Vec<u32> = if wide {
        rest[..need]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as u32)
            .collect()
    } else {
        rest[..n].iter().map(|&b| b as u32).collect()
    };
    if raw.iter().any(|&v| v > maxval) {
        return Err(Error::format("netpbm image", "sample exceeds maxval"));
    }
    let scale = 1.0 / maxval as f64;
    let pixels = raw.into_iter().map(|v| v as f64 * scale).collect();
    ImageTensor::new(
        height as usize,
        width as usize,
        channels,
        bits_for(maxval),
        pixels,
    )
}

/// Encodes as P5 (1 channel) or P6 (3 channels) at the image's bit depth.
pub fn encode_pnm(img: &ImageTensor) -> Result<Vec<u8>> {
    let magic = match img.channels {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::arg(format!("netpbm cannot store {c} channels"))),
    };
    let maxval = (1u32 << img.bit_depth) - 1;
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", img.width, img.height).into_bytes();
    for &p in &img.pixels {
        let v = (p * maxval as f64).round() as u32;
        if maxval > 255 {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        } else {
            out.push(v as u8);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_p5_with_comment() {
        let mut bytes = b"P5\n# a comment\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.shape(), (2, 3, 1));
        assert_eq!(img.bit_depth(), 8);
        assert_eq!(img.max_value(), 255.0);
        assert!((img.pixels()[1] - 0.2).abs() < 1e-15);
        assert_eq!(img.pixels()[5], 1.0);
    }

    #[test]
    fn p6_round_trip() {
        let pixels: Vec<f64> = (0..12).map(|i| i as f64 / 255.0).collect();
        let img = ImageTensor::new(2, 2, 3, 8, pixels).unwrap();
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back.shape(), (2, 2, 3));
        for (a, b) in back.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sixteen_bit_big_endian() {
        let mut bytes = b"P5 1 1 65535 ".to_vec();
        bytes.extend_from_slice(&[0x80, 0x00]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img.bit_depth(), 16);
        assert!((img.pixels()[0] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(decode_pnm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pnm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(decode_pnm(b"P5\n0 2\n255\n").is_err());
        assert!(decode_pnm(b"P5\n1 1\n0\n\x00").is_err());
        assert!(decode_pnm(b"P5\n1 1\n10\n\x0b").is_err());
        assert!(decode_pnm(b"P5\n1").is_err());
    }

    #[test]
    fn tensor_invariants() {
        assert!(ImageTensor::new(2, 2, 1, 8, vec![0.0; 3]).is_err());
        assert!(ImageTensor::new(1, 1, 1, 8, vec![1.5]).is_err());
        assert!(ImageTensor::new(0, 1, 1, 8, vec![]).is_err());
        let img = ImageTensor::from_clamped((1, 2, 1), 8, &[-0.5, 2.0]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
        assert_eq!(img.len(), 2);
    }
}
