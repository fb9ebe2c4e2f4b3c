//! Binary PGM (`P5`, maxval 255) codec for masks and label grids.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tensor::SegMask;

/// Raw 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&b) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            bail!(Format, "PGM header: expected {what} at byte {start}");
        }
        // all-digit slice is valid UTF-8
        let text = core::str::from_utf8(&self.bytes[start..self.pos]).unwrap_or("");
        text.parse()
            .map_err(|_| crate::Error::Format(format!("PGM header: {what} {text:?} out of range")))
    }
}

/// Parses a `P5` image with maxval 255.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        bail!(Format, "not a binary PGM: magic must be \"P5\"");
    }
    let mut cur = Cursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        bail!(Format, "PGM header: missing whitespace after magic");
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        bail!(Format, "PGM maxval {maxval} ≠ 255");
    }
    if width == 0 || height == 0 {
        bail!(Format, "PGM has zero dimension {width}x{height}");
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => bail!(Format, "PGM header: missing whitespace before raster"),
    }
    let raster = &bytes[cur.pos..];
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| crate::Error::Format(format!("PGM size {width}x{height} overflows")))?;
    if raster.len() != expected {
        bail!(
            Format,
            "PGM raster has {} bytes, expected {width}x{height} = {expected}",
            raster.len()
        );
    }
    Ok(GrayImage {
        height,
        width,
        pixels: raster.to_vec(),
    })
}

pub fn encode_gray(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

/// Decodes a mask: pixel values above 127 are foreground.
pub fn decode_mask(bytes: &[u8]) -> Result<SegMask> {
    let img = decode_gray(bytes)?;
    let data = img.pixels.iter().map(|&p| (p > 127) as u8).collect();
    SegMask::new(img.height, img.width, data)
}

/// Encodes a mask in canonical form: 0 for background, 255 for foreground.
pub fn encode_mask(mask: &SegMask) -> Vec<u8> {
    encode_gray(&GrayImage {
        height: mask.height(),
        width: mask.width(),
        pixels: mask.data().iter().map(|&v| v * 255).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p5(w: usize, h: usize, maxval: u32, px: &[u8]) -> Vec<u8> {
        let mut v = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
        v.extend_from_slice(px);
        v
    }

    #[test]
    fn saturated_mask() {
        let m = decode_mask(&p5(3, 3, 255, &[255; 9])).unwrap();
        assert_eq!(m.data(), &[1; 9]);
    }

    #[test]
    fn threshold_boundary() {
        let m = decode_mask(&p5(2, 1, 255, &[128, 127])).unwrap();
        assert_eq!(m.data(), &[1, 0]);
    }

    #[test]
    fn canonical_encoding() {
        let m = SegMask::new(1, 3, vec![0, 1, 1]).unwrap();
        let bytes = encode_mask(&m);
        assert_eq!(bytes, p5(3, 1, 255, &[0, 255, 255]));
        assert_eq!(decode_mask(&bytes).unwrap(), m);
    }

    #[test]
    fn comments_in_header() {
        let mut v = b"P5 # mask\n2 # w\n1\n255\n".to_vec();
        v.extend_from_slice(&[0, 200]);
        assert_eq!(decode_mask(&v).unwrap().data(), &[0, 1]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(decode_mask(&p5(2, 2, 255, &[0; 4])[..]).is_ok());
        let mut p2 = p5(2, 2, 255, &[0; 4]);
        p2[1] = b'2';
        assert!(decode_mask(&p2).is_err());
        assert!(decode_mask(&p5(2, 2, 65535, &[0; 8])).is_err());
        assert!(decode_mask(&p5(2, 2, 1, &[0; 4])).is_err());
        assert!(decode_mask(&p5(2, 2, 255, &[0; 3])).is_err());
        assert!(decode_mask(&p5(2, 2, 255, &[0; 5])).is_err());
        assert!(decode_mask(b"P5").is_err());
    }
}
