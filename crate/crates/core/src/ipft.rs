//! The `IPFT` feature tensor layout.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "IPFT"
//!      4     4  format version (u32 LE, = 1)
//!      8     4  grid height     (u32 LE)
//!     12     4  grid width      (u32 LE)
//!     16     4  channels        (u32 LE)
//!     20     4  image height    (u32 LE)
//!     24     4  image width     (u32 LE)
//!     28     1  source tag      (0 dino, 1 sd, 2 fused, 3 other)
//!     29     3  zero padding, ignored on read
//!     32     …  height·width·channels f32 LE, row-major (row, col, channel)
//! ```

use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::tensor::{FeatureMap, ImageGeometry, SourceTag};

pub const MAGIC: [u8; 4] = *b"IPFT";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;
/// Byte range of the header padding.
pub const PAD_RANGE: core::ops::Range<usize> = 29..32;

/// Decoded header of an `IPFT` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub geometry: ImageGeometry,
    pub source: SourceTag,
}

impl Header {
    pub fn values(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn payload_len(&self) -> usize {
        self.values() * 4
    }
}

/// Exact encoded size of a map with the given dimensions.
pub fn encoded_len(height: usize, width: usize, channels: usize) -> usize {
    HEADER_LEN + 4 * height * width * channels
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(alloc::format!("{what} {v} does not fit in u32")))
}

pub fn encode_header(fm: &FeatureMap) -> Result<[u8; HEADER_LEN]> {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    let fields = [
        VERSION,
        to_u32(fm.height(), "height")?,
        to_u32(fm.width(), "width")?,
        to_u32(fm.channels(), "channels")?,
        fm.geometry().height,
        fm.geometry().width,
    ];
    for (i, v) in fields.iter().enumerate() {
        h[4 + 4 * i..8 + 4 * i].copy_from_slice(&v.to_le_bytes());
    }
    h[28] = fm.source().code();
    Ok(h)
}

/// Serializes a feature map into a fresh buffer.
pub fn encode(fm: &FeatureMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(encoded_len(fm.height(), fm.width(), fm.channels()));
    out.extend_from_slice(&encode_header(fm)?);
    for v in fm.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ])
}

/// Parses and validates the header. Callers with a stream should hand over
/// at least the first 4 bytes so a bad magic is reported before truncation.
pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    let magic_len = bytes.len().min(4);
    if bytes[..magic_len] != MAGIC[..magic_len] {
        bail!(
            Format,
            "bad magic {:?}, expected \"IPFT\"",
            alloc::string::String::from_utf8_lossy(&bytes[..magic_len])
        );
    }
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let height = read_u32(bytes, 8) as usize;
    let width = read_u32(bytes, 12) as usize;
    let channels = read_u32(bytes, 16) as usize;
    if height == 0 || width == 0 || channels == 0 {
        bail!(
            Format,
            "zero dimension in header: {height}x{width}x{channels}"
        );
    }
    if height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .and_then(|n| n.checked_mul(4))
        .is_none()
    {
        bail!(Format, "header dims {height}x{width}x{channels} overflow");
    }
    let geometry = ImageGeometry::new(read_u32(bytes, 20), read_u32(bytes, 24));
    if geometry.check_grid(height, width).is_err() {
        bail!(
            Format,
            "image {}x{} smaller than grid {height}x{width}",
            geometry.height,
            geometry.width
        );
    }
    let source = SourceTag::from_code(bytes[28])
        .ok_or_else(|| Error::Format(alloc::format!("unknown source tag {}", bytes[28])))?;
    Ok(Header {
        height,
        width,
        channels,
        geometry,
        source,
    })
}

/// Decodes little-endian f32 payload bytes, rejecting non-finite values.
pub fn decode_payload(header: &Header, payload: &[u8]) -> Result<FeatureMap> {
    let needed = header.payload_len();
    if payload.len() < needed {
        return Err(Error::Truncated {
            needed: HEADER_LEN + needed,
            available: HEADER_LEN + payload.len(),
        });
    }
    if payload.len() > needed {
        bail!(
            Format,
            "{} trailing bytes after payload",
            payload.len() - needed
        );
    }
    let mut data = Vec::with_capacity(header.values());
    for (index, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::Data { index });
        }
        data.push(v);
    }
    FeatureMap::new(
        header.height,
        header.width,
        header.channels,
        data,
        header.source,
        header.geometry,
    )
}

/// Parses a complete `IPFT` buffer. Trailing bytes are rejected.
pub fn decode(bytes: &[u8]) -> Result<FeatureMap> {
    let header = decode_header(bytes)?;
    decode_payload(&header, &bytes[HEADER_LEN..])
}
