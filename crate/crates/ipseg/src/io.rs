//! Stream and file wrappers around the core codecs.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ipseg_core::pgm::{self, GrayImage};
use ipseg_core::{ipft, FeatureMap, LabelGrid, SegMask};

use crate::error::{Error, Result};

fn write_tracked<W: Write>(sink: &mut W, bytes: &[u8]) -> Result<()> {
    let mut written = 0;
    while written < bytes.len() {
        match sink.write(&bytes[written..]) {
            Ok(0) => {
                return Err(Error::Stream {
                    offset: written as u64,
                    source: io::ErrorKind::WriteZero.into(),
                })
            }
            Ok(n) => written += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(source) => {
                return Err(Error::Stream {
                    offset: written as u64,
                    source,
                })
            }
        }
    }
    sink.flush().map_err(|source| Error::Stream {
        offset: written as u64,
        source,
    })
}

/// Fills `buf` from `source` until it is full or the stream ends; returns the byte count.
fn read_up_to<R: Read>(source: &mut R, buf: &mut [u8], base: u64) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(source) => {
                return Err(Error::Stream {
                    offset: base + filled as u64,
                    source,
                })
            }
        }
    }
    Ok(filled)
}

fn truncated(offset: usize) -> Error {
    Error::Stream {
        offset: offset as u64,
        source: io::Error::new(io::ErrorKind::UnexpectedEof, "truncated IPFT stream"),
    }
}

pub fn write_feature_map<W: Write>(fm: &FeatureMap, mut sink: W) -> Result<()> {
    write_tracked(&mut sink, &ipft::encode(fm)?)
}

/// Reads one `IPFT` tensor and requires the stream to end right after it.
pub fn read_feature_map<R: Read>(mut source: R) -> Result<FeatureMap> {
    let mut header = [0u8; ipft::HEADER_LEN];
    let got = read_up_to(&mut source, &mut header, 0)?;
    let parsed = match ipft::decode_header(&header[..got]) {
        Ok(h) => h,
        Err(ipseg_core::Error::Truncated { available, .. }) => return Err(truncated(available)),
        Err(e) => return Err(e.into()),
    };
    let mut payload = vec![0u8; parsed.payload_len()];
    let got = read_up_to(&mut source, &mut payload, ipft::HEADER_LEN as u64)?;
    if got < payload.len() {
        return Err(truncated(ipft::HEADER_LEN + got));
    }
    let mut extra = [0u8; 1];
    if read_up_to(&mut source, &mut extra, (ipft::HEADER_LEN + got) as u64)? > 0 {
        return Err(ipseg_core::Error::Format("trailing bytes after payload".into()).into());
    }
    Ok(ipft::decode_payload(&parsed, &payload)?)
}

pub fn read_mask<R: Read>(mut source: R) -> Result<SegMask> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes).map_err(|e| Error::Stream {
        offset: bytes.len() as u64,
        source: e,
    })?;
    Ok(pgm::decode_mask(&bytes)?)
}

pub fn write_mask<W: Write>(mask: &SegMask, mut sink: W) -> Result<()> {
    write_tracked(&mut sink, &pgm::encode_mask(mask))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    read_feature_map(open(path)?).map_err(|e| e.in_file(path))
}

pub fn save_feature_map(path: impl AsRef<Path>, fm: &FeatureMap) -> Result<()> {
    let path = path.as_ref();
    write_feature_map(fm, create(path)?).map_err(|e| e.in_file(path))
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<SegMask> {
    let path = path.as_ref();
    read_mask(open(path)?).map_err(|e| e.in_file(path))
}

pub fn save_mask(path: impl AsRef<Path>, mask: &SegMask) -> Result<()> {
    let path = path.as_ref();
    write_mask(mask, create(path)?).map_err(|e| e.in_file(path))
}

/// Instance-id grid stored as a `P5` image whose gray levels are the ids.
pub fn load_label_grid(path: impl AsRef<Path>) -> Result<LabelGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = pgm::decode_gray(&bytes).map_err(|e| Error::from(e).in_file(path))?;
    Ok(LabelGrid::from_gray(&img))
}

pub fn save_label_grid(path: impl AsRef<Path>, grid: &LabelGrid) -> Result<()> {
    let path = path.as_ref();
    let pixels = grid
        .labels
        .iter()
        .map(|&l| {
            u8::try_from(l).map_err(|_| {
                ipseg_core::Error::Param(format!("instance id {l} does not fit a gray level"))
            })
        })
        .collect::<std::result::Result<Vec<u8>, _>>()?;
    let bytes = pgm::encode_gray(&GrayImage {
        height: grid.height,
        width: grid.width,
        pixels,
    });
    write_tracked(&mut create(path)?, &bytes).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ipseg_core::{ImageGeometry, SourceTag};

    struct FailAfter {
        budget: usize,
    }

    impl Write for FailAfter {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            if self.budget == 0 {
                return Err(io::Error::other("disk full"));
            }
            let n = buf.len().min(self.budget).min(7);
            self.budget -= n;
            Ok(n)
        }
        fn flush(&mut self) -> io::Result<()> {
            Ok(())
        }
    }

    fn sample() -> FeatureMap {
        FeatureMap::new(
            2,
            3,
            2,
            (0..12).map(|v| v as f32).collect(),
            SourceTag::Sd,
            ImageGeometry::new(6, 9),
        )
        .unwrap()
    }

    #[test]
    fn write_failure_reports_offset() {
        let err = write_feature_map(&sample(), FailAfter { budget: 40 }).unwrap_err();
        match err {
            Error::Stream { offset, .. } => assert_eq!(offset, 40),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn stream_round_trip_and_truncation() {
        let mut buf = Vec::new();
        write_feature_map(&sample(), &mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 48);
        assert_eq!(read_feature_map(&buf[..]).unwrap(), sample());
        match read_feature_map(&buf[..50]).unwrap_err() {
            Error::Stream { offset, source } => {
                assert_eq!(offset, 50);
                assert_eq!(source.kind(), io::ErrorKind::UnexpectedEof);
            }
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(
            read_feature_map(&buf[..12]).unwrap_err(),
            Error::Stream { .. }
        ));
        let mut longer = buf.clone();
        longer.push(1);
        assert!(matches!(
            read_feature_map(&longer[..]).unwrap_err(),
            Error::Core(ipseg_core::Error::Format(_))
        ));
    }

    #[test]
    fn bad_magic_from_stream() {
        assert!(matches!(
            read_feature_map(&b"IPFX\x01\0\0\0"[..]).unwrap_err(),
            Error::Core(ipseg_core::Error::Format(_))
        ));
    }

    #[test]
    fn label_grid_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.pgm");
        let grid = LabelGrid::new(2, 3, vec![0, 1, 2, 2, 7, 0]).unwrap();
        save_label_grid(&path, &grid).unwrap();
        assert_eq!(load_label_grid(&path).unwrap(), grid);
        let too_big = LabelGrid::new(1, 1, vec![300]).unwrap();
        assert!(save_label_grid(&path, &too_big).is_err());
    }
}
