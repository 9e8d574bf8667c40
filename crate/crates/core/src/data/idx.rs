//! IDX containers (MNIST family), optionally gzip-compressed.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub enum IdxData {
    /// `[N x H x W]`, scaled to `[0, 1]`.
    Images(Tensor),
    Labels(Vec<u8>),
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse { offset, message: message.into() }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(offset, "truncated header"))
}

/// Parses an IDX image (`0x803`) or label (`0x801`) file.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut raw)
            .map_err(|e| parse_err(0, format!("gzip: {e}")))?;
        return parse_idx(&raw);
    }
    let magic = read_u32(bytes, 0)?;
    let dims = match magic {
        IMAGES_MAGIC => 3,
        LABELS_MAGIC => 1,
        other => return Err(parse_err(0, format!("unsupported magic 0x{other:08x}"))),
    };
    let mut shape = Vec::with_capacity(dims);
    let mut count: usize = 1;
    for d in 0..dims {
        let offset = 4 + 4 * d;
        let extent = read_u32(bytes, offset)? as usize;
        if extent == 0 {
            return Err(parse_err(offset, "zero dimension"));
        }
        count = count
            .checked_mul(extent)
            .ok_or_else(|| parse_err(offset, "dimension product overflows"))?;
        shape.push(extent);
    }
    let start = 4 + 4 * dims;
    let payload = &bytes[start.min(bytes.len())..];
    if payload.len() < count {
        return Err(parse_err(
            bytes.len(),
            format!("payload has {} bytes, header promises {count}", payload.len()),
        ));
    }
    if payload.len() > count {
        return Err(parse_err(start + count, "trailing bytes after payload"));
    }
    Ok(match dims {
        3 => IdxData::Images(Tensor::from_parts_unchecked(
            shape,
            payload.iter().map(|&b| b as f64 / 255.0).collect(),
        )),
        _ => IdxData::Labels(payload.to_vec()),
    })
}

pub fn read_idx(path: &Path) -> Result<IdxData> {
    let bytes = std::fs::read(path)?;
    parse_idx(&bytes)
}

/// Serializes a `[N x H x W]` tensor with values in `[0, 1]` as an IDX image file.
pub fn write_idx_images(images: &Tensor) -> Result<Vec<u8>> {
    let shape = images.shape();
    if shape.len() != 3 {
        return Err(Error::Config(format!("IDX images need 3 dims, got {shape:?}")));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| Error::Config("dimension exceeds u32".into()))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    for &v in images.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Input(format!("pixel {v} outside [0,1]")));
        }
        out.push((v * 255.0).round() as u8);
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn fixture() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 255, 128, 64]);
        b
    }

    #[test]
    fn parses_hand_built_image_file() {
        let IdxData::Images(t) = parse_idx(&fixture()).unwrap() else { panic!("expected images") };
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn parses_labels_and_gzip() {
        let raw = write_idx_labels(&[3, 1, 4]);
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&raw).unwrap();
        let gz = enc.finish().unwrap();
        assert_eq!(parse_idx(&gz).unwrap(), IdxData::Labels(vec![3, 1, 4]));
        assert_eq!(parse_idx(&raw).unwrap(), IdxData::Labels(vec![3, 1, 4]));
    }

    #[test]
    fn mnist_style_header_reports_shape() {
        // header of the official train-images file, payload truncated
        let header = [0u8, 0, 8, 3, 0, 0, 0xea, 0x60, 0, 0, 0, 28, 0, 0, 0, 28];
        assert_eq!(read_u32(&header, 4).unwrap(), 60000);
        match parse_idx(&header) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 16);
                assert!(message.contains("47040000"), "{message}");
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut bad = fixture();
        bad[3] = 0x99;
        assert!(matches!(parse_idx(&bad), Err(Error::Parse { offset: 0, .. })));
        let truncated = &fixture()[..18];
        assert!(matches!(parse_idx(truncated), Err(Error::Parse { .. })));
        assert!(matches!(parse_idx(&[0, 0, 8]), Err(Error::Parse { offset: 0, .. })));
        let overflow = [0u8, 0, 8, 3, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff];
        if usize::BITS == 64 {
            assert!(matches!(parse_idx(&overflow), Err(Error::Parse { .. })));
        }
    }
}
