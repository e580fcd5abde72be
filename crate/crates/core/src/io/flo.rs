//! Middlebury-style .flo flow files.
//!
//! Layout: f32 magic 202021.25, i32 width, i32 height, then
//! width * height * 2 little-endian f32 values interleaved (u, v) row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowField;

/// The sanity-check magic value ("PIEH" when read as bytes).
pub const FLO_MAGIC: f32 = 202021.25;

/// Reject absurd header dims before allocating.
const MAX_DIM: u32 = 1 << 20;

fn format_error(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::FileFormat {
        path: path.display().to_string(),
        format: ".flo",
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 12 {
        return Err(format_error(path, 0, "header needs 12 bytes"));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(format_error(
            path,
            0,
            format!("magic check failed: got {magic}, want {FLO_MAGIC}"),
        ));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 || width as u32 > MAX_DIM || height as u32 > MAX_DIM {
        return Err(format_error(path, 4, format!("bad dims {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = 8 * width * height;
    if bytes.len() - 12 != expected {
        return Err(format_error(
            path,
            12,
            format!("payload has {} bytes, need {expected}", bytes.len() - 12),
        ));
    }
    let mut data = Vec::with_capacity(2 * width * height);
    for chunk in bytes[12..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    FlowField::from_raw(height, width, data)
}

pub fn write_flo(path: impl AsRef<Path>, flow: &FlowField) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(12 + 8 * flow.len());
    bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    bytes.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for v in flow.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::SplitMix64;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        let mut rng = SplitMix64::new(1);
        let mut flow = FlowField::zeros(5, 7);
        for y in 0..5 {
            for x in 0..7 {
                flow.set(
                    y,
                    x,
                    rng.next_f32_in(-100.0, 100.0),
                    rng.next_f32_in(-100.0, 100.0),
                );
            }
        }
        write_flo(&path, &flow).unwrap();
        let first = fs::read(&path).unwrap();
        let back = read_flo(&path).unwrap();
        assert_eq!(back, flow);
        write_flo(&path, &back).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
    }

    #[test]
    fn file_size_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        // 3 wide, 2 tall: 12 header bytes + 48 payload bytes
        write_flo(&path, &FlowField::zeros(2, 3)).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 60);
    }

    #[test]
    fn corrupted_magic_names_the_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&202021.24f32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        fs::write(&path, bytes).unwrap();
        let err = read_flo(&path).unwrap_err();
        assert!(err.to_string().contains("magic"));
    }

    #[test]
    fn length_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.flo");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 16]); // needs 32
        fs::write(&path, bytes).unwrap();
        assert!(read_flo(&path).is_err());
    }
}
