//! Binary PGM (P5) and PPM (P6) reading and writing, 8-bit maxval 255 only.
//!
//! Values scale to [0, 1] on read; writing rounds half-up and clamps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reject absurd header dims before any size arithmetic.
const MAX_DIM: usize = 1 << 20;

fn format_error(path: &Path, offset: usize, message: impl Into<String>) -> Error {
    Error::FileFormat {
        path: path.display().to_string(),
        format: "PNM",
        offset: offset as u64,
        message: message.into(),
    }
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderParser<'a> {
    /// Skip whitespace and `#` comments.
    fn skip_separators(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn read_number(&mut self, path: &Path, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(format_error(path, start, format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<usize>()
            .map_err(|_| format_error(path, start, format!("{what} out of range")))
    }
}

/// Read a PGM or PPM image into a 1- or 3-channel tensor scaled to [0, 1].
pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    if bytes.len() < 2 {
        return Err(format_error(path, 0, "missing magic"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(format_error(path, 0, "expected magic P5 or P6")),
    };
    let mut parser = HeaderParser {
        bytes: &bytes,
        pos: 2,
    };
    let width = parser.read_number(path, "width")?;
    let height = parser.read_number(path, "height")?;
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(format_error(
            path,
            parser.pos,
            format!("implausible dims {width}x{height}"),
        ));
    }
    let maxval = parser.read_number(path, "maxval")?;
    if maxval != 255 {
        return Err(format_error(
            path,
            parser.pos,
            format!("unsupported maxval {maxval}; only 8-bit (255) images are handled"),
        ));
    }
    if parser.pos >= bytes.len() {
        return Err(format_error(path, parser.pos, "missing payload"));
    }
    // exactly one whitespace byte separates the header from the payload
    if !bytes[parser.pos].is_ascii_whitespace() {
        return Err(format_error(
            path,
            parser.pos,
            "expected a single whitespace byte after maxval",
        ));
    }
    parser.pos += 1;
    let expected = width * height * channels;
    let payload = &bytes[parser.pos..];
    if payload.len() != expected {
        return Err(format_error(
            path,
            parser.pos,
            format!("payload has {} bytes, need {expected}", payload.len()),
        ));
    }
    // payload is interleaved per pixel; tensor layout is channel-planar
    let mut out = Tensor::zeros(channels, height, width);
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                let v = payload[(y * width + x) * channels + c];
                out.set(c, y, x, v as f32 / 255.0);
            }
        }
    }
    Ok(out)
}

/// Write a 1-channel tensor as P5 or a 3-channel tensor as P6.
pub fn write_image(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let (channels, height, width) = image.shape();
    let magic: &[u8] = match channels {
        1 => b"P5",
        3 => b"P6",
        got => {
            return Err(Error::ChannelMismatch {
                context: "write_image",
                expected: 3,
                got,
            })
        }
    };
    let mut bytes = Vec::with_capacity(32 + width * height * channels);
    bytes.extend_from_slice(magic);
    bytes.extend_from_slice(format!("\n{width} {height}\n255\n").as_bytes());
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                let v = (image.get(c, y, x) * 255.0 + 0.5).floor();
                bytes.push(v.clamp(0.0, 255.0) as u8);
            }
        }
    }
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
