//! Binary greyscale PGM (P5) reading and writing.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

fn malformed(offset: usize, message: impl Into<String>) -> Error {
    Error::Pgm {
        offset,
        message: message.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(malformed(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| malformed(start, format!("{what} out of range")))
    }
}

/// Parses P5 data. Samples are rescaled to `[0, 255]` when `maxval ≠ 255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(malformed(0, "missing P5 magic number"));
    }
    let mut header = Header { bytes, pos: 2 };
    let width = header.number("width")?;
    let height = header.number("height")?;
    let maxval_offset = header.pos;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(malformed(maxval_offset, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(maxval_offset, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(header.pos) {
        Some(c) if c.is_ascii_whitespace() => header.pos += 1,
        _ => return Err(malformed(header.pos, "expected whitespace after maxval")),
    }
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let needed = width * height * sample_bytes;
    let data = &bytes[header.pos..];
    if data.len() < needed {
        return Err(malformed(
            header.pos + data.len(),
            format!("truncated pixel data: {} of {needed} bytes", data.len()),
        ));
    }
    let scale = 255.0 / maxval as f64;
    let pixels: Vec<f64> = if sample_bytes == 1 {
        data[..needed].iter().map(|&b| b as f64).collect()
    } else {
        data[..needed]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
            .collect()
    };
    let pixels = if maxval == 255 {
        pixels
    } else {
        pixels.into_iter().map(|p| p * scale).collect()
    };
    Image::new(width, height, pixels)
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Image> {
    decode_pgm(&fs::read(path)?)
}

/// 8-bit P5 encoding; values are rounded and clamped to `[0, 255]`.
pub fn encode_pgm(image: &Image) -> Vec<u8> {
    let (w, h) = image.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| v.round().clamp(0.0, 255.0) as u8));
    out
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let written = fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(bytes)?;
        f.sync_all()
    });
    if let Err(e) = written.and_then(|_| fs::rename(&tmp, path)) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

pub fn save_pgm(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    write_atomic(path, &encode_pgm(image))
}
