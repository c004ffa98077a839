//! Binary PNM (P5 gray, P6 RGB) with 16-bit big-endian samples.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Shape};

pub const MAXVAL: u16 = 65535;

/// Maps [0, 1] to 0..=65535 with round-half-even; values outside are clamped.
pub fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * MAXVAL as f64).round_ties_even() as u16
}

pub fn encode_pnm(field: &Field) -> Result<Vec<u8>> {
    let magic = match field.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::shape(format!("PNM needs 1 or 3 channels, got {c}"))),
    };
    let header = format!("{magic}\n{} {}\n{MAXVAL}\n", field.width(), field.height());
    let mut out = Vec::with_capacity(header.len() + 2 * field.len());
    out.extend_from_slice(header.as_bytes());
    for &v in field.data() {
        out.extend_from_slice(&quantize(v).to_be_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { offset: self.pos, message: message.into() }
    }

    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
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
        while self.bytes.get(self.pos).is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse().map_err(|_| Error::Parse { offset: start, message: format!("{what} out of range") })
    }
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Field> {
    let mut cur = Cursor { bytes, pos: 0 };
    let channels = match bytes.get(0..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(cur.err("expected magic P5 or P6")),
    };
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    cur.skip_space_and_comments();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval == 0 || maxval > MAXVAL as usize {
        return Err(Error::Parse { offset: maxval_at, message: format!("maxval {maxval} outside 1..=65535") });
    }
    if !cur.bytes.get(cur.pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(cur.err("expected a single whitespace byte before the raster"));
    }
    cur.pos += 1;
    if width == 0 || height == 0 {
        return Err(cur.err("image has zero size"));
    }
    let shape = Shape::new(height, width, channels)?;
    let wide = maxval > 255;
    let sample_bytes = if wide { 2 } else { 1 };
    let needed = shape.len() * sample_bytes;
    let raster = &bytes[cur.pos..];
    if raster.len() < needed {
        return Err(Error::Parse {
            offset: bytes.len(),
            message: format!("raster truncated: need {needed} bytes, found {}", raster.len()),
        });
    }
    let scale = 1.0 / maxval as f64;
    let data = (0..shape.len())
        .map(|i| {
            let v = if wide { u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64 } else { raster[i] as f64 };
            (v * scale).min(1.0)
        })
        .collect();
    Field::new(shape, data)
}

pub fn write_pnm(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    std::fs::write(path, encode_pnm(field)?)?;
    Ok(())
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<Field> {
    decode_pnm(&std::fs::read(path)?)
}
