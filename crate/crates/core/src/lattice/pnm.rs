//! Binary PGM (P5) / PPM (P6) codec.

use std::path::Path;

use super::IntensityGrid;
use crate::error::{Error, Result};

struct Header {
    channels: usize,
    width: usize,
    height: usize,
    maxval: u64,
    payload_offset: usize,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u64> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader {
                offset: start,
                reason: format!("expected {what}"),
            });
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::MalformedHeader {
                offset: start,
                reason: format!("{what} out of range"),
            })
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 {
        return Err(Error::MalformedHeader {
            offset: bytes.len(),
            reason: "file too short for a magic number".into(),
        });
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::UnsupportedMagic {
                magic: String::from_utf8_lossy(other).into_owned(),
            })
        }
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_offset = cur.pos;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader {
            offset: 2,
            reason: format!("zero dimension {width}x{height}"),
        });
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader {
            offset: maxval_offset,
            reason: format!("maxval {maxval} not in 1..=65535"),
        });
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => {
            return Err(Error::MalformedHeader {
                offset: cur.pos,
                reason: "expected a single whitespace byte after maxval".into(),
            })
        }
    }
    Ok(Header {
        channels,
        width: width as usize,
        height: height as usize,
        maxval,
        payload_offset: cur.pos + 1,
    })
}

/// Decode a P5/P6 byte buffer, also returning the file's maxval.
pub fn decode_pnm(bytes: &[u8]) -> Result<(IntensityGrid, u64)> {
    let h = parse_header(bytes)?;
    let bytes_per_sample = if h.maxval > 255 { 2 } else { 1 };
    let samples = h.width * h.height * h.channels;
    let expected = samples * bytes_per_sample;
    let payload = &bytes[h.payload_offset.min(bytes.len())..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            offset: h.payload_offset + payload.len(),
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<u64> = if bytes_per_sample == 1 {
        payload[..expected].iter().map(|&b| b as u64).collect()
    } else {
        payload[..expected]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]) as u64)
            .collect()
    };
    if let Some(i) = values.iter().position(|&v| v > h.maxval) {
        let pix = i / h.channels;
        return Err(Error::ValueExceedsMaxval {
            value: values[i],
            maxval: h.maxval,
            x: pix % h.width,
            y: pix / h.width,
            channel: i % h.channels,
        });
    }
    let grid = IntensityGrid::from_values(h.width, h.height, h.channels, values)?;
    Ok((grid, h.maxval))
}

/// Encode with an explicit maxval (255 or 65535).
pub fn encode_pnm(grid: &IntensityGrid, maxval: u64) -> Result<Vec<u8>> {
    if maxval != 255 && maxval != 65535 {
        return Err(Error::InvalidParameter(format!("maxval must be 255 or 65535, got {maxval}")));
    }
    let magic = match grid.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::ShapeMismatch(format!(
                "PGM/PPM hold 1 or 3 channels, grid has {c}"
            )))
        }
    };
    if let Some(i) = grid.values().iter().position(|&v| v > maxval) {
        let c = grid.channels();
        let pix = i / c;
        return Err(Error::ValueExceedsMaxval {
            value: grid.values()[i],
            maxval,
            x: pix % grid.width(),
            y: pix / grid.width(),
            channel: i % c,
        });
    }
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", grid.width(), grid.height()).into_bytes();
    if maxval == 255 {
        out.extend(grid.values().iter().map(|&v| v as u8));
    } else {
        for &v in grid.values() {
            out.extend_from_slice(&(v as u16).to_be_bytes());
        }
    }
    Ok(out)
}

pub fn read_pnm(path: impl AsRef<Path>) -> Result<(IntensityGrid, u64)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

/// Load a binary PGM/PPM; samples are taken verbatim with no rescaling.
pub fn load_image(path: impl AsRef<Path>) -> Result<IntensityGrid> {
    read_pnm(path).map(|(g, _)| g)
}

/// Save with the smallest of maxval 255 / 65535 that holds every value.
pub fn save_image(grid: &IntensityGrid, path: impl AsRef<Path>) -> Result<()> {
    let maxval = if grid.max_value() <= 255 { 255 } else { 65535 };
    save_image_with_maxval(grid, path, maxval)
}

pub fn save_image_with_maxval(grid: &IntensityGrid, path: impl AsRef<Path>, maxval: u64) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pnm(grid, maxval)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
