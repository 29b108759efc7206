//! Binary PGM (P5) and PPM (P6) read/write with 8-bit depth.

use std::io::Write;
use std::path::Path;

use crate::error::{CknError, Result};
use crate::feature_map::FeatureMap;

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(CknError::invalid(format!(
            "pixel buffer length {} does not match {width}x{height}",
            pixels.len()
        )));
    }
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    Ok(())
}

pub fn write_ppm(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(CknError::invalid(format!(
            "pixel buffer length {} does not match {width}x{height} RGB",
            rgb.len()
        )));
    }
    let mut f = std::fs::File::create(path)?;
    write!(f, "P6\n{width} {height}\n255\n")?;
    f.write_all(rgb)?;
    Ok(())
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Tokens<'a> {
    /// Next whitespace-delimited token, skipping `#` comments.
    fn next(&mut self) -> Result<&'a [u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        if self.pos >= self.bytes.len() {
            return Err(CknError::Decode("unexpected end of netpbm header".into()));
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn next_usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.next()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CknError::Decode(format!("invalid {what} in netpbm header")))
    }
}

fn read_netpbm(path: &Path, expected_magic: &[u8], channels: usize) -> Result<FeatureMap> {
    let bytes = super::read_file_maybe_gz(path)?;
    let mut tok = Tokens { bytes: &bytes, pos: 0 };
    let magic = tok.next()?;
    if magic != expected_magic {
        return Err(CknError::BadMagic {
            expected: String::from_utf8_lossy(expected_magic).into_owned(),
            found: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let width = tok.next_usize("width")?;
    let height = tok.next_usize("height")?;
    let maxval = tok.next_usize("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(CknError::Decode(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates header and raster
    let start = tok.pos + 1;
    let expected = start + width * height * channels;
    if bytes.len() < expected {
        return Err(CknError::Truncated {
            what: "netpbm raster".into(),
            expected,
            found: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes[start..expected]
        .iter()
        .map(|&b| b as f64 / maxval as f64)
        .collect();
    FeatureMap::from_vec(height, width, channels, data)
}

/// Reads a binary PGM into a single-channel map with values in `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<FeatureMap> {
    read_netpbm(path.as_ref(), b"P5", 1)
}

/// Reads a binary PPM into a 3-channel map with values in `[0, 1]`.
pub fn read_ppm(path: impl AsRef<Path>) -> Result<FeatureMap> {
    read_netpbm(path.as_ref(), b"P6", 3)
}

/// Reads either format, dispatching on the magic.
pub fn read_image(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let bytes = super::read_file_maybe_gz(path.as_ref())?;
    match bytes.get(..2) {
        Some(b"P5") => read_pgm(path),
        Some(b"P6") => read_ppm(path),
        _ => Err(CknError::BadMagic {
            expected: "P5 or P6".into(),
            found: String::from_utf8_lossy(bytes.get(..2).unwrap_or(b"")).into_owned(),
        }),
    }
}
