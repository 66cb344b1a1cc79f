//! Reading and writing 8-bit Portable GrayMap images (P2 ASCII and P5 binary).
//!
//! Only `maxval <= 255` is accepted, so every sample fits in one byte. Header
//! comments (`#` to end of line) are allowed anywhere between header tokens.
//! After the raster only whitespace may follow.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },
    #[error("unsupported maxval {0} (must be in 1..=255)")]
    UnsupportedMaxval(u64),
    #[error("nonsensical dimension {width}x{height}")]
    NonsensicalDimension { width: u64, height: u64 },
    #[error("pixel value {value} at index {index} exceeds maxval {maxval}")]
    PixelOutOfRange { index: usize, value: u64, maxval: u8 },
    #[error("unexpected data after raster at byte offset {0}")]
    TrailingData(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PgmFormat {
    /// `P2`, whitespace separated decimal samples.
    Ascii,
    /// `P5`, one byte per sample.
    Binary,
}

/// A grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u8,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    /// Checks the shape and range invariants.
    pub fn new(width: usize, height: usize, maxval: u8, pixels: Vec<u8>) -> Result<Self, PgmError> {
        if width == 0 || height == 0 {
            return Err(PgmError::NonsensicalDimension { width: width as u64, height: height as u64 });
        }
        if maxval == 0 {
            return Err(PgmError::UnsupportedMaxval(0));
        }
        let expected = width * height;
        if pixels.len() != expected {
            return Err(PgmError::TruncatedPixelData { expected, found: pixels.len() });
        }
        if let Some((index, &value)) = pixels.iter().enumerate().find(|(_, &p)| p > maxval) {
            return Err(PgmError::PixelOutOfRange { index, value: value as u64, maxval });
        }
        Ok(GrayImage { width, height, maxval, pixels })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' && self.bytes[self.pos] != b'\r' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn skip_whitespace(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Reads an unsigned decimal token. Returns `None` at end of input.
    fn read_uint(&mut self) -> Result<Option<u64>, usize> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return if self.pos == self.bytes.len() { Ok(None) } else { Err(self.pos) };
        }
        // Token must be terminated by whitespace, a comment, or end of input.
        if self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if !b.is_ascii_whitespace() && b != b'#' {
                return Err(self.pos);
            }
        }
        let mut value: u64 = 0;
        for &d in &self.bytes[start..self.pos] {
            value = value.saturating_mul(10).saturating_add((d - b'0') as u64);
        }
        Ok(Some(value))
    }

    fn header_field(&mut self, name: &str) -> Result<u64, PgmError> {
        self.skip_whitespace_and_comments();
        match self.read_uint() {
            Ok(Some(v)) => Ok(v),
            Ok(None) => Err(PgmError::MalformedHeader(format!("missing {name}"))),
            Err(at) => Err(PgmError::MalformedHeader(format!("invalid {name} at byte {at}"))),
        }
    }
}

/// Decodes a complete PGM file image.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    let format = match bytes.get(..2) {
        Some(b"P2") => PgmFormat::Ascii,
        Some(b"P5") => PgmFormat::Binary,
        _ => return Err(PgmError::MalformedHeader("bad magic number".into())),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(PgmError::MalformedHeader("bad magic number".into()));
    }

    let width = cur.header_field("width")?;
    let height = cur.header_field("height")?;
    if width == 0 || height == 0 {
        return Err(PgmError::NonsensicalDimension { width, height });
    }
    let maxval = cur.header_field("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    let maxval = maxval as u8;
    let expected = usize::try_from(width.saturating_mul(height))
        .map_err(|_| PgmError::NonsensicalDimension { width, height })?;

    let pixels = match format {
        PgmFormat::Binary => {
            // Exactly one whitespace byte separates maxval from the raster.
            match bytes.get(cur.pos) {
                Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
                _ => return Err(PgmError::MalformedHeader("missing separator after maxval".into())),
            }
            let available = bytes.len() - cur.pos;
            if available < expected {
                return Err(PgmError::TruncatedPixelData { expected, found: available });
            }
            let raster = bytes[cur.pos..cur.pos + expected].to_vec();
            cur.pos += expected;
            raster
        }
        PgmFormat::Ascii => {
            let mut raster = Vec::with_capacity(expected);
            while raster.len() < expected {
                cur.skip_whitespace();
                match cur.read_uint() {
                    Ok(Some(v)) => {
                        if v > maxval as u64 {
                            return Err(PgmError::PixelOutOfRange { index: raster.len(), value: v, maxval });
                        }
                        raster.push(v as u8);
                    }
                    Ok(None) => {
                        return Err(PgmError::TruncatedPixelData { expected, found: raster.len() })
                    }
                    // A non-numeric token inside the raster leaves it short of valid samples.
                    Err(_) => {
                        return Err(PgmError::TruncatedPixelData { expected, found: raster.len() })
                    }
                }
            }
            raster
        }
    };

    cur.skip_whitespace();
    if cur.pos != bytes.len() {
        return Err(PgmError::TrailingData(cur.pos));
    }
    GrayImage::new(width as usize, height as usize, maxval, pixels)
}

/// Encodes an image. P2 output wraps at 16 samples per line.
pub fn serialize_pgm(img: &GrayImage, format: PgmFormat) -> Vec<u8> {
    let magic = match format {
        PgmFormat::Ascii => "P2",
        PgmFormat::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    match format {
        PgmFormat::Binary => out.extend_from_slice(&img.pixels),
        PgmFormat::Ascii => {
            for chunk in img.pixels.chunks(16) {
                let line: Vec<String> = chunk.iter().map(|p| p.to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}
