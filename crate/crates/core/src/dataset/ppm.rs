//! Binary PPM (P6) and PGM (P5) rasters with maxval 255.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::graph::Tensor3;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("not a binary PPM: magic {0:?}")]
    BadMagic(String),
    #[error("unsupported maxval {0}, only 255 is read")]
    BadMaxval(u32),
    #[error("malformed header: {0}")]
    BadHeader(String),
    #[error("pixel data truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("expected {expected} channels, tensor has {found}")]
    Channels { expected: usize, found: usize },
    #[error("value {value} at index {index} is outside [0, 255]")]
    OutOfRange { index: usize, value: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct Header {
    magic: String,
    width: usize,
    height: usize,
    maxval: u32,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, RasterError> {
    let mut tokens = Vec::with_capacity(4);
    let mut i = 0;
    while tokens.len() < 4 {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        if i >= bytes.len() {
            return Err(RasterError::BadHeader("header ends early".into()));
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
        if tokens.len() == 1 && tokens[0] != "P6" && tokens[0] != "P5" {
            return Err(RasterError::BadMagic(tokens[0].clone()));
        }
    }
    // exactly one whitespace byte separates the header from the pixels
    if i >= bytes.len() {
        return Err(RasterError::Truncated { expected: 1, found: 0 });
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| RasterError::BadHeader(format!("{what} `{s}` is not a number")))
    };
    let maxval = num(&tokens[3], "maxval")? as u32;
    if maxval != 255 {
        return Err(RasterError::BadMaxval(maxval));
    }
    Ok(Header {
        magic: tokens[0].clone(),
        width: num(&tokens[1], "width")?,
        height: num(&tokens[2], "height")?,
        maxval,
        data_start: i + 1,
    })
}

/// Decodes P6 (3 channels) or P5 (1 channel) into a tensor with values in
/// `[0, 255]`.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor3, RasterError> {
    let h = parse_header(bytes)?;
    debug_assert_eq!(h.maxval, 255);
    let channels = if h.magic == "P6" { 3 } else { 1 };
    let n = h.width * h.height;
    let data = &bytes[h.data_start..];
    if data.len() < n * channels {
        return Err(RasterError::Truncated {
            expected: n * channels,
            found: data.len(),
        });
    }
    let mut t = Tensor3::zeros(channels, h.height, h.width);
    for p in 0..n {
        for c in 0..channels {
            t.data[c * n + p] = f64::from(data[p * channels + c]);
        }
    }
    Ok(t)
}

fn to_bytes(t: &Tensor3) -> Result<Vec<u8>, RasterError> {
    let n = t.height * t.width;
    let mut out = vec![0u8; n * t.channels];
    for c in 0..t.channels {
        for p in 0..n {
            let v = t.data[c * n + p].round();
            if !(0.0..=255.0).contains(&v) {
                return Err(RasterError::OutOfRange {
                    index: c * n + p,
                    value: t.data[c * n + p],
                });
            }
            out[p * t.channels + c] = v as u8;
        }
    }
    Ok(out)
}

/// Encodes a 3-channel tensor as P6 or a 1-channel tensor as P5. Values
/// are rounded to the nearest integer.
pub fn encode_pnm(t: &Tensor3) -> Result<Vec<u8>, RasterError> {
    let magic = match t.channels {
        3 => "P6",
        1 => "P5",
        found => return Err(RasterError::Channels { expected: 3, found }),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", t.width, t.height).into_bytes();
    out.extend(to_bytes(t)?);
    Ok(out)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Tensor3, RasterError> {
    let t = decode_pnm(&fs::read(path)?)?;
    if t.channels != 3 {
        return Err(RasterError::BadMagic("P5".into()));
    }
    Ok(t)
}

pub fn write_ppm(t: &Tensor3, path: impl AsRef<Path>) -> Result<(), RasterError> {
    if t.channels != 3 {
        return Err(RasterError::Channels {
            expected: 3,
            found: t.channels,
        });
    }
    fs::File::create(path)?.write_all(&encode_pnm(t)?)?;
    Ok(())
}

/// Writes 8-bit grey levels as P5.
pub fn write_pgm(width: usize, height: usize, levels: &[u8], path: impl AsRef<Path>) -> Result<(), RasterError> {
    if levels.len() != width * height {
        return Err(RasterError::Truncated {
            expected: width * height,
            found: levels.len(),
        });
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(levels);
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}
