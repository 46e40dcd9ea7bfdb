//! Binary PGM (P5) / PPM (P6) image dumps, maxval 255.

use std::fs;
use std::path::Path;

use memdenoise_core::{ImageTensor, Shape};

use crate::{Error, Result};

/// Round half up after clamping to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn encode(img: &ImageTensor) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::Config(format!("cannot write a {c}-channel image as PGM/PPM")));
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn write_image(img: &ImageTensor, path: &Path) -> Result<()> {
    fs::write(path, encode(img)?).map_err(Error::io(path))
}

/// Header tokens, skipping whitespace and `#` comments.
fn header_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, usize)> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    Some((tokens, i + 1))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ImageTensor> {
    let (tokens, start) = header_tokens(bytes, 4).ok_or_else(|| Error::format(path, "incomplete PNM header"))?;
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::format(path, format!("unsupported PNM magic {other:?}"))),
    };
    let num = |s: &str| -> Result<usize> { s.parse().map_err(|_| Error::format(path, format!("bad header field {s:?}"))) };
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval != 255 {
        return Err(Error::format(path, format!("maxval {maxval} unsupported (need 255)")));
    }
    let shape = Shape::new(height, width, channels);
    let raster = bytes.get(start..start + shape.len()).ok_or(Error::Truncated {
        path: path.into(),
        expected: start + shape.len(),
        found: bytes.len(),
    })?;
    Ok(ImageTensor::from_bytes(shape, raster)?)
}

pub fn read_image(path: &Path) -> Result<ImageTensor> {
    decode(&fs::read(path).map_err(Error::io(path))?, path)
}
