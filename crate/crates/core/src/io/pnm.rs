//! Binary 8-bit PGM (P5) and PPM (P6).
//!
//! The reader accepts comments and arbitrary whitespace in the header; the
//! writer always emits `P5\n{w} {h}\n255\n` (or `P6`), so files in that
//! canonical form round-trip byte for byte.

use std::path::Path;

use crate::netcore::Image;

use super::{read_bytes, write_bytes, IoError};

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, IoError> {
    if bytes.len() < 2 || bytes[0] != b'P' || (bytes[1] != b'5' && bytes[1] != b'6') {
        return Err(IoError::Format("not a binary PGM/PPM file (expected P5 or P6)".into()));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (n, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            let name = ["width", "height", "maxval"][n];
            return Err(IoError::Format(format!("malformed header: missing {name}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| IoError::Format("header number out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(IoError::Format("malformed header: no whitespace after maxval".into()));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(IoError::Format(format!("unsupported maxval {maxval} (only 255)")));
    }
    if width == 0 || height == 0 {
        return Err(IoError::Format("zero image dimension".into()));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        data_start: pos + 1,
    })
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Image, IoError> {
    let h = parse_header(bytes)?;
    let c = if h.magic[1] == b'5' { 1 } else { 3 };
    let n = h.width * h.height;
    let data = &bytes[h.data_start..];
    if data.len() != n * c {
        return Err(IoError::Format(format!(
            "expected {} data bytes, found {}",
            n * c,
            data.len()
        )));
    }
    // Interleaved RGB on disk, planar C×H×W in memory.
    let mut values = vec![0.0; n * c];
    for i in 0..n {
        for ch in 0..c {
            values[ch * n + i] = data[i * c + ch] as f64 / 255.0;
        }
    }
    Ok(Image::new(c, h.height, h.width, values)?)
}

pub fn encode_pnm(image: &Image) -> Vec<u8> {
    let [c, h, w] = image.dims();
    let n = h * w;
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.reserve(n * c);
    let v = image.values();
    for i in 0..n {
        for ch in 0..c {
            out.push(to_byte(v[ch * n + i]));
        }
    }
    out
}

pub(crate) fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_image(path: &Path) -> Result<Image, IoError> {
    decode_pnm(&read_bytes(path)?).map_err(|e| e.at_path(path))
}

pub fn write_image(image: &Image, path: &Path) -> Result<(), IoError> {
    write_bytes(path, &encode_pnm(image))
}
