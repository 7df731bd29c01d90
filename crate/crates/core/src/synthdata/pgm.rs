//! Binary netpbm P5 (maxval 255) encode/decode.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

fn fmt_err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        format: "PGM",
        offset,
        detail: detail.into(),
    }
}

/// Encode a `[1, H, W]` (or `[H, W]`) image with values in [0, 1].
pub fn encode_pgm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w) = match image.dims() {
        &[1, h, w] | &[h, w] => (h, w),
        d => return Err(Error::Shape(format!("PGM needs [1, H, W], got {d:?}"))),
    };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &v in image.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        out.push((v * 255.0).round() as u8);
    }
    Ok(out)
}

/// Decode a P5 image into `[1, H, W]` with values `byte / 255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut pos = 0;
    if bytes.get(..2) != Some(b"P5") {
        return Err(fmt_err(0, "missing P5 magic"));
    }
    pos += 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Whitespace and `#` comments may precede each header number.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(fmt_err(pos, "truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(fmt_err(pos, "expected a decimal number"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| fmt_err(start, "number too large"))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(fmt_err(pos, format!("maxval must be 255, got {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(fmt_err(pos, "zero image dimension"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(fmt_err(pos, "missing whitespace after maxval")),
    }
    let need = w * h;
    let body = &bytes[pos..];
    if body.len() < need {
        return Err(fmt_err(bytes.len(), format!("truncated pixel data: need {need} bytes, have {}", body.len())));
    }
    if body.len() > need {
        return Err(fmt_err(pos + need, "trailing bytes after pixel data"));
    }
    let data = body.iter().map(|&b| f32::from(b) / 255.0).collect();
    Tensor::new(vec![1, h, w], data)
}

pub fn write_pgm(image: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(image)?).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    decode_pgm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
