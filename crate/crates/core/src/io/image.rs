//! Binary PPM (P6) and PGM (P5) images.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
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
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(parse_err(start, format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse().map_err(|_| parse_err(start, format!("{what} out of range")))
    }
}

/// Decodes a P6 or P5 image into a 3×H×W tensor in [0, 1]. Gray images are
/// replicated into three channels.
pub fn decode_pnm(bytes: &[u8]) -> Result<Tensor> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(parse_err(0, "expected magic P6 or P5")),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let max_at = h.pos;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(parse_err(max_at, "zero image extent"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(max_at, format!("maxval {maxval} outside 1..=65535")));
    }
    match bytes.get(h.pos) {
        Some(b) if b.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(parse_err(h.pos, "expected one whitespace byte before pixel data")),
    }
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    let need = width * height * channels * sample_bytes;
    let data = &bytes[h.pos..];
    if data.len() < need {
        return Err(parse_err(
            bytes.len(),
            format!("pixel data truncated: need {need} bytes, found {}", data.len()),
        ));
    }
    let mut samples = Vec::with_capacity(width * height * channels);
    for i in 0..width * height * channels {
        let v = if sample_bytes == 2 {
            u16::from_be_bytes([data[2 * i], data[2 * i + 1]]) as usize
        } else {
            data[i] as usize
        };
        if v > maxval {
            return Err(parse_err(h.pos + i * sample_bytes, format!("sample {v} exceeds maxval {maxval}")));
        }
        samples.push(v as Real / maxval as Real);
    }
    let plane = width * height;
    let mut out = vec![0.0; 3 * plane];
    for p in 0..plane {
        for c in 0..3 {
            out[c * plane + p] = samples[p * channels + if channels == 3 { c } else { 0 }];
        }
    }
    Tensor::new(&[3, height, width], out)
}

/// Encodes a 3×H×W tensor as P6 or a 1×H×W tensor as P5, maxval 255.
/// Values are clamped to [0, 1] and rounded to the nearest 1/255 step.
pub fn encode_pnm(image: &Tensor) -> Result<Vec<u8>> {
    let (channels, h, w) = match *image.shape() {
        [c @ (1 | 3), h, w] => (c, h, w),
        ref s => return Err(Error::dim(format!("can only encode 1×H×W or 3×H×W images, got {s:?}"))),
    };
    let magic = if channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for p in 0..plane {
        for c in 0..channels {
            let v = image.data()[c * plane + p];
            let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            out.push((v * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn load_image(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn save_image(image: &Tensor, path: &Path) -> Result<()> {
    let bytes = encode_pnm(image)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Lays 3×H×W (or 1×H×W, replicated) images side by side with a 1-pixel
/// white gutter.
pub fn tile_row(images: &[Tensor]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(Error::contract("tile_row needs at least one image"));
    };
    let (h, w) = (first.shape()[first.ndim() - 2], first.shape()[first.ndim() - 1]);
    let total_w = images.len() * w + images.len() - 1;
    let mut out = Tensor::ones(&[3, h, total_w]);
    for (k, img) in images.iter().enumerate() {
        let c = match *img.shape() {
            [c @ (1 | 3), ih, iw] if ih == h && iw == w => c,
            ref s => return Err(Error::dim(format!("tile_row: image {k} has shape {s:?}, expected [1|3, {h}, {w}]"))),
        };
        for ch in 0..3 {
            let src = if c == 3 { ch } else { 0 };
            for y in 0..h {
                for x in 0..w {
                    out.data_mut()[ch * h * total_w + y * total_w + k * (w + 1) + x] =
                        img.data()[src * h * w + y * w + x];
                }
            }
        }
    }
    Ok(out)
}

/// Stacks rows of equal width vertically with a 1-pixel gutter.
pub fn tile_column(rows: &[Tensor]) -> Result<Tensor> {
    let Some(first) = rows.first() else {
        return Err(Error::contract("tile_column needs at least one row"));
    };
    let w = first.shape()[2];
    let total_h = rows.iter().map(|r| r.shape()[1]).sum::<usize>() + rows.len() - 1;
    let mut out = Tensor::ones(&[3, total_h, w]);
    let mut y0 = 0;
    for r in rows {
        let [3, h, rw] = *r.shape() else {
            return Err(Error::dim(format!("tile_column: row shape {:?}", r.shape())));
        };
        if rw != w {
            return Err(Error::dim(format!("tile_column: row width {rw} vs {w}")));
        }
        for c in 0..3 {
            for y in 0..h {
                let dst = c * total_h * w + (y0 + y) * w;
                out.data_mut()[dst..dst + w].copy_from_slice(&r.data()[c * h * w + y * w..c * h * w + (y + 1) * w]);
            }
        }
        y0 += h + 1;
    }
    Ok(out)
}

#[cfg(all(test, not(feature = "f32")))]
mod tests {
    use super::*;

    #[test]
    fn quantized_round_trip_is_exact() {
        let img = Tensor::from_fn(&[3, 5, 7], |i| ((i * 37) % 256) as f64 / 255.0);
        let back = decode_pnm(&encode_pnm(&img).unwrap()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn gray_replicates_channels() {
        let mut bytes = b"P5\n# comment\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let t = decode_pnm(&bytes).unwrap();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn sixteen_bit_fixture() {
        // 2×2 gray, maxval 65535, big-endian samples
        let mut bytes = b"P5 2 2 65535\n".to_vec();
        for v in [0u16, 65535, 32768, 1] {
            bytes.extend(v.to_be_bytes());
        }
        let t = decode_pnm(&bytes).unwrap();
        let expect = [0.0, 1.0, 32768.0 / 65535.0, 1.0 / 65535.0];
        for c in 0..3 {
            assert_eq!(&t.data()[c * 4..c * 4 + 4], &expect);
        }
    }

    #[test]
    fn small_maxval_rescales() {
        let bytes = b"P6 1 1 15\n\x0f\x05\x00".to_vec();
        let t = decode_pnm(&bytes).unwrap();
        assert_eq!(t.data(), &[1.0, 5.0 / 15.0, 0.0]);
    }

    #[test]
    fn malformed_headers_report_offsets() {
        let err = |b: &[u8]| match decode_pnm(b) {
            Err(Error::Parse { offset, .. }) => offset,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(err(b"P3 1 1 255\n"), 0);
        assert_eq!(err(b"P6 x 1 255\n"), 3);
        assert_eq!(err(b"P6 1 1 70000\n\0\0\0"), 6);
        assert_eq!(err(b"P6 2 2 255\n\0\0\0"), 14);
    }

    #[test]
    fn grid_layout() {
        let a = Tensor::zeros(&[3, 2, 2]);
        let b = Tensor::zeros(&[1, 2, 2]);
        let row = tile_row(&[a, b]).unwrap();
        assert_eq!(row.shape(), &[3, 2, 5]);
        assert_eq!(row.data()[2], 1.0);
        let grid = tile_column(&[row.clone(), row]).unwrap();
        assert_eq!(grid.shape(), &[3, 5, 5]);
    }
}
