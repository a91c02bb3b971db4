//! Binary PPM (P6) for images and PGM (P5) for label maps.
//!
//! Images in [−1, 1] are stored as `round((v + 1)·127.5)`, so a save/load
//! round trip moves each value by at most 1/255. Label maps store the class
//! index as the gray level.

use std::fs;
use std::path::Path;

use oasis_core::scene::LabelMap;
use oasis_core::tensor::Tensor;

use crate::error::{LabError, Result};

pub fn to_byte(v: f64) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn from_byte(b: u8) -> f64 {
    b as f64 / 127.5 - 1.0
}

fn header(magic: &str, w: usize, h: usize) -> Vec<u8> {
    format!("{magic}\n{w} {h}\n255\n").into_bytes()
}

/// Encodes a 3×H×W image.
pub fn encode_ppm(image: &Tensor) -> oasis_core::Result<Vec<u8>> {
    let (c, h, w) = image.chw()?;
    if c != 3 {
        return Err(oasis_core::Error::InvalidArgument {
            op: "ppm",
            reason: format!("expected 3 channels, got {c}"),
        });
    }
    let plane = h * w;
    let mut out = header("P6", w, h);
    out.reserve(3 * plane);
    for p in 0..plane {
        for ch in 0..3 {
            out.push(to_byte(image.data()[ch * plane + p]));
        }
    }
    Ok(out)
}

pub fn encode_pgm(label: &LabelMap) -> Vec<u8> {
    let mut out = header("P5", label.width(), label.height());
    out.extend_from_slice(label.labels());
    out
}

struct HeaderParser<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl HeaderParser<'_> {
    fn error(&self, reason: impl Into<String>) -> LabError {
        LabError::format(self.path, self.pos as u64, reason)
    }

    fn skip_space(&mut self) {
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
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| LabError::format(self.path, start as u64, format!("{what} out of range")))
    }
}

/// Parses a netpbm header with the given magic. Returns width, height and
/// the payload offset; the maximum value must be 255.
fn parse_header(bytes: &[u8], magic: &[u8; 2], path: &Path) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(LabError::format(
            path,
            0,
            format!("expected magic {}", String::from_utf8_lossy(magic)),
        ));
    }
    let mut p = HeaderParser {
        bytes,
        pos: 2,
        path,
    };
    let w = p.number("width")?;
    let h = p.number("height")?;
    p.skip_space();
    let maxval_at = p.pos;
    let maxval = p.number("maximum value")?;
    if maxval != 255 {
        return Err(LabError::format(
            path,
            maxval_at as u64,
            format!("maximum value {maxval}, only 255 is supported"),
        ));
    }
    if !p.bytes.get(p.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(p.error("expected one whitespace byte before the pixel data"));
    }
    if w == 0 || h == 0 {
        return Err(LabError::format(path, 2, "image has zero area"));
    }
    Ok((w, h, p.pos + 1))
}

fn payload<'a>(bytes: &'a [u8], start: usize, need: usize, path: &Path) -> Result<&'a [u8]> {
    let have = bytes.len() - start;
    if have < need {
        return Err(LabError::format(
            path,
            bytes.len() as u64,
            format!("truncated: {need} pixel bytes expected, {have} present"),
        ));
    }
    if have > need {
        return Err(LabError::format(
            path,
            (start + need) as u64,
            format!("{} trailing bytes", have - need),
        ));
    }
    Ok(&bytes[start..])
}

pub fn decode_ppm(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let (w, h, start) = parse_header(bytes, b"P6", path)?;
    let plane = w * h;
    let px = payload(bytes, start, 3 * plane, path)?;
    let mut out = Tensor::zeros(&[3, h, w]);
    let d = out.data_mut();
    for p in 0..plane {
        for ch in 0..3 {
            d[ch * plane + p] = from_byte(px[3 * p + ch]);
        }
    }
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<LabelMap> {
    let (w, h, start) = parse_header(bytes, b"P5", path)?;
    let px = payload(bytes, start, w * h, path)?;
    Ok(LabelMap::new(h, w, px.to_vec())?)
}

/// Colors each pixel with its class's palette entry.
pub fn colorize(label: &LabelMap, palette: &[[f64; 3]]) -> Result<Tensor> {
    let plane = label.height() * label.width();
    let mut out = Tensor::zeros(&[3, label.height(), label.width()]);
    let d = out.data_mut();
    for (p, &c) in label.labels().iter().enumerate() {
        let color = palette
            .get(c as usize)
            .ok_or_else(|| LabError::Usage(format!("class {c} has no palette entry")))?;
        for ch in 0..3 {
            d[ch * plane + p] = color[ch];
        }
    }
    Ok(out)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| LabError::io(path, e))
}

pub fn save_ppm(path: &Path, image: &Tensor) -> Result<()> {
    write_file(path, &encode_ppm(image)?)
}

pub fn load_ppm(path: &Path) -> Result<Tensor> {
    decode_ppm(&read_file(path)?, path)
}

pub fn save_pgm(path: &Path, label: &LabelMap) -> Result<()> {
    write_file(path, &encode_pgm(label))
}

pub fn load_pgm(path: &Path) -> Result<LabelMap> {
    decode_pgm(&read_file(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_payload() {
        // Channel-major 3×2×2: red, green / blue, white.
        let data = vec![
            1.0, -1.0, -1.0, 1.0, //
            -1.0, 1.0, -1.0, 1.0, //
            -1.0, -1.0, 1.0, 1.0,
        ];
        let img = Tensor::new(&[3, 2, 2], data).unwrap();
        let bytes = encode_ppm(&img).unwrap();
        let head = b"P6\n2 2\n255\n";
        assert_eq!(&bytes[..head.len()], head);
        assert_eq!(
            &bytes[head.len()..],
            &[255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255]
        );
        assert_eq!(decode_ppm(&bytes, Path::new("x")).unwrap(), img);
    }

    #[test]
    fn byte_mapping() {
        assert_eq!(to_byte(-1.0), 0);
        assert_eq!(to_byte(1.0), 255);
        assert_eq!(to_byte(0.0), 128);
        assert_eq!(to_byte(7.0), 255);
        for b in 0..=255u8 {
            assert_eq!(to_byte(from_byte(b)), b);
        }
    }

    #[test]
    fn errors_report_offsets() {
        let p = Path::new("f.ppm");
        let err = |b: &[u8]| match decode_ppm(b, p).unwrap_err() {
            LabError::Format { offset, .. } => offset,
            e => panic!("{e}"),
        };
        assert_eq!(err(b"P5\n1 1\n255\n\0"), 0);
        assert_eq!(err(b"P6\n1 1\n65535\n\0\0\0"), 7);
        assert_eq!(err(b"P6\n2 1\n255\n\0\0\0"), 14);
        assert_eq!(err(b"P6\n1 1\n255\n\0\0\0\0"), 14);
        assert_eq!(err(b"P6\nx"), 3);
        let comment = b"P6\n# made by hand\n1 1\n255\n\x10\x20\x30";
        assert_eq!(decode_ppm(comment, p).unwrap().shape(), &[3, 1, 1]);
    }

    #[test]
    fn labels_round_trip() {
        let l = LabelMap::new(2, 3, vec![0, 1, 2, 5, 4, 3]).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&l), Path::new("l")).unwrap(), l);
        let palette = [[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]];
        assert!(colorize(&l, &palette).is_err());
        let two = LabelMap::new(1, 2, vec![0, 1]).unwrap();
        assert_eq!(
            colorize(&two, &palette).unwrap().data(),
            &[-1.0, 1.0, -1.0, 1.0, -1.0, 1.0]
        );
    }
}
