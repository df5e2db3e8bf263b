//! Binary PPM (P6, maxval 255) reading and writing.
//!
//! The byte-exact interchange format: byte `b` loads as `b/255`, and saving
//! maps `v` to `round(255 * clamp(v, 0, 1))`, so save∘load is byte-identical
//! and load∘save moves a pixel by at most `1/510`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Byte cursor that reports parse failures with their file offset.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::parse(self.pos, msg.into()))
    }

    /// Skips PPM whitespace and `#` comments (which run to end of line).
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' | 0x0b | 0x0c => self.pos += 1,
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => return,
            }
        }
    }

    /// Reads an unsigned decimal header field.
    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.fail(format!("expected {what}"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .map_or_else(|| Err(Error::parse(start, format!("invalid {what}"))), Ok)
    }
}

/// Loads a P6 PPM with maxval 255 into a `[height, width, 3]` tensor of
/// values in `[0,1]`.
pub fn load_ppm(path: impl AsRef<Path>) -> Result<DenseTensor> {
    let bytes = std::fs::read(path.as_ref())?;
    let mut cur = Cursor::new(&bytes);

    if !bytes.starts_with(b"P6") {
        return cur.fail("not a P6 ppm (bad magic)");
    }
    cur.pos = 2;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = {
        cur.skip_space();
        cur.pos
    };
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(
            maxval_at,
            format!("unsupported maxval {maxval}, expected 255"),
        ));
    }
    // exactly one whitespace byte separates the header from the payload
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return cur.fail("expected single whitespace before pixel data");
    }
    cur.pos += 1;

    if width == 0 || height == 0 {
        return cur.fail("image dimensions must be positive");
    }
    let need = width * height * 3;
    let have = bytes.len() - cur.pos;
    if have < need {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated pixel data: need {need} bytes, found {have}"),
        ));
    }
    let payload = &bytes[cur.pos..cur.pos + need];
    let data: Vec<f64> = payload.iter().map(|&b| b as f64 / 255.0).collect();
    DenseTensor::new(vec![height, width, 3], data)
}

/// Saves a `[height, width, 3]` tensor as P6 with maxval 255; values are
/// clamped to `[0,1]` and rounded to bytes.
pub fn save_ppm(t: &DenseTensor, path: impl AsRef<Path>) -> Result<()> {
    let shape = t.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::domain(format!(
            "ppm writer expects a [height, width, 3] tensor, got {shape:?}"
        )));
    }
    let (h, w) = (shape[0], shape[1]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(t.len());
    out.extend(
        t.data()
            .iter()
            .map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8),
    );
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("lowrank-shield-ppm-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn white_pixel_loads_as_one() {
        let path = tmpfile("white.ppm");
        std::fs::write(&path, b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
        let t = load_ppm(&path).unwrap();
        assert_eq!(t.shape(), &[1, 1, 3]);
        assert_eq!(t.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn byte_128_maps_to_its_fraction() {
        let path = tmpfile("gray.ppm");
        std::fs::write(&path, b"P6\n1 1\n255\n\x80\x80\x80").unwrap();
        let t = load_ppm(&path).unwrap();
        assert_eq!(t.data()[0], 128.0 / 255.0);
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let mut rng = seeded_rng(5);
        let t = DenseTensor::from_fn(vec![7, 5, 3], |_| rng.random_range(0.0..1.0)).unwrap();
        let p1 = tmpfile("rt1.ppm");
        let p2 = tmpfile("rt2.ppm");
        save_ppm(&t, &p1).unwrap();
        let loaded = load_ppm(&p1).unwrap();
        save_ppm(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        // loaded pixels stay within half a quantization step of the original
        for (a, b) in loaded.data().iter().zip(t.data()) {
            assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
        }
    }

    #[test]
    fn header_comments_and_whitespace_are_tolerated() {
        let path = tmpfile("comments.ppm");
        std::fs::write(&path, b"P6 # a comment\n# another\n 2\t1 \n255\n\x01\x02\x03\x04\x05\x06")
            .unwrap();
        let t = load_ppm(&path).unwrap();
        assert_eq!(t.shape(), &[1, 2, 3]);
        assert_eq!(t.data()[3], 4.0 / 255.0);
    }

    #[test]
    fn malformed_files_name_the_offset() {
        let cases: &[(&[u8], usize, &str)] = &[
            (b"P5\n1 1\n255\n\0\0\0", 0, "magic"),
            (b"P6\nx 1\n255\n\0\0\0", 3, "width"),
            (b"P6\n1 1\n65535\n\0\0\0", 7, "maxval"),
            (b"P6\n2 2\n255\n\0\0\0", 14, "truncated"),
        ];
        for (bytes, want_offset, hint) in cases {
            let path = tmpfile("bad.ppm");
            std::fs::write(&path, bytes).unwrap();
            match load_ppm(&path) {
                Err(Error::Parse { offset, msg }) => {
                    assert_eq!(offset, *want_offset, "case {hint}: {msg}");
                }
                other => panic!("case {hint}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn writer_rejects_non_image_tensors() {
        let t = DenseTensor::zeros(vec![4, 4]).unwrap();
        assert!(save_ppm(&t, tmpfile("bad-shape.ppm")).is_err());
    }
}
