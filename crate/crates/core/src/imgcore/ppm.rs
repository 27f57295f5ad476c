//! Binary NetPBM (`P6`, maxval 255) codec.

use super::ImageRgb;
use crate::error::{Error, Result};
use std::path::Path;

/// Encode as `P6\n<w> <h>\n255\n` followed by the raw RGB payload.
pub fn ppm_write(img: &ImageRgb) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.data());
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Ppm {
            offset: self.pos,
            msg: msg.into(),
        }
    }

    /// Skip whitespace and `#` comments between header tokens.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.buf.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.buf.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_separators();
        let start = self.pos;
        while self.buf.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(match self.buf.get(self.pos) {
                None => self.err("unexpected end of data"),
                Some(_) => self.err(format!("expected {what}")),
            });
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Ppm {
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

pub fn ppm_read(bytes: &[u8]) -> Result<ImageRgb> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if bytes.len() < 2 {
        return Err(cur.err("unexpected end of data"));
    }
    if &bytes[..2] != b"P6" {
        return Err(cur.err("bad magic, expected P6"));
    }
    cur.pos = 2;
    if !bytes.get(2).is_some_and(|b| b.is_ascii_whitespace() || *b == b'#') {
        return Err(cur.err("expected whitespace after magic"));
    }
    cur.skip_separators();
    let dims_at = cur.pos;
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    if width == 0 || height == 0 {
        return Err(Error::Ppm {
            offset: dims_at,
            msg: format!("invalid dimensions {width}x{height}"),
        });
    }
    cur.skip_separators();
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::Ppm {
            offset: maxval_at,
            msg: format!("unsupported maxval {maxval}"),
        });
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        Some(_) => return Err(cur.err("expected single whitespace after maxval")),
        None => return Err(cur.err("unexpected end of data")),
    }
    let need = width as usize * height as usize * 3;
    let payload = &bytes[cur.pos..];
    if payload.len() < need {
        cur.pos = bytes.len();
        return Err(cur.err("unexpected end of data"));
    }
    if payload.len() > need {
        cur.pos += need;
        return Err(cur.err("trailing bytes after pixel data"));
    }
    ImageRgb::from_raw(width, height, payload.to_vec())
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ppm_read(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imgcore::Rng;
    use proptest::prelude::*;

    #[test]
    fn one_red_pixel() {
        let img = ImageRgb::filled(1, 1, [255, 0, 0]).unwrap();
        let bytes = ppm_write(&img);
        assert_eq!(bytes, b"P6\n1 1\n255\n\xff\x00\x00");
        assert_eq!(ppm_read(&bytes).unwrap(), img);
    }

    #[test]
    fn header_comments_are_skipped() {
        let bytes = b"P6 # made by hand\n2 1\n# another\n255\n\x01\x02\x03\x04\x05\x06";
        let img = ppm_read(bytes).unwrap();
        assert_eq!(img.pixel(1, 0), [4, 5, 6]);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = ppm_write(&ImageRgb::new(3, 3).unwrap());
        bytes.truncate(bytes.len() - 1);
        let err = ppm_read(&bytes).unwrap_err();
        assert!(err.to_string().contains("unexpected end of data"), "{err}");
    }

    #[test]
    fn malformed_headers_name_offsets() {
        let cases: [(&[u8], usize); 4] = [
            (b"P5\n1 1\n255\n\0", 0),
            (b"P6\nx 1\n255\n", 3),
            (b"P6\n0 1\n255\n", 3),
            (b"P6\n1 1\n65535\n\0\0\0\0\0\0", 7),
        ];
        for (bytes, offset) in cases {
            match ppm_read(bytes) {
                Err(Error::Ppm { offset: o, .. }) => assert_eq!(o, offset, "{bytes:?}"),
                other => panic!("expected ppm error, got {other:?}"),
            }
        }
    }

    proptest! {
        #[test]
        fn write_read_round_trip(seed in any::<u64>(), w in 1u32..20, h in 1u32..20) {
            let mut rng = Rng::new(seed);
            let data = (0..w * h * 3).map(|_| rng.below(256) as u8).collect();
            let img = ImageRgb::from_raw(w, h, data).unwrap();
            let bytes = ppm_write(&img);
            let back = ppm_read(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(ppm_write(&back), bytes);
        }
    }
}
