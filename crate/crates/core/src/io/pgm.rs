use super::MAX_DIM;
use crate::error::{CiqError, Result};

/// Grayscale image with pixels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(CiqError::invalid(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }
}

struct Header<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos || self.pos - start > 9 {
            return Err(CiqError::parse(1, format!("invalid PGM {what}")));
        }
        let s = std::str::from_utf8(&self.data[start..self.pos]).expect("ascii digits");
        Ok(s.parse().expect("at most nine digits"))
    }
}

/// Binary `P5` PGM with 8-bit samples, normalized to `[0, 1]` by `maxval`.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(CiqError::parse(1, "not a binary PGM (missing P5 magic)"));
    }
    let mut h = Header { data: bytes, pos: 2 };
    let width = h.number("width")?;
    let height = h.number("height")?;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 || width > MAX_DIM || height > MAX_DIM {
        return Err(CiqError::parse(1, format!("image size {width}x{height} outside 1..={MAX_DIM}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(CiqError::parse(1, format!("maxval {maxval} unsupported (8-bit only)")));
    }
    match bytes.get(h.pos) {
        Some(c) if c.is_ascii_whitespace() => h.pos += 1,
        _ => return Err(CiqError::parse(1, "missing whitespace after PGM header")),
    }
    let n = width * height;
    let data = &bytes[h.pos..];
    if data.len() < n {
        return Err(CiqError::parse(1, format!("expected {n} pixel bytes, found {}", data.len())));
    }
    let m = maxval as f64;
    let pixels = data[..n].iter().map(|&b| (b as f64 / m).min(1.0)).collect();
    Ok(GrayImage { width, height, pixels })
}

/// Encodes as `P5` with `maxval = 255`, clamping pixels to `[0, 1]`.
pub fn write_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(
        image
            .pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_exact_on_byte_grid() {
        let px: Vec<f64> = (0..12).map(|i| (i * 20) as f64 / 255.0).collect();
        let img = GrayImage::new(4, 3, px).unwrap();
        assert_eq!(parse_pgm(&write_pgm(&img)).unwrap(), img);
    }

    #[test]
    fn header_comments() {
        let mut b = b"P5\n# made by hand\n2 1\n# max\n255\n".to_vec();
        b.extend([0u8, 255]);
        let img = parse_pgm(&b).unwrap();
        assert_eq!(img.pixels, vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_bad_headers() {
        for bad in [&b"P2\n1 1\n255\n\x00"[..], b"P5\n1 1\n65535\n\x00\x00", b"P5\n2 2\n255\n\x00", b"P5 0 1 255 ", b"P5"] {
            assert!(parse_pgm(bad).is_err());
        }
    }
}
