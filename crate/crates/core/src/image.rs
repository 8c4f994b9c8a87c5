//! Minimal RGB raster with binary PPM (P6) encoding.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("not a binary PPM: {0}")]
    BadHeader(String),
    #[error("PPM payload has {found} bytes, expected {expected}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid base64: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RasterImage({}x{})", self.width, self.height)
    }
}

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];

impl RasterImage {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let data = fill.repeat(width as usize * height as usize);
        RasterImage { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, c: Rgb) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&c);
    }

    /// Sets a pixel given signed coordinates; silently clips.
    pub fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
            self.set(x as u32, y as u32, c);
        }
    }

    /// Fills the half-open rectangle [x0, x1) × [y0, y1), clipped.
    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb) {
        let xa = x0.clamp(0, self.width as i64);
        let xb = x1.clamp(0, self.width as i64);
        let ya = y0.clamp(0, self.height as i64);
        let yb = y1.clamp(0, self.height as i64);
        if xa >= xb {
            return;
        }
        for y in ya..yb {
            let (a, b) = (self.offset(xa as u32, y as u32), self.offset(xb as u32 - 1, y as u32) + 3);
            for px in self.data[a..b].chunks_exact_mut(3) {
                px.copy_from_slice(&c);
            }
        }
    }

    pub fn fill_disc(&mut self, cx: i64, cy: i64, r: i64, c: Rgb) {
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(cx + dx, cy + dy, c);
                }
            }
        }
    }

    /// Outline of the inclusive box with the given stroke, drawn inward.
    pub fn stroke_box(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, stroke: i64, c: Rgb) {
        self.fill_rect(x0, y0, x1 + 1, y0 + stroke, c);
        self.fill_rect(x0, y1 + 1 - stroke, x1 + 1, y1 + 1, c);
        self.fill_rect(x0, y0, x0 + stroke, y1 + 1, c);
        self.fill_rect(x1 + 1 - stroke, y0, x1 + 1, y1 + 1, c);
    }

    /// Upward-pointing filled triangle with apex at (cx, top) and base width `w`.
    pub fn fill_triangle(&mut self, cx: i64, top: i64, w: i64, h: i64, c: Rgb) {
        for row in 0..h {
            let half = (w * (row + 1)) / (2 * h);
            self.fill_rect(cx - half, top + row, cx + half + 1, top + row + 1, c);
        }
    }

    pub fn flip_vertical(&self) -> RasterImage {
        let row = self.width as usize * 3;
        let mut data = Vec::with_capacity(self.data.len());
        for chunk in self.data.chunks_exact(row).rev() {
            data.extend_from_slice(chunk);
        }
        RasterImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn crop(&self, x: u32, y: u32, w: u32, h: u32) -> RasterImage {
        let mut out = RasterImage::new(w, h, WHITE);
        for yy in 0..h {
            for xx in 0..w {
                out.set(xx, yy, self.get(x + xx, y + yy));
            }
        }
        out
    }

    /// Nearest-neighbour upscale by an integer factor.
    pub fn upscale(&self, k: u32) -> RasterImage {
        let mut out = RasterImage::new(self.width * k, self.height * k, WHITE);
        for y in 0..out.height {
            for x in 0..out.width {
                out.set(x, y, self.get(x / k, y / k));
            }
        }
        out
    }

    /// Nearest-neighbour downsample by an integer factor (sample at block origin).
    pub fn downsample(&self, k: u32) -> RasterImage {
        if k <= 1 {
            return self.clone();
        }
        let (w, h) = ((self.width / k).max(1), (self.height / k).max(1));
        let mut out = RasterImage::new(w, h, WHITE);
        for y in 0..h {
            for x in 0..w {
                out.set(x, y, self.get(x * k, y * k));
            }
        }
        out
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<RasterImage, ImageError> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(ImageError::BadHeader("header ended early".into()));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P6" {
            return Err(ImageError::BadHeader(format!("magic {}", fields[0])));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| ImageError::BadHeader(format!("bad number {s}")));
        let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
        if maxval != 255 {
            return Err(ImageError::BadHeader(format!("maxval {maxval}")));
        }
        let expected = width as usize * height as usize * 3;
        let payload = bytes.get(pos..).unwrap_or(&[]);
        if payload.len() != expected {
            return Err(ImageError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        Ok(RasterImage {
            width,
            height,
            data: payload.to_vec(),
        })
    }

    pub fn to_b64(&self) -> String {
        STANDARD.encode(self.to_ppm())
    }

    pub fn from_b64(s: &str) -> Result<RasterImage, ImageError> {
        RasterImage::from_ppm(&STANDARD.decode(s.trim())?)
    }
}

/// Serde adapter: images travel as base64 PPM strings.
pub mod b64 {
    use super::RasterImage;
    use serde::{Deserialize, Deserializer, Serializer};
    use std::sync::Arc;

    pub fn serialize<S: Serializer>(img: &Arc<RasterImage>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&img.to_b64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arc<RasterImage>, D::Error> {
        let s = String::deserialize(d)?;
        RasterImage::from_b64(&s).map(Arc::new).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ppm_header_is_exact() {
        let img = RasterImage::new(2, 1, [1, 2, 3]);
        assert_eq!(img.to_ppm(), b"P6\n2 1\n255\n\x01\x02\x03\x01\x02\x03");
    }

    #[test]
    fn rejects_bad_ppm() {
        assert!(RasterImage::from_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(RasterImage::from_ppm(b"P6\n2 2\n255\n\0\0\0").is_err());
        assert!(RasterImage::from_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
    }

    #[test]
    fn reads_comments_in_header() {
        let img = RasterImage::from_ppm(b"P6 # hi\n1 1 255\n\x09\x08\x07").unwrap();
        assert_eq!(img.get(0, 0), [9, 8, 7]);
    }

    #[test]
    fn flip_twice_is_identity() {
        let mut img = RasterImage::new(3, 4, WHITE);
        img.set(1, 0, [9, 9, 9]);
        assert_eq!(img.flip_vertical().get(1, 3), [9, 9, 9]);
        assert_eq!(img.flip_vertical().flip_vertical(), img);
    }

    #[test]
    fn stroke_box_is_two_px() {
        let mut img = RasterImage::new(10, 10, WHITE);
        img.stroke_box(1, 1, 8, 8, 2, [0, 0, 255]);
        assert_eq!(img.get(1, 5), [0, 0, 255]);
        assert_eq!(img.get(2, 5), [0, 0, 255]);
        assert_eq!(img.get(3, 5), WHITE);
        assert_eq!(img.get(8, 8), [0, 0, 255]);
        assert_eq!(img.get(0, 0), WHITE);
    }

    proptest! {
        #[test]
        fn ppm_round_trip(w in 1u32..12, h in 1u32..12, seed in any::<u8>()) {
            let mut img = RasterImage::new(w, h, [seed, 0, 255 - seed]);
            img.set(w - 1, h - 1, [1, 2, 3]);
            let back = RasterImage::from_ppm(&img.to_ppm()).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(RasterImage::from_b64(&img.to_b64()).unwrap(), img);
        }
    }
}
