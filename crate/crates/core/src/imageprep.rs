//! Grayscale preprocessing: Otsu segmentation, crop and centering, 32×32
//! bilinear resize and flattening to a 1024-component vector.

use std::fs;
use std::path::Path;

use num_bigint::BigUint;

use crate::error::{Error, Result};

pub const SIDE: usize = 32;
pub const VECTOR_LEN: usize = SIDE * SIDE;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image dimensions must be positive".into()));
        }
        crate::error::check_dim(width * height, pixels.len())?;
        Ok(GrayImage { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        self.pixels[row * self.width + col] = value;
    }

    pub fn inverted(&self) -> GrayImage {
        GrayImage { pixels: self.pixels.iter().map(|v| 255 - v).collect(), ..self.clone() }
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut hist = [0u64; 256];
        for &v in &self.pixels {
            hist[v as usize] += 1;
        }
        hist
    }

    /// Parse a binary PGM (P5) with maxval 255.
    pub fn from_pgm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated PGM header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err(Error::Format("only binary PGM (P5) is supported".into()));
        }
        let mut number =
            |what: &str| -> Result<usize> { token()?.parse().map_err(|_| Error::Format(format!("bad PGM {what}"))) };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval != 255 {
            return Err(Error::Format(format!("PGM maxval {maxval} unsupported, expected 255")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let len = width * height;
        if bytes.len() < start + len {
            return Err(Error::Format("PGM raster is truncated".into()));
        }
        GrayImage::new(width, height, bytes[start..start + len].to_vec())
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes)
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// Otsu threshold; foreground is `pixel > t`. Ties go to the smallest `t`.
///
/// Between-class variance at `t` is proportional to
/// `(S0·N − S·n0)² / (n0·n1)`, which is compared exactly in integers.
pub fn otsu_threshold(img: &GrayImage) -> Result<u8> {
    otsu_from_histogram(&img.histogram())
}

pub fn otsu_from_histogram(hist: &[u64; 256]) -> Result<u8> {
    let total: u128 = hist.iter().map(|&h| h as u128).sum();
    let weighted: u128 = hist.iter().enumerate().map(|(v, &h)| v as u128 * h as u128).sum();
    let mut best: Option<(u8, Score)> = None;
    let (mut n0, mut s0) = (0u128, 0u128);
    for t in 0..255usize {
        n0 += hist[t] as u128;
        s0 += t as u128 * hist[t] as u128;
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let score = Score::new(s0, n0, weighted, total);
        match &best {
            Some((_, b)) if !score.greater_than(b) => {}
            _ => best = Some((t as u8, score)),
        }
    }
    best.map(|(t, _)| t).ok_or_else(|| Error::Degenerate("image has a single gray level".into()))
}

/// `num / den` with `num = (S0·N − S·n0)²` and `den = n0·n1`.
struct Score {
    diff: BigOrSmall,
    den: BigOrSmall,
}

enum BigOrSmall {
    Small(u128),
    Big(BigUint),
}

impl BigOrSmall {
    fn big(&self) -> BigUint {
        match self {
            BigOrSmall::Small(v) => BigUint::from(*v),
            BigOrSmall::Big(v) => v.clone(),
        }
    }
}

impl Score {
    fn new(s0: u128, n0: u128, s: u128, n: u128) -> Self {
        let diff = match (s0.checked_mul(n), s.checked_mul(n0)) {
            (Some(a), Some(b)) => BigOrSmall::Small(a.abs_diff(b)),
            _ => {
                let (a, b) = (BigUint::from(s0) * n, BigUint::from(s) * n0);
                BigOrSmall::Big(if a > b { a - b } else { b - a })
            }
        };
        let n1 = n - n0;
        let den = n0.checked_mul(n1).map_or_else(|| BigOrSmall::Big(BigUint::from(n0) * n1), BigOrSmall::Small);
        Score { diff, den }
    }

    /// `self.diff² · other.den > other.diff² · self.den`
    fn greater_than(&self, other: &Score) -> bool {
        if let (BigOrSmall::Small(d1), BigOrSmall::Small(q1), BigOrSmall::Small(d2), BigOrSmall::Small(q2)) =
            (&self.diff, &self.den, &other.diff, &other.den)
        {
            let lhs = d1.checked_mul(*d1).and_then(|v| v.checked_mul(*q2));
            let rhs = d2.checked_mul(*d2).and_then(|v| v.checked_mul(*q1));
            if let (Some(l), Some(r)) = (lhs, rhs) {
                return l > r;
            }
        }
        let (d1, d2) = (self.diff.big(), other.diff.big());
        &d1 * &d1 * other.den.big() > &d2 * &d2 * self.den.big()
    }
}

/// Crop to the bounding box of pixels above `threshold` and center the box in
/// a square canvas of side `max(width, height)` filled with 0.
pub fn crop_and_center(img: &GrayImage, threshold: u8) -> Result<GrayImage> {
    let (mut top, mut bottom, mut left, mut right) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..img.height {
        for c in 0..img.width {
            if img.get(r, c) > threshold {
                top = top.min(r);
                bottom = bottom.max(r);
                left = left.min(c);
                right = right.max(c);
            }
        }
    }
    if top == usize::MAX {
        return Err(Error::Degenerate(format!("no pixel above threshold {threshold}")));
    }
    let (box_h, box_w) = (bottom - top + 1, right - left + 1);
    let side = box_h.max(box_w);
    let (off_r, off_c) = ((side - box_h) / 2, (side - box_w) / 2);
    let mut out = GrayImage::filled(side, side, 0)?;
    for r in 0..box_h {
        for c in 0..box_w {
            out.set(off_r + r, off_c + c, img.get(top + r, left + c));
        }
    }
    Ok(out)
}

/// Bilinear resize of a square image to `SIDE × SIDE`, sampling at pixel
/// centers and rounding half up.
pub fn resize_to_32(img: &GrayImage) -> Result<GrayImage> {
    if img.width != img.height {
        return Err(Error::InvalidInput(format!("resize needs a square image, got {}x{}", img.width, img.height)));
    }
    let src = img.width;
    let scale = src as f64 / SIDE as f64;
    let coord = |d: usize| -> (usize, usize, f64) {
        let p = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
        let lo = p.floor() as usize;
        let hi = (lo + 1).min(src - 1);
        (lo, hi, p - lo as f64)
    };
    let mut out = Vec::with_capacity(VECTOR_LEN);
    for r in 0..SIDE {
        let (r0, r1, fr) = coord(r);
        for c in 0..SIDE {
            let (c0, c1, fc) = coord(c);
            let top = img.get(r0, c0) as f64 * (1.0 - fc) + img.get(r0, c1) as f64 * fc;
            let bottom = img.get(r1, c0) as f64 * (1.0 - fc) + img.get(r1, c1) as f64 * fc;
            let v = top * (1.0 - fr) + bottom * fr;
            out.push((v + 0.5).floor().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(SIDE, SIDE, out)
}

pub fn vectorize(img: &GrayImage) -> Result<Vec<f64>> {
    if img.width != SIDE || img.height != SIDE {
        return Err(Error::InvalidInput(format!("expected {SIDE}x{SIDE} image, got {}x{}", img.width, img.height)));
    }
    Ok(img.pixels.iter().map(|&v| v as f64 / 255.0).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Polarity {
    /// Foreground is brighter than the background.
    #[default]
    BrightForeground,
    /// Foreground is darker; the image is inverted first.
    DarkForeground,
}

#[derive(Debug, Clone)]
pub struct PipelineStages {
    pub threshold: u8,
    pub cropped: GrayImage,
    pub resized: GrayImage,
    pub vector: Vec<f64>,
}

pub fn preprocess_stages(img: &GrayImage, polarity: Polarity) -> Result<PipelineStages> {
    let oriented;
    let img = match polarity {
        Polarity::BrightForeground => img,
        Polarity::DarkForeground => {
            oriented = img.inverted();
            &oriented
        }
    };
    let threshold = otsu_threshold(img)?;
    let cropped = crop_and_center(img, threshold)?;
    let resized = resize_to_32(&cropped)?;
    let vector = vectorize(&resized)?;
    Ok(PipelineStages { threshold, cropped, resized, vector })
}

pub fn preprocess_image(img: &GrayImage, polarity: Polarity) -> Result<Vec<f64>> {
    Ok(preprocess_stages(img, polarity)?.vector)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_level_image_threshold() {
        let mut pixels = vec![10u8; 40];
        pixels.extend(vec![200u8; 60]);
        let img = GrayImage::new(10, 10, pixels).unwrap();
        // every t in [10, 199] separates perfectly with equal scores
        assert_eq!(otsu_threshold(&img).unwrap(), 10);
        assert!(otsu_threshold(&GrayImage::filled(4, 4, 77).unwrap()).is_err());
    }

    #[test]
    fn crop_single_pixel_and_rectangle() {
        let mut img = GrayImage::filled(5, 5, 0).unwrap();
        img.set(2, 3, 90);
        let out = crop_and_center(&img, 0).unwrap();
        assert_eq!((out.width(), out.height(), out.pixels()), (1, 1, &[90u8][..]));

        let mut img = GrayImage::filled(20, 20, 0).unwrap();
        for r in 5..9 {
            for c in 2..12 {
                img.set(r, c, 255);
            }
        }
        let out = crop_and_center(&img, 128).unwrap();
        assert_eq!((out.width(), out.height()), (10, 10));
        for r in 0..10 {
            let expected = if (3..=6).contains(&r) { 255 } else { 0 };
            assert!((0..10).all(|c| out.get(r, c) == expected), "row {r}");
        }
        assert!(crop_and_center(&GrayImage::filled(3, 3, 5).unwrap(), 5).is_err());
    }

    #[test]
    fn resize_identity_and_constant() {
        let pixels: Vec<u8> = (0..VECTOR_LEN).map(|i| (i * 7 % 256) as u8).collect();
        let img = GrayImage::new(32, 32, pixels).unwrap();
        assert_eq!(resize_to_32(&img).unwrap(), img);
        let flat = GrayImage::filled(64, 64, 133).unwrap();
        assert!(resize_to_32(&flat).unwrap().pixels().iter().all(|&v| v == 133));
        assert!(resize_to_32(&GrayImage::filled(3, 4, 0).unwrap()).is_err());
    }

    #[test]
    fn vectorize_values() {
        assert!(vectorize(&GrayImage::filled(32, 32, 0).unwrap()).unwrap().iter().all(|&v| v == 0.0));
        assert!(vectorize(&GrayImage::filled(32, 32, 255).unwrap()).unwrap().iter().all(|&v| v == 1.0));
        let mut img = GrayImage::filled(32, 32, 0).unwrap();
        img.set(1, 2, 51);
        let v = vectorize(&img).unwrap();
        assert!((v[34] - 0.2).abs() < 1e-15);
        assert!(vectorize(&GrayImage::filled(31, 31, 0).unwrap()).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::new(3, 2, vec![0, 1, 2, 253, 254, 255]).unwrap();
        assert_eq!(GrayImage::from_pgm(&img.to_pgm()).unwrap(), img);
        let with_comment = b"P5\n# made by hand\n2 1\n255\n\x07\x08";
        assert_eq!(GrayImage::from_pgm(with_comment).unwrap().pixels(), &[7, 8]);
        assert!(GrayImage::from_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(GrayImage::from_pgm(b"P5\n2 2\n255\n\x00").is_err());
        assert!(GrayImage::from_pgm(b"P5\n1 1\n65535\n\x00\x00").is_err());
    }

    #[test]
    fn dark_polarity_inverts() {
        let mut img = GrayImage::filled(8, 8, 220).unwrap();
        img.set(3, 4, 10);
        let bright = preprocess_stages(&img.inverted(), Polarity::BrightForeground).unwrap();
        let dark = preprocess_stages(&img, Polarity::DarkForeground).unwrap();
        assert_eq!(bright.vector, dark.vector);
        assert_eq!(dark.cropped.width(), 1);
    }

    #[test]
    fn large_histogram_uses_exact_fallback() {
        let mut hist = [0u64; 256];
        hist[3] = u64::MAX / 4;
        hist[250] = u64::MAX / 3;
        hist[100] = 1;
        let t = otsu_from_histogram(&hist).unwrap();
        assert!((3..250).contains(&(t as usize)));
    }
}
