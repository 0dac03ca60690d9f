//! RGB float images and their on-disk formats (PPM, PFM, 16-bit PGM).

use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("expected {expected} pixels, got {got}")]
    PixelCount { expected: usize, got: usize },
    #[error("malformed image file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Linear RGB image, row-major, top row first.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self, ImageError> {
        if pixels.len() != width * height {
            return Err(ImageError::PixelCount {
                expected: width * height,
                got: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn check_same_size(&self, other: &Image) -> Result<(), ImageError> {
        if self.width != other.width || self.height != other.height {
            return Err(ImageError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Largest absolute per-channel difference.
    pub fn max_abs_diff(&self, other: &Image) -> Result<f64, ImageError> {
        self.check_same_size(other)?;
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max))
    }

    /// Binary PPM (P6, maxval 255). Values are clamped to [0, 1] and rounded half-up.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend(p.map(to_u8));
        }
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        let (header, data) = parse_header(bytes, 4)?;
        if header[0] != "P6" {
            return Err(ImageError::Format(format!("expected P6, got {}", header[0])));
        }
        let (w, h, maxval) = (number(&header[1])?, number(&header[2])?, number(&header[3])?);
        if maxval != 255 {
            return Err(ImageError::Format(format!("unsupported maxval {maxval}")));
        }
        if data.len() < w * h * 3 {
            return Err(ImageError::Format("truncated pixel data".into()));
        }
        let pixels = data[..w * h * 3]
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]].map(|v| v as f64 / 255.0))
            .collect();
        Image::new(w, h, pixels)
    }

    /// Little-endian color PFM. Rows are stored bottom-up as the format requires.
    pub fn to_pfm(&self) -> Vec<u8> {
        let mut out = format!("PF\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        for row in self.pixels.chunks(self.width).rev() {
            for p in row {
                for c in p {
                    out.extend((*c as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_pfm(bytes: &[u8]) -> Result<Self, ImageError> {
        let (header, data) = parse_header(bytes, 4)?;
        if header[0] != "PF" {
            return Err(ImageError::Format(format!("expected PF, got {}", header[0])));
        }
        let (w, h) = (number(&header[1])?, number(&header[2])?);
        let scale: f64 = header[3]
            .parse()
            .map_err(|_| ImageError::Format(format!("bad scale '{}'", header[3])))?;
        if data.len() < w * h * 12 {
            return Err(ImageError::Format("truncated pixel data".into()));
        }
        let read = |b: &[u8]| {
            let arr = [b[0], b[1], b[2], b[3]];
            if scale < 0.0 {
                f32::from_le_bytes(arr) as f64
            } else {
                f32::from_be_bytes(arr) as f64
            }
        };
        let mut rows: Vec<Vec<[f64; 3]>> = data[..w * h * 12]
            .chunks_exact(w.max(1) * 12)
            .map(|row| {
                row.chunks_exact(12)
                    .map(|p| [read(&p[0..4]), read(&p[4..8]), read(&p[8..12])])
                    .collect()
            })
            .collect();
        rows.reverse();
        Image::new(w, h, rows.concat())
    }

    pub fn load(path: &Path) -> Result<Self, ImageError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.starts_with(b"PF") {
            Self::from_pfm(&bytes)
        } else {
            Self::from_ppm(&bytes)
        }
    }

    pub fn save_ppm(&self, path: &Path) -> Result<(), ImageError> {
        write_file(path, &self.to_ppm())
    }

    pub fn save_pfm(&self, path: &Path) -> Result<(), ImageError> {
        write_file(path, &self.to_pfm())
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Binary 16-bit PGM (P5, maxval 65535, big-endian), values saturated.
pub fn gray16_to_pgm(width: usize, height: usize, values: &[u32]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    for &v in values {
        out.extend((v.min(65535) as u16).to_be_bytes());
    }
    out
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ImageError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Splits off `n` whitespace-separated header tokens (with `#` comments) plus the
/// single whitespace byte that ends the header.
fn parse_header(bytes: &[u8], n: usize) -> Result<(Vec<String>, &[u8]), ImageError> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < n {
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
            return Err(ImageError::Format("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    if i >= bytes.len() {
        return Err(ImageError::Format("missing pixel data".into()));
    }
    Ok((tokens, &bytes[i + 1..]))
}

fn number(s: &str) -> Result<usize, ImageError> {
    s.parse()
        .map_err(|_| ImageError::Format(format!("bad header number '{s}'")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Image {
        Image::new(
            3,
            2,
            vec![
                [0.0, 0.5, 1.0],
                [0.25, 0.75, 0.1],
                [1.0, 1.0, 1.0],
                [0.0, 0.0, 0.0],
                [0.3, 0.6, 0.9],
                [0.002, 0.998, 0.5],
            ],
        )
        .unwrap()
    }

    #[test]
    fn ppm_round_half_up() {
        let img = Image::new(2, 1, vec![[0.5, 1.5, -0.2], [127.5 / 255.0, 0.0, 1.0]]).unwrap();
        let bytes = img.to_ppm();
        let header = b"P6\n2 1\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[128, 255, 0, 128, 0, 255]);
    }

    #[test]
    fn ppm_roundtrip_within_quantization() {
        let img = sample();
        let back = Image::from_ppm(&img.to_ppm()).unwrap();
        assert!(img.max_abs_diff(&back).unwrap() <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn pfm_roundtrip_exact_for_f32_values() {
        let img = sample();
        let back = Image::from_pfm(&img.to_pfm()).unwrap();
        assert_eq!((back.width, back.height), (3, 2));
        assert!(img.max_abs_diff(&back).unwrap() < 1e-7);
        assert_eq!(back.get(0, 1), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn header_comments_and_errors() {
        let bytes = b"P6 # comment\n1 1\n255\n\x01\x02\x03";
        let img = Image::from_ppm(bytes).unwrap();
        assert_eq!(img.pixels[0][2], 3.0 / 255.0);
        assert!(Image::from_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(Image::from_ppm(b"P6\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn pgm16() {
        let b = gray16_to_pgm(2, 1, &[3, 70000]);
        assert!(b.ends_with(&[0, 3, 255, 255]));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        sample().save_ppm(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap().width, 3);
        let path = dir.path().join("a.pfm");
        sample().save_pfm(&path).unwrap();
        assert_eq!(Image::load(&path).unwrap().height, 2);
    }
}
