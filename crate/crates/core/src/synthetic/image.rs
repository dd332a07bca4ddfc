//! 8-bit grayscale images, binary PGM (P5) I/O and separable Gaussian blur.

use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major pixel values.
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, fill: u8) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn from_intensity(width: usize, height: usize, values: &[f64]) -> Self {
        let data = values
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_pgm())
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse_pgm(BufReader::new(file))
    }

    pub fn parse_pgm<R: BufRead>(mut r: R) -> Result<Self> {
        let mut fields = Vec::with_capacity(4);
        let mut line = String::new();
        while fields.len() < 4 {
            line.clear();
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Format("truncated PGM header".into()));
            }
            let content = line.split('#').next().unwrap_or("");
            fields.extend(content.split_whitespace().map(str::to_owned));
        }
        if fields[0] != "P5" {
            return Err(Error::Format(format!("unsupported PGM magic '{}'", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad PGM header field '{s}'")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
        }
        let mut data = vec![0u8; width * height];
        r.read_exact(&mut data)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

/// Separable Gaussian blur of a row-major float buffer; kernel truncated
/// at `⌈3σ⌉` and renormalized, edges clamped.
pub fn gaussian_blur(values: &mut [f64], width: usize, height: usize, sigma: f64, exec: Execution) {
    if !(sigma > 0.0) {
        return;
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let src = values.to_vec();
    exec.for_each_chunk_mut(values, width, |y, row| {
        let line = &src[y * width..(y + 1) * width];
        for (x, out) in row.iter_mut().enumerate() {
            *out = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let xx = (x as isize + k as isize - radius).clamp(0, width as isize - 1);
                    w * line[xx as usize]
                })
                .sum();
        }
    });

    let src = values.to_vec();
    exec.for_each_chunk_mut(values, width, |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            *out = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    let yy = (y as isize + k as isize - radius).clamp(0, height as isize - 1);
                    w * src[yy as usize * width + x]
                })
                .sum();
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let mut img = GrayImage::new(5, 3, 255);
        img.set(2, 1, 7);
        let bytes = img.to_pgm();
        let back = GrayImage::parse_pgm(&bytes[..]).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_rejects_ascii() {
        assert!(GrayImage::parse_pgm(&b"P2\n1 1\n255\n0\n"[..]).is_err());
    }

    #[test]
    fn blur_preserves_constant_and_mass() {
        let (w, h) = (40, 30);
        let mut flat = vec![100.0; w * h];
        gaussian_blur(&mut flat, w, h, 2.0, Execution::Sequential);
        assert!(flat.iter().all(|v| (v - 100.0).abs() < 1e-9));

        let mut spot = vec![0.0; w * h];
        spot[15 * w + 20] = 1.0;
        gaussian_blur(&mut spot, w, h, 2.0, Execution::Parallel);
        let total: f64 = spot.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let cx: f64 = spot.iter().enumerate().map(|(i, v)| (i % w) as f64 * v).sum();
        assert!((cx - 20.0).abs() < 1e-12);
    }
}
