//! Grayscale raster container, PGM/PNG file I/O and intensity histograms.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{HistairError, Result};

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HistairError::ZeroDimension { width, height });
        }
        if pixels.len() != width * height {
            return Err(HistairError::BufferSize {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Geometric center `((w-1)/2, (h-1)/2)` in pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            (self.width as f64 - 1.0) / 2.0,
            (self.height as f64 - 1.0) / 2.0,
        )
    }
}

/// 256-bin intensity histogram.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    counts: [u64; 256],
    total: u64,
}

impl Histogram {
    pub fn counts(&self) -> &[u64; 256] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Cumulative distribution, `cdf[v] = P(I <= v)`.
    pub fn cdf(&self) -> [f64; 256] {
        let mut cdf = [0.0; 256];
        let mut acc = 0u64;
        for (v, &c) in self.counts.iter().enumerate() {
            acc += c;
            cdf[v] = acc as f64 / self.total as f64;
        }
        cdf
    }
}

pub fn compute_histogram(img: &GrayImage) -> Histogram {
    let mut counts = [0u64; 256];
    for &p in img.pixels() {
        counts[p as usize] += 1;
    }
    Histogram {
        counts,
        total: img.pixels().len() as u64,
    }
}

/// Loads a binary PGM (P5) or PNG file. Color PNGs are reduced with
/// `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| HistairError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.starts_with(b"P5") {
        decode_pgm(&bytes).map_err(|e| match e {
            HistairError::Decode { reason, .. } => HistairError::Decode {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    } else {
        decode_png(&bytes, path)
    }
}

pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_pgm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let bytes = if is_pgm {
        encode_pgm(img)
    } else {
        encode_png(img).map_err(|reason| HistairError::Decode {
            path: path.to_path_buf(),
            reason,
        })?
    };
    fs::write(path, bytes).map_err(|source| HistairError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

pub fn encode_png(img: &GrayImage) -> std::result::Result<Vec<u8>, String> {
    let buf = image::GrayImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .ok_or_else(|| "buffer size mismatch".to_string())?;
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(out.into_inner())
}

fn decode_err(reason: impl Into<String>) -> HistairError {
    HistairError::Decode {
        path: Default::default(),
        reason: reason.into(),
    }
}

/// Parses a binary PGM. Sample values are returned as stored; no rescaling
/// is applied when maxval < 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if !bytes.starts_with(b"P5") {
        return Err(decode_err("missing P5 magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(decode_err("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(decode_err("malformed header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| decode_err("header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 255 {
        return Err(HistairError::UnsupportedBitDepth(format!(
            "PGM maxval {maxval}"
        )));
    }
    if width == 0 || height == 0 {
        return Err(HistairError::ZeroDimension { width, height });
    }
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(decode_err("missing whitespace after maxval"));
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| decode_err("dimensions overflow"))?;
    let data = bytes
        .get(pos..pos + n)
        .ok_or_else(|| decode_err(format!("expected {n} pixel bytes")))?;
    GrayImage::new(width, height, data.to_vec())
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
        HistairError::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }
    })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    if w == 0 || h == 0 {
        return Err(HistairError::ZeroDimension {
            width: w,
            height: h,
        });
    }
    let pixels = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.into_raw(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
            .collect(),
        other => {
            return Err(HistairError::UnsupportedBitDepth(format!(
                "{:?}",
                other.color()
            )))
        }
    };
    GrayImage::new(w, h, pixels)
}

#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}
