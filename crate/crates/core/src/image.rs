//! Raster face samples and portable-anymap I/O.
//!
//! Intensities are stored as `f64` in `[0, 1]`, row-major, channels
//! interleaved. PGM (`P5`) and PPM (`P6`) with maxval 255 are supported.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Excursions outside `[0, 1]` smaller than this are rounding noise and are
/// snapped back without being counted as clamping.
pub const RANGE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FaceImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidImage(format!(
                "intensity {} at offset {pos} is outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Uniform image. Panics if `value` is outside `[0, 1]` or a dimension is zero.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self::new(width, height, channels, vec![value; width * height * channels])
            .expect("valid uniform image")
    }

    /// Builds an image from a per-pixel function, clamping into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &FaceImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Bilinear sample at a continuous pixel coordinate; coordinates outside
    /// the raster are clamped to the nearest edge pixel.
    pub fn sample_bilinear(&self, x: f64, y: f64, out: &mut [f64]) {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, max_x) };
        let y = if y.is_nan() { 0.0 } else { y.clamp(0.0, max_y) };
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        for (c, slot) in out.iter_mut().enumerate().take(self.channels) {
            let p00 = self.get(x0, y0, c);
            let p10 = self.get(x1, y0, c);
            let p01 = self.get(x0, y1, c);
            let p11 = self.get(x1, y1, c);
            let top = p00 + fx * (p10 - p00);
            let bottom = p01 + fx * (p11 - p01);
            *slot = top + fy * (bottom - top);
        }
    }

    pub fn max_abs_diff(&self, other: &FaceImage) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::IncompatibleImages(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// SHA-256 over the exact bit patterns of the pixel data and the shape.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.width as u64).to_le_bytes());
        hasher.update((self.height as u64).to_le_bytes());
        hasher.update((self.channels as u64).to_le_bytes());
        for v in &self.data {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub(crate) fn from_raw_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    /// 8-bit quantisation used by the PNM writer.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn encode_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_bytes());
        out
    }

    pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<Self> {
        let fail = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut cursor = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while cursor < bytes.len() && bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if cursor < bytes.len() && bytes[cursor] == b'#' {
                while cursor < bytes.len() && bytes[cursor] != b'\n' {
                    cursor += 1;
                }
                continue;
            }
            let start = cursor;
            while cursor < bytes.len() && !bytes[cursor].is_ascii_whitespace() {
                cursor += 1;
            }
            if start == cursor {
                return Err(fail(format!("truncated header at byte {cursor}")));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..cursor]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        cursor += 1;
        let channels = match tokens[0].as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(fail(format!("unsupported magic {other:?} at byte 0"))),
        };
        let parse = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| fail(format!("invalid {what} {s:?} in header")))
        };
        let width = parse(&tokens[1], "width")?;
        let height = parse(&tokens[2], "height")?;
        let maxval = parse(&tokens[3], "maxval")?;
        if maxval != 255 {
            return Err(fail(format!("maxval {maxval} unsupported, expected 255")));
        }
        let expected = width * height * channels;
        let raster = bytes.get(cursor..).unwrap_or_default();
        if raster.len() < expected {
            return Err(fail(format!(
                "raster truncated at byte {}: expected {expected} samples, found {}",
                cursor + raster.len(),
                raster.len()
            )));
        }
        let data = raster[..expected]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect();
        Self::new(width, height, channels, data).map_err(|e| fail(e.to_string()))
    }

    pub fn read_pnm(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_pnm(&bytes, path)
    }

    pub fn write_pnm(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode_pnm())
    }
}

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".to_string());
    let tmp = path.with_file_name(format!(".{file_name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(contents).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Clamps a computed intensity into range, reporting whether the excursion was
/// larger than rounding noise.
#[inline]
pub(crate) fn snap_unit(v: f64) -> (f64, bool) {
    if (0.0..=1.0).contains(&v) {
        (v, false)
    } else {
        let clamped = v.clamp(0.0, 1.0);
        (clamped, (v - clamped).abs() > RANGE_EPS)
    }
}
