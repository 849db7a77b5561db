//! Row-major multi-channel rasters and their on-disk formats.
//!
//! Two formats are supported:
//!
//! * 8-bit PNG for RGB images and binary masks (255 = masked).
//! * `FRAS`, a portable float format: the ASCII magic `FRAS`, then `u32`
//!   little-endian width, height and channel count, then
//!   `width * height * channels` little-endian `f32` values in row-major,
//!   channel-interleaved order.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{GrayImage, ImageBuffer, ImageFormat, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

const FRAS_MAGIC: &[u8; 4] = b"FRAS";
const FRAS_HEADER: usize = 16;

/// A dense `height x width x channels` raster stored row-major with
/// interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T = f32> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Copy + Default> Raster<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, T::default())
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{}x{}x{} raster needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> T {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: T) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn ensure_same_shape<U>(&self, other: &Raster<U>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    pub fn map<U, F: Fn(T) -> U>(&self, f: F) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

impl Raster<f32> {
    pub fn to_f64(&self) -> Raster<f64> {
        self.map(f64::from)
    }
}

impl Raster<f64> {
    pub fn to_f32(&self) -> Raster<f32> {
        self.map(|v| v as f32)
    }
}

/// Writes a float raster in the `FRAS` format.
pub fn encode_fras(raster: &Raster<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAS_HEADER + raster.data.len() * 4);
    out.extend_from_slice(FRAS_MAGIC);
    for dim in [raster.width, raster.height, raster.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for v in &raster.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_fras(bytes: &[u8]) -> Result<Raster<f32>> {
    if bytes.len() < FRAS_HEADER || &bytes[..4] != FRAS_MAGIC {
        return Err(Error::FormatError("missing FRAS magic".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (width, height, channels) = (dim(0), dim(1), dim(2));
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::CorruptRaster("header dimensions overflow".into()))?;
    let payload = &bytes[FRAS_HEADER..];
    if payload.len() != expected * 4 {
        return Err(Error::CorruptRaster(format!(
            "header says {width}x{height}x{channels} ({expected} values) but payload holds {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Raster {
        width,
        height,
        channels,
        data,
    })
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encodes a 3-channel raster as 8-bit RGB PNG, or a 1-channel raster as
/// 8-bit grayscale PNG.
pub fn encode_png(raster: &Raster<f32>) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = raster.data.iter().map(|&v| quantize(v)).collect();
    let (w, h) = (raster.width as u32, raster.height as u32);
    let mut out = Cursor::new(Vec::new());
    let res = match raster.channels {
        3 => RgbImage::from_raw(w, h, bytes)
            .ok_or_else(|| Error::shape("rgb buffer size"))?
            .write_to(&mut out, ImageFormat::Png),
        1 => GrayImage::from_raw(w, h, bytes)
            .ok_or_else(|| Error::shape("gray buffer size"))?
            .write_to(&mut out, ImageFormat::Png),
        c => return Err(Error::shape(format!("PNG export needs 1 or 3 channels, got {c}"))),
    };
    res.map_err(|e| Error::FormatError(e.to_string()))?;
    Ok(out.into_inner())
}

/// Decodes a PNG into a float raster in `[0, 1]`. Grayscale images become
/// 1-channel rasters, everything else is converted to RGB.
pub fn decode_png(bytes: &[u8]) -> Result<Raster<f32>> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::FormatError(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = match img {
        image::DynamicImage::ImageLuma8(g) => (1, g.into_raw()),
        other => (3, other.to_rgb8().into_raw()),
    };
    Raster::from_vec(w, h, channels, raw.into_iter().map(|b| b as f32 / 255.0).collect())
}

/// Resamples a 1- or 3-channel image with values in `[0, 1]` to
/// `width x height` (the image crate clamps float pixels to that range).
pub fn resize(raster: &Raster<f32>, width: usize, height: usize, filter: FilterType) -> Result<Raster<f32>> {
    let (w, h) = (raster.width as u32, raster.height as u32);
    let (nw, nh) = (width as u32, height as u32);
    let data = match raster.channels {
        1 => {
            let buf: ImageBuffer<Luma<f32>, _> = ImageBuffer::from_raw(w, h, raster.data.clone())
                .ok_or_else(|| Error::shape("gray buffer size"))?;
            imageops::resize(&buf, nw, nh, filter).into_raw()
        }
        3 => {
            let buf: ImageBuffer<Rgb<f32>, _> = ImageBuffer::from_raw(w, h, raster.data.clone())
                .ok_or_else(|| Error::shape("rgb buffer size"))?;
            imageops::resize(&buf, nw, nh, filter).into_raw()
        }
        c => return Err(Error::shape(format!("resize needs 1 or 3 channels, got {c}"))),
    };
    Raster::from_vec(width, height, raster.channels, data)
}

/// Nearest-neighbour resampling for unbounded data such as depth.
pub fn resize_nearest<T: Copy + Default>(raster: &Raster<T>, width: usize, height: usize) -> Raster<T> {
    let mut out = Raster::new(width, height, raster.channels);
    for y in 0..height {
        let sy = ((y as f64 + 0.5) * raster.height as f64 / height as f64) as usize;
        for x in 0..width {
            let sx = ((x as f64 + 0.5) * raster.width as f64 / width as f64) as usize;
            for c in 0..raster.channels {
                out.set(x, y, c, raster.get(sx.min(raster.width - 1), sy.min(raster.height - 1), c));
            }
        }
    }
    out
}

/// Writes a raster, choosing the format by extension: `.png` for 8-bit,
/// anything else for `FRAS`.
pub fn save_raster(path: impl AsRef<Path>, raster: &Raster<f32>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_png(path) {
        encode_png(raster)?
    } else {
        encode_fras(raster)
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(FRAS_MAGIC) {
        decode_fras(&bytes)
    } else if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else {
        Err(Error::FormatError(format!(
            "{} is neither FRAS nor PNG",
            path.display()
        )))
    }
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_raster_round_trips() {
        let r = Raster::<f32>::new(2, 2, 1);
        assert_eq!(decode_fras(&encode_fras(&r)).unwrap(), r);
    }

    #[test]
    fn small_values_round_trip_bit_exact() {
        let r = Raster::from_vec(2, 2, 1, vec![0.0f32, 0.25, 0.5, 1.0]).unwrap();
        let back = decode_fras(&encode_fras(&r)).unwrap();
        for (a, b) in r.data.iter().zip(&back.data) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn random_raster_round_trips_through_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f32> = (0..64 * 64).map(|_| rng.random::<f32>() * 100.0 - 50.0).collect();
        let r = Raster::from_vec(64, 64, 1, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.fras");
        save_raster(&path, &r).unwrap();
        let back = load_raster(&path).unwrap();
        assert!(r.data.iter().zip(&back.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn bad_magic_is_format_error() {
        let mut bytes = encode_fras(&Raster::<f32>::new(2, 2, 1));
        bytes[0] = b'X';
        assert!(matches!(decode_fras(&bytes), Err(Error::FormatError(_))));
    }

    #[test]
    fn truncated_payload_is_corrupt() {
        let mut bytes = encode_fras(&Raster::<f32>::new(3, 3, 2));
        bytes.truncate(bytes.len() - 4);
        assert!(matches!(decode_fras(&bytes), Err(Error::CorruptRaster(_))));
    }

    #[test]
    fn png_round_trip_within_one_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f32> = (0..8 * 5 * 3).map(|_| rng.random::<f32>()).collect();
        let r = Raster::from_vec(8, 5, 3, data).unwrap();
        let back = decode_png(&encode_png(&r).unwrap()).unwrap();
        assert!(r.same_shape(&back));
        for (a, b) in r.data.iter().zip(&back.data) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn mask_png_stays_single_channel() {
        let r = Raster::from_vec(2, 1, 1, vec![1.0f32, 0.0]).unwrap();
        let back = decode_png(&encode_png(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
