//! PNG readers and writers for the raster types.
//!
//! Gray images are 8-bit single channel (color files are reduced to
//! luminance), label maps are 16-bit single channel, masks are 8-bit with
//! `{0, 255}`.

use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageBuffer, ImageReader, Luma};

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, GrayImage, LabelMap, Raster};

/// Integer BT.601 luma, rounded to nearest.
#[inline]
pub fn luminance(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}

fn decode(path: &Path) -> Result<DynamicImage> {
    if !path.exists() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let malformed = |reason: String| Error::MalformedImage {
        path: path.to_path_buf(),
        reason,
    };
    ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| malformed(e.to_string()))?
        .decode()
        .map_err(|e| malformed(e.to_string()))
}

fn color_name(img: &DynamicImage) -> String {
    format!("{:?}", img.color())
}

fn bit_depth(path: &Path, expected: &'static str, img: &DynamicImage) -> Error {
    Error::BitDepth {
        path: path.to_path_buf(),
        expected,
        found: color_name(img),
    }
}

/// Loads an 8-bit gray or RGB(A) PNG; color is reduced to luminance.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Raster::new(w, h, buf.into_raw()),
        DynamicImage::ImageLumaA8(buf) => Raster::new(w, h, buf.pixels().map(|p| p.0[0]).collect()),
        DynamicImage::ImageRgb8(buf) => Raster::new(
            w,
            h,
            buf.pixels()
                .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
                .collect(),
        ),
        DynamicImage::ImageRgba8(buf) => Raster::new(
            w,
            h,
            buf.pixels()
                .map(|p| luminance(p.0[0], p.0[1], p.0[2]))
                .collect(),
        ),
        other => Err(bit_depth(path, "8-bit gray or RGB", &other)),
    }
}

pub fn save_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    save_8bit(
        img.as_slice(),
        img.width(),
        img.height(),
        ExtendedColorType::L8,
        path.as_ref(),
    )
}

/// Loads an 8-bit image as separate channels: one for gray, three for RGB(A).
/// Alpha is dropped.
pub fn load_channels(path: impl AsRef<Path>) -> Result<Vec<GrayImage>> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let split = |pixels: Vec<[u8; 3]>| -> Result<Vec<GrayImage>> {
        (0..3)
            .map(|c| Raster::new(w, h, pixels.iter().map(|p| p[c]).collect()))
            .collect()
    };
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(vec![Raster::new(w, h, buf.into_raw())?]),
        DynamicImage::ImageLumaA8(buf) => Ok(vec![Raster::new(
            w,
            h,
            buf.pixels().map(|p| p.0[0]).collect(),
        )?]),
        DynamicImage::ImageRgb8(buf) => split(buf.pixels().map(|p| p.0).collect()),
        DynamicImage::ImageRgba8(buf) => {
            split(buf.pixels().map(|p| [p.0[0], p.0[1], p.0[2]]).collect())
        }
        other => Err(bit_depth(path, "8-bit gray or RGB", &other)),
    }
}

/// Writes one channel as gray or three channels as RGB.
pub fn save_channels(channels: &[GrayImage], path: impl AsRef<Path>) -> Result<()> {
    match channels {
        [gray] => save_gray(gray, path),
        [r, g, b] => {
            r.ensure_same_dims(g)?;
            r.ensure_same_dims(b)?;
            let mut data = Vec::with_capacity(r.len() * 3);
            for i in 0..r.len() {
                data.extend_from_slice(&[r.as_slice()[i], g.as_slice()[i], b.as_slice()[i]]);
            }
            save_8bit(
                &data,
                r.width(),
                r.height(),
                ExtendedColorType::Rgb8,
                path.as_ref(),
            )
        }
        other => Err(Error::InvalidRaster(format!(
            "expected 1 or 3 channels, got {}",
            other.len()
        ))),
    }
}

/// Loads a 16-bit single-channel label map. 8-bit gray files are widened.
pub fn load_labelmap(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma16(buf) => Raster::new(w, h, buf.into_raw()),
        DynamicImage::ImageLuma8(buf) => {
            Raster::new(w, h, buf.into_raw().into_iter().map(u16::from).collect())
        }
        other => Err(bit_depth(path, "16-bit single channel", &other)),
    }
}

pub fn save_labelmap(lm: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(
        lm.width() as u32,
        lm.height() as u32,
        lm.as_slice().to_vec(),
    )
    .expect("raster length matches its dimensions");
    buf.save(path.as_ref())
        .map_err(|e| write_error(path.as_ref(), e))
}

/// Loads an 8-bit mask; any non-zero pixel is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => {
            Raster::new(w, h, buf.into_raw().into_iter().map(|v| v != 0).collect())
        }
        other => Err(bit_depth(path, "8-bit single channel", &other)),
    }
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let data: Vec<u8> = mask
        .as_slice()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    save_8bit(
        &data,
        mask.width(),
        mask.height(),
        ExtendedColorType::L8,
        path.as_ref(),
    )
}

/// Loads any supported PNG as floating-point intensities in its native range.
/// Color files are reduced with the same luma weights as [`luminance`].
pub fn load_raw(path: impl AsRef<Path>) -> Result<Raster<f64>> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = |r: f64, g: f64, b: f64| (299.0 * r + 587.0 * g + 114.0 * b) / 1000.0;
    let data: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64).collect(),
        DynamicImage::ImageLuma16(buf) => buf.as_raw().iter().map(|&v| v as f64).collect(),
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f64).collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect(),
        DynamicImage::ImageRgb16(buf) => buf
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect(),
        DynamicImage::ImageRgba16(buf) => buf
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect(),
        other => return Err(bit_depth(path, "gray or RGB, 8 or 16 bit", other)),
    };
    Raster::new(w, h, data)
}

fn save_8bit(data: &[u8], w: usize, h: usize, color: ExtendedColorType, path: &Path) -> Result<()> {
    image::save_buffer_with_format(
        path,
        data,
        w as u32,
        h as u32,
        color,
        image::ImageFormat::Png,
    )
    .map_err(|e| write_error(path, e))
}

fn write_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::MalformedImage {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}
