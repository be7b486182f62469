//! 8-bit raster images and PGM/PPM (optionally PNG) file I/O.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error("cannot encode {path}: {message}")]
    Encode { path: String, message: String },
    #[error("buffer of {len} bytes does not match {width}x{height}x{channels}")]
    InvalidBuffer { width: u32, height: u32, channels: u8, len: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    UnsupportedChannels(u8),
}

/// Row-major, channel-interleaved 8-bit image with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u8, fill: u8) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::UnsupportedChannels(channels));
        }
        let len = width as usize * height as usize * channels as usize;
        Ok(Image { width, height, channels, data: vec![fill; len] })
    }

    pub fn from_raw(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self, ImageError> {
        if channels != 1 && channels != 3 {
            return Err(ImageError::UnsupportedChannels(channels));
        }
        if data.len() != width as usize * height as usize * channels as usize {
            return Err(ImageError::InvalidBuffer { width, height, channels, len: data.len() });
        }
        Ok(Image { width, height, channels, data })
    }

    /// Single-channel image from a per-pixel function.
    pub fn from_fn_gray(width: u32, height: u32, f: impl Fn(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image { width, height, channels: 1, data }
    }

    pub fn from_fn_rgb(width: u32, height: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Image { width, height, channels: 3, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let o = self.offset(x, y);
        &self.data[o..o + self.channels as usize]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let o = self.offset(x, y);
        let c = self.channels as usize;
        &mut self.data[o..o + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Luma `round(0.299 r + 0.587 g + 0.114 b)`; single-channel images are
    /// returned unchanged.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect();
        Image { width: self.width, height: self.height, channels: 1, data }
    }

    /// Three-channel copy; gray samples are replicated.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Image { width: self.width, height: self.height, channels: 3, data }
    }

    /// Number of nonzero samples in a single-channel image.
    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Image, ImageError> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let reader = ImageReader::open(path)
            .map_err(|source| ImageError::Io { path: name.clone(), source })?
            .with_guessed_format()
            .map_err(|source| ImageError::Io { path: name.clone(), source })?;
        let decoded = reader
            .decode()
            .map_err(|e| ImageError::Decode { path: name.clone(), message: e.to_string() })?;
        let (width, height) = (decoded.width(), decoded.height());
        match decoded {
            DynamicImage::ImageLuma8(buf) => Image::from_raw(width, height, 1, buf.into_raw()),
            DynamicImage::ImageRgb8(buf) => Image::from_raw(width, height, 3, buf.into_raw()),
            other => Err(ImageError::Decode {
                path: name,
                message: format!("unsupported pixel format {:?} (8-bit gray or RGB required)", other.color()),
            }),
        }
    }

    /// Writes binary PGM (1 channel) or PPM (3 channels). With the `png`
    /// feature, a `.png` extension selects PNG instead.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let file = File::create(path).map_err(|source| ImageError::Io { path: name.clone(), source })?;
        let mut out = BufWriter::new(file);
        let color = if self.channels == 1 { ExtendedColorType::L8 } else { ExtendedColorType::Rgb8 };
        let encode_err = |e: image::ImageError| ImageError::Encode { path: name.clone(), message: e.to_string() };

        #[cfg(feature = "png")]
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            image::codecs::png::PngEncoder::new(&mut out)
                .write_image(&self.data, self.width, self.height, color)
                .map_err(encode_err)?;
            return out.flush().map_err(|source| ImageError::Io { path: name, source });
        }

        let subtype = if self.channels == 1 {
            PnmSubtype::Graymap(SampleEncoding::Binary)
        } else {
            PnmSubtype::Pixmap(SampleEncoding::Binary)
        };
        PnmEncoder::new(&mut out)
            .with_subtype(subtype)
            .write_image(&self.data, self.width, self.height, color)
            .map_err(encode_err)?;
        out.flush().map_err(|source| ImageError::Io { path: name, source })
    }
}

#[inline]
pub(crate) fn luma(r: u8, g: u8, b: u8) -> u8 {
    // integer form of round(0.299 r + 0.587 g + 0.114 b)
    ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000) as u8
}
