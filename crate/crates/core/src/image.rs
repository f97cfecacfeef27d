//! Image representation and pixel-scale conventions.
//!
//! Pixels are `f64` in `[0, 1]`, row-major, channels interleaved. Conversion to
//! and from 8-bit storage uses `v / 255` on the way in and round-half-up of
//! `v * 255` on the way out.

use alloc::vec::Vec;

use thiserror::Error;

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImageError {
    #[error("image dimensions must be non-zero, got {width}x{height}")]
    ZeroDimension { width: usize, height: usize },
    #[error("unsupported channel count {0} (expected 1 or 3)")]
    InvalidChannels(usize),
    #[error("pixel buffer has {actual} values, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("pixel {index} has value {value}, outside [0, 1]")]
    PixelOutOfRange { index: usize, value: f64 },
    #[error("image dimensions differ: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },
}

fn check_values(values: &[f64]) -> Result<(), ImageError> {
    match values
        .iter()
        .position(|v| !(0.0..=1.0).contains(v))
    {
        Some(index) => Err(ImageError::PixelOutOfRange {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Round-half-up quantization of a unit-scale value to a byte.
pub fn quantize_u8(v: f64) -> u8 {
    let scaled = libm::floor(v * 255.0 + 0.5);
    if scaled.is_nan() || scaled <= 0.0 {
        0
    } else if scaled >= 255.0 {
        255
    } else {
        scaled as u8
    }
}

/// A normalized pixel raster with 1 (gray) or 3 (RGB) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        pixels: Vec<f64>,
    ) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::InvalidChannels(channels));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(ImageError::LengthMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        check_values(&pixels)?;
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(
        width: usize,
        height: usize,
        channels: usize,
        value: f64,
    ) -> Result<Self, ImageError> {
        Self::new(width, height, channels, alloc::vec![value; width * height * channels])
    }

    /// Builds an image from `f(x, y, channel)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        let mut pixels = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    pixels.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, pixels)
    }

    /// Builds an image from 8-bit samples, mapping `b` to `b / 255`.
    pub fn from_bytes(
        width: usize,
        height: usize,
        channels: usize,
        bytes: &[u8],
    ) -> Result<Self, ImageError> {
        let pixels = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(width, height, channels, pixels)
    }

    /// Interleaves single-plane channels (1 or 3 of them) into an image.
    pub fn from_planes(planes: &[Channel]) -> Result<Self, ImageError> {
        let first = planes.first().ok_or(ImageError::InvalidChannels(0))?;
        let (width, height) = (first.width(), first.height());
        for p in planes {
            if p.width() != width || p.height() != height {
                return Err(ImageError::DimensionMismatch {
                    left: (width, height, 1),
                    right: (p.width(), p.height(), 1),
                });
            }
        }
        let channels = planes.len();
        let mut pixels = Vec::with_capacity(width * height * channels);
        for i in 0..width * height {
            for p in planes {
                pixels.push(p.values()[i]);
            }
        }
        Self::new(width, height, channels, pixels)
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

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// `(width, height, channels)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<(), ImageError> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(ImageError::DimensionMismatch {
                left: self.shape(),
                right: other.shape(),
            })
        }
    }

    /// Extracts channel `c` as a single plane.
    pub fn plane(&self, c: usize) -> Channel {
        assert!(c < self.channels, "channel {c} out of range");
        let values = self
            .pixels
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect();
        Channel {
            width: self.width,
            height: self.height,
            values,
        }
    }

    pub fn planes(&self) -> Vec<Channel> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Applies `f` to every plane and reassembles the result.
    pub(crate) fn map_planes<E>(
        &self,
        mut f: impl FnMut(&Channel) -> Result<Channel, E>,
    ) -> Result<Image, E>
    where
        E: From<ImageError>,
    {
        let planes = self
            .planes()
            .iter()
            .map(&mut f)
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Image::from_planes(&planes)?)
    }

    /// Round-half-up 8-bit samples, channel-interleaved.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize_u8(v)).collect()
    }

    /// The image as it reads back after an 8-bit save/load round trip.
    pub fn quantized(&self) -> Image {
        let pixels = self
            .pixels
            .iter()
            .map(|&v| f64::from(quantize_u8(v)) / 255.0)
            .collect();
        Image {
            pixels,
            ..*self
        }
    }
}

/// A single-plane view used by SSIM and the GLCM.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Channel {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height });
        }
        if values.len() != width * height {
            return Err(ImageError::LengthMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        check_values(&values)?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn into_image(self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            pixels: self.values,
        }
    }

    pub(crate) fn ensure_same_size(&self, other: &Channel) -> Result<(), ImageError> {
        if self.width == other.width && self.height == other.height {
            Ok(())
        } else {
            Err(ImageError::DimensionMismatch {
                left: (self.width, self.height, 1),
                right: (other.width, other.height, 1),
            })
        }
    }
}

/// Luminance plane: Rec. 601 weighting for RGB, a copy for gray.
pub fn to_luma(img: &Image) -> Channel {
    let values = match img.channels {
        1 => img.pixels.clone(),
        _ => img
            .pixels
            .chunks_exact(3)
            .map(|px| {
                let y = LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2];
                y.clamp(0.0, 1.0)
            })
            .collect(),
    };
    Channel {
        width: img.width,
        height: img.height,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_buffers() {
        assert_eq!(
            Image::new(0, 4, 1, vec![]),
            Err(ImageError::ZeroDimension { width: 0, height: 4 })
        );
        assert_eq!(
            Image::new(2, 2, 2, vec![0.0; 8]),
            Err(ImageError::InvalidChannels(2))
        );
        assert!(matches!(
            Image::new(2, 2, 1, vec![0.0; 3]),
            Err(ImageError::LengthMismatch { expected: 4, actual: 3 })
        ));
        assert!(matches!(
            Image::new(2, 2, 1, vec![0.0, 1.5, 0.0, 0.0]),
            Err(ImageError::PixelOutOfRange { index: 1, .. })
        ));
        assert!(matches!(
            Image::new(1, 1, 1, vec![f64::NAN]),
            Err(ImageError::PixelOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn byte_scale_is_exact() {
        let img = Image::from_bytes(2, 2, 1, &[0, 255, 128, 64]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(img.to_bytes(), vec![0, 255, 128, 64]);
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize_u8(1.0), 255);
        assert_eq!(quantize_u8(0.5), 128);
        assert_eq!(quantize_u8(0.9999), 255);
        assert_eq!(quantize_u8(0.0), 0);
        assert_eq!(quantize_u8(0.5 / 255.0), 1);
    }

    #[test]
    fn luma_of_gray_is_identity() {
        let img = Image::from_fn(3, 2, 1, |x, y, _| (x + y) as f64 / 4.0).unwrap();
        let luma = to_luma(&img);
        assert_eq!(luma.values(), img.pixels());
    }

    #[test]
    fn luma_coefficients() {
        let red = Image::from_fn(2, 2, 3, |_, _, c| if c == 0 { 1.0 } else { 0.0 }).unwrap();
        assert!(to_luma(&red).values().iter().all(|&v| v == 0.299));
        let white = Image::filled(2, 2, 3, 1.0).unwrap();
        assert!(to_luma(&white).values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn planes_round_trip() {
        let img = Image::from_fn(3, 2, 3, |x, y, c| ((x + 2 * y + c) % 5) as f64 / 4.0).unwrap();
        let back = Image::from_planes(&img.planes()).unwrap();
        assert_eq!(back, img);
        assert_eq!(img.plane(2).get(1, 1), img.get(1, 1, 2));
    }
}
