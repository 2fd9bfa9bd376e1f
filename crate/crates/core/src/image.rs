//! Planar floating-point images with an explicit value-range tag.

use std::path::Path;

use crate::error::{ensure, Error, Result};

/// Which value range an [`Image`] lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ValueRange {
    /// Values in `[-1, 1]`, the network-facing representation.
    Normalized,
    /// Values in `[0, 255]`, the 8-bit file representation.
    Raw8,
}

impl ValueRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueRange::Normalized => (-1.0, 1.0),
            ValueRange::Raw8 => (0.0, 255.0),
        }
    }
}

/// A `channels x height x width` image stored channel-planar, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    range: ValueRange,
    data: Vec<f64>,
}

impl Image {
    /// Wraps planar data, checking dimensions, finiteness and the range tag.
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        range: ValueRange,
        data: Vec<f64>,
    ) -> Result<Self> {
        ensure!(
            channels == 1 || channels == 3,
            Contract,
            "image must have 1 or 3 channels, got {channels}"
        );
        ensure!(
            height > 0 && width > 0,
            Contract,
            "image dimensions must be positive, got {height}x{width}"
        );
        ensure!(
            data.len() == channels * height * width,
            Contract,
            "image buffer has {} values, expected {}",
            data.len(),
            channels * height * width
        );
        let (lo, hi) = range.bounds();
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < lo || **v > hi) {
            return Err(Error::Contract(format!(
                "image value {bad} is outside the {range:?} range [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            range,
            data,
        })
    }

    /// Builds an image from a per-pixel function `f(channel, y, x)`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        range: ValueRange,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, range, data)
    }

    /// Constant-valued image.
    pub fn filled(
        channels: usize,
        height: usize,
        width: usize,
        range: ValueRange,
        value: f64,
    ) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            range,
            vec![value; channels * height * width],
        )
    }

    /// Internal constructor for results of operations that provably stay in range.
    pub(crate) fn from_parts_unchecked(
        channels: usize,
        height: usize,
        width: usize,
        range: ValueRange,
        data: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(data.len(), channels * height * width);
        Self {
            channels,
            height,
            width,
            range,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    /// Maps raw 8-bit values to `[-1, 1]` (`v / 127.5 - 1`).
    pub fn to_normalized(&self) -> Image {
        match self.range {
            ValueRange::Normalized => self.clone(),
            ValueRange::Raw8 => Image::from_parts_unchecked(
                self.channels,
                self.height,
                self.width,
                ValueRange::Normalized,
                self.data
                    .iter()
                    .map(|v| (v / 127.5 - 1.0).clamp(-1.0, 1.0))
                    .collect(),
            ),
        }
    }

    /// Maps `[-1, 1]` values back to `[0, 255]` (no rounding).
    pub fn to_raw8(&self) -> Image {
        match self.range {
            ValueRange::Raw8 => self.clone(),
            ValueRange::Normalized => Image::from_parts_unchecked(
                self.channels,
                self.height,
                self.width,
                ValueRange::Raw8,
                self.data
                    .iter()
                    .map(|v| ((v + 1.0) * 127.5).clamp(0.0, 255.0))
                    .collect(),
            ),
        }
    }

    /// Quantizes to 8-bit interleaved bytes (rounding to nearest).
    pub fn to_bytes(&self) -> Vec<u8> {
        let raw = self.to_raw8();
        let n = self.height * self.width;
        let mut out = Vec::with_capacity(n * self.channels);
        for i in 0..n {
            for c in 0..self.channels {
                out.push(raw.data[c * n + i].round() as u8);
            }
        }
        out
    }

    /// Reads an 8-bit PNG (grayscale or RGB) as a raw-range image.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let dynimg = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let (channels, width, height, bytes) = match dynimg {
            image::DynamicImage::ImageLuma8(buf) => (1, buf.width(), buf.height(), buf.into_raw()),
            other => {
                let buf = other.to_rgb8();
                (3, buf.width(), buf.height(), buf.into_raw())
            }
        };
        let (w, h) = (width as usize, height as usize);
        let n = w * h;
        let mut data = vec![0.0; n * channels];
        for i in 0..n {
            for c in 0..channels {
                data[c * n + i] = bytes[i * channels + c] as f64;
            }
        }
        Image::new(channels, h, w, ValueRange::Raw8, data)
    }

    /// Writes the image as an 8-bit PNG (grayscale or RGB).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer(
            path,
            &self.to_bytes(),
            self.width as u32,
            self.height as u32,
            color,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Image::new(1, 1, 2, ValueRange::Normalized, vec![0.0, 1.5]).is_err());
        assert!(Image::new(1, 1, 2, ValueRange::Raw8, vec![0.0, 255.0]).is_ok());
        assert!(Image::new(1, 1, 1, ValueRange::Raw8, vec![f64::NAN]).is_err());
        assert!(Image::new(2, 1, 1, ValueRange::Raw8, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn raw_255_normalizes_to_one() {
        let img = Image::filled(3, 2, 2, ValueRange::Raw8, 255.0).unwrap();
        let n = img.to_normalized();
        assert!(n.data().iter().all(|&v| v == 1.0));
        assert_eq!(n.range(), ValueRange::Normalized);
        let back = n.to_raw8();
        assert!(back.data().iter().all(|&v| v == 255.0));
    }

    #[test]
    fn png_round_trip_preserves_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(3, 4, 5, ValueRange::Raw8, |c, y, x| {
            ((c * 70 + y * 13 + x * 7) % 256) as f64
        })
        .unwrap();
        let path = dir.path().join("a.png");
        img.save_png(&path).unwrap();
        let back = Image::load_png(&path).unwrap();
        assert_eq!(back, img);
    }
}
