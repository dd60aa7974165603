//! Raster images: 8-bit storage form, unit-interval float working form, and
//! PNG load/save.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};

/// 8-bit image, row-major and channel-interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

/// Float image with every sample in `[0, 1]`, row-major and channel-interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

fn check_geometry(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidImage(format!("empty extent {height}x{width}")));
    }
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidImage(format!("{channels} channels (expected 1 or 3)")));
    }
    if len != height * width * channels {
        return Err(Error::InvalidImage(format!(
            "data length {len} does not match {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_geometry(height, width, channels, data.len())?;
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, pixel: &[u8]) -> Result<Self> {
        let data = pixel.iter().copied().cycle().take(height * width * pixel.len()).collect();
        Self::new(height, width, pixel.len(), data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [u8] {
        let i = (row * self.width + col) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Replicates a single gray channel into RGB; 3-channel images are cloned.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Image { height: self.height, width: self.width, channels: 3, data }
    }

    /// RGBA bytes with opaque alpha, the layout browsers expect for canvas
    /// pixel buffers.
    pub fn to_rgba(&self) -> Vec<u8> {
        let rgb = self.to_rgb();
        rgb.data.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
    }
}

impl FloatImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        check_geometry(height, width, channels, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("sample {v} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn filled(height: usize, width: usize, pixel: &[f32]) -> Result<Self> {
        let data = pixel.iter().copied().cycle().take(height * width * pixel.len()).collect();
        Self::new(height, width, pixel.len(), data)
    }

    pub(crate) fn from_parts_unchecked(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self { height, width, channels, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f32] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Copies the `height`x`width` block whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<FloatImage> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::GeometryMismatch(format!(
                "crop {height}x{width} at ({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(height * width * c);
        for row in top..top + height {
            let start = (row * self.width + left) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Ok(FloatImage { height, width, channels: c, data })
    }

    /// Replicates a single gray channel into RGB; 3-channel images are cloned.
    pub fn to_rgb(&self) -> FloatImage {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        FloatImage { height: self.height, width: self.width, channels: 3, data }
    }

    /// Quantizes back to 8-bit storage, rounding to nearest.
    pub fn to_u8(&self) -> Image {
        let data = self.data.iter().map(|&v| (v * 255.0).round() as u8).collect();
        Image { height: self.height, width: self.width, channels: self.channels, data }
    }
}

/// Divides every intensity by 255.
pub fn to_float(img: &Image) -> FloatImage {
    let data = img.data.iter().map(|&v| f32::from(v) / 255.0).collect();
    FloatImage { height: img.height, width: img.width, channels: img.channels, data }
}

const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

/// Rec.601 luminance. Single-channel input is returned unchanged.
pub fn to_grayscale(img: &FloatImage) -> FloatImage {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| (LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]).clamp(0.0, 1.0))
        .collect();
    FloatImage { height: img.height, width: img.width, channels: 1, data }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png_at(&bytes, path)
}

/// Decodes PNG bytes held in memory.
pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    decode_png_at(bytes, Path::new("<memory>"))
}

fn decode_png_at(bytes: &[u8], path: &Path) -> Result<Image> {
    let decode_err = |e: png::DecodingError| Error::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(decode_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Decode {
        path: path.to_path_buf(),
        message: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(decode_err)?;
    buf.truncate(info.buffer_size());

    let samples: Vec<u8> = match info.bit_depth {
        BitDepth::Eight => buf,
        // 16-bit samples are big-endian; 65535 / 257 = 255.
        BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|b| ((f64::from(u16::from_be_bytes([b[0], b[1]])) / 257.0).round()) as u8)
            .collect(),
        other => {
            return Err(Error::UnsupportedColor {
                path: path.to_path_buf(),
                kind: format!("bit depth {other:?}"),
            })
        }
    };

    let (height, width) = (info.height as usize, info.width as usize);
    let (channels, data) = match info.color_type {
        ColorType::Grayscale => (1, samples),
        ColorType::Rgb => (3, samples),
        ColorType::GrayscaleAlpha => (1, samples.chunks_exact(2).map(|p| p[0]).collect()),
        ColorType::Rgba => (
            3,
            samples.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        ),
        ColorType::Indexed => {
            return Err(Error::UnsupportedColor {
                path: path.to_path_buf(),
                kind: "indexed".into(),
            })
        }
    };
    Image::new(height, width, channels, data)
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png_at(img, path)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encodes to an 8-bit gray or RGB PNG in memory.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    encode_png_at(img, Path::new("<memory>"))
}

fn encode_png_at(img: &Image, path: &Path) -> Result<Vec<u8>> {
    let encode_err = |e: png::EncodingError| Error::Encode {
        path: PathBuf::from(path),
        message: e.to_string(),
    };
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        encoder.set_color(if img.channels == 1 { ColorType::Grayscale } else { ColorType::Rgb });
        encoder.set_depth(BitDepth::Eight);
        let mut writer = encoder.write_header().map_err(encode_err)?;
        writer.write_image_data(&img.data).map_err(encode_err)?;
        writer.finish().map_err(encode_err)?;
    }
    Ok(out)
}
