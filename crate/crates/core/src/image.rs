//! Image values in model range, pixel conversions and on-disk formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Smallest accepted side length.
pub const MIN_SIDE: usize = 16;

/// Magic bytes of the binary tensor container.
pub const INKT_MAGIC: &[u8; 4] = b"INKT";

/// Kind of structural input fed to the generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    LineArt,
    Greyscale,
}

impl InputMode {
    /// Greyscale inputs carry the same content as the colour target, so the
    /// perceptual content term is dropped.
    pub fn uses_content_loss(self) -> bool {
        matches!(self, InputMode::LineArt)
    }
}

impl std::str::FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line_art" | "lineart" | "line-art" => Ok(InputMode::LineArt),
            "greyscale" | "grayscale" => Ok(InputMode::Greyscale),
            other => Err(Error::InvalidInput(format!("unknown input mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for InputMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InputMode::LineArt => "line_art",
            InputMode::Greyscale => "greyscale",
        })
    }
}

/// An `height x width x channels` image with every value in `[-1, 1]`.
///
/// Sides are at least 16 and divisible by 4 so that two stride-2 stages
/// round-trip exactly. Channels are 1 (line art, greyscale) or 3 (RGB).
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidInput(format!(
            "channel count must be 1 or 3, got {channels}"
        )));
    }
    if height < MIN_SIDE || width < MIN_SIDE || height % 4 != 0 || width % 4 != 0 {
        return Err(Error::InvalidInput(format!(
            "image {height}x{width} must have sides >= {MIN_SIDE} divisible by 4"
        )));
    }
    Ok(())
}

impl<T: Scalar> ImageTensor<T> {
    /// Row-major HWC values; rejects anything outside `[-1, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        check_dims(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(v.abs() <= T::one())) {
            return Err(Error::InvalidInput(format!(
                "value {bad} outside model range [-1, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Like [`ImageTensor::new`] but clamps drifted values into range.
    pub fn from_clamped(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { T::zero() } else { v.max(-T::one()).min(T::one()) })
            .collect();
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// The all-black (-1) frame used when no previous frame exists.
    pub fn blank(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, -T::one())
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[T] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn same_size(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// `[1, c, h, w]` tensor view for the networks.
    pub fn to_tensor(&self) -> Tensor<T> {
        let (h, w, c) = (self.height, self.width, self.channels);
        let mut out = vec![T::zero(); h * w * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[(ch * h + y) * w + x] = self.data[(y * w + x) * c + ch];
                }
            }
        }
        Tensor::from_vec([1, c, h, w], out).expect("sized above")
    }

    /// Item `n` of a batched tensor, clamped into model range.
    pub fn from_tensor(t: &Tensor<T>, n: usize) -> Result<Self> {
        let [_, c, h, w] = t.shape();
        let item = t.item(n);
        let mut out = vec![T::zero(); h * w * c];
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[(y * w + x) * c + ch] = item[(ch * h + y) * w + x];
                }
            }
        }
        Self::from_clamped(h, w, c, out)
    }

    pub fn cast<U: Scalar>(&self) -> ImageTensor<U> {
        ImageTensor {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    pub fn mean_abs_diff(&self, other: &Self) -> T {
        let total: T = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        total / T::from_usize(self.data.len()).unwrap()
    }
}

/// Raw 8-bit pixels in HWC order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

/// `raw / 127.5 - 1`, elementwise.
pub fn to_model_range<T: Scalar>(raw: &RawImage) -> Result<ImageTensor<T>> {
    if raw.channels != 1 && raw.channels != 3 {
        return Err(Error::InvalidInput(format!(
            "channel count must be 1 or 3, got {}",
            raw.channels
        )));
    }
    let half = lit::<T>(127.5);
    let data = raw
        .data
        .iter()
        .map(|&v| T::from_u8(v).unwrap() / half - T::one())
        .collect();
    ImageTensor::new(raw.height, raw.width, raw.channels, data)
}

/// Single-value inverse of [`to_model_range`], rounded and clamped to 0..=255.
#[inline]
pub fn model_to_u8<T: Scalar>(v: T) -> u8 {
    let scaled = ((v + T::one()) * lit::<T>(127.5)).round();
    scaled.max(T::zero()).min(lit(255.0)).to_u8().unwrap_or(0)
}

pub fn from_model_range<T: Scalar>(img: &ImageTensor<T>) -> RawImage {
    RawImage {
        height: img.height,
        width: img.width,
        channels: img.channels,
        data: img.data.iter().map(|&v| model_to_u8(v)).collect(),
    }
}

/// BT.601 luminance of a colour image.
pub fn to_greyscale<T: Scalar>(img: &ImageTensor<T>) -> Result<ImageTensor<T>> {
    if img.channels != 3 {
        return Err(Error::InvalidInput(format!(
            "greyscale conversion needs 3 channels, got {}",
            img.channels
        )));
    }
    let [wr, wg, wb] = LUMA_WEIGHTS.map(lit::<T>);
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
        .collect();
    ImageTensor::from_clamped(img.height, img.width, 1, data)
}

/// Repeats a single channel three times.
pub fn grey_to_rgb<T: Scalar>(img: &ImageTensor<T>) -> Result<ImageTensor<T>> {
    if img.channels != 1 {
        return Err(Error::InvalidInput("expected a 1-channel image".into()));
    }
    let data = img.data.iter().flat_map(|&v| [v, v, v]).collect();
    ImageTensor::new(img.height, img.width, 3, data)
}

pub fn load_png_raw(path: &Path) -> Result<RawImage> {
    let dynamic = image::open(path).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    Ok(dynamic_to_raw(dynamic))
}

fn dynamic_to_raw(dynamic: image::DynamicImage) -> RawImage {
    let (width, height) = (dynamic.width() as usize, dynamic.height() as usize);
    match dynamic {
        image::DynamicImage::ImageLuma8(buf) => RawImage {
            height,
            width,
            channels: 1,
            data: buf.into_raw(),
        },
        other => RawImage {
            height,
            width,
            channels: 3,
            data: other.to_rgb8().into_raw(),
        },
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<RawImage> {
    let dynamic = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: "<memory>".into(),
            source,
        })?;
    Ok(dynamic_to_raw(dynamic))
}

pub fn load_png<T: Scalar>(path: &Path) -> Result<ImageTensor<T>> {
    to_model_range(&load_png_raw(path)?)
}

fn color_type(channels: usize) -> image::ExtendedColorType {
    if channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    }
}

pub fn encode_png<T: Scalar>(img: &ImageTensor<T>) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let raw = from_model_range(img);
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(
            &raw.data,
            raw.width as u32,
            raw.height as u32,
            color_type(raw.channels),
        )
        .map_err(|source| Error::Image {
            path: "<memory>".into(),
            source,
        })?;
    Ok(out)
}

pub fn save_png<T: Scalar>(img: &ImageTensor<T>, path: &Path) -> Result<()> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes the `INKT` container: magic, `u32` h, w, c, then `f32` values
/// row-major, all little-endian.
pub fn write_inkt<T: Scalar, W: Write>(img: &ImageTensor<T>, mut w: W) -> std::io::Result<()> {
    w.write_all(INKT_MAGIC)?;
    w.write_u32::<LittleEndian>(img.height as u32)?;
    w.write_u32::<LittleEndian>(img.width as u32)?;
    w.write_u32::<LittleEndian>(img.channels as u32)?;
    for v in &img.data {
        w.write_f32::<LittleEndian>(v.to_f32().unwrap())?;
    }
    Ok(())
}

pub fn read_inkt<T: Scalar, R: Read>(mut r: R) -> Result<ImageTensor<T>> {
    let fmt = |e: std::io::Error| Error::Format(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(fmt)?;
    if &magic != INKT_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let h = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
    let w = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
    let c = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
    check_dims(h, w, c)?;
    let mut values = vec![0f32; h * w * c];
    r.read_f32_into::<LittleEndian>(&mut values).map_err(fmt)?;
    ImageTensor::new(h, w, c, values.into_iter().map(|v| lit(v as f64)).collect())
}

pub fn save_inkt<T: Scalar>(img: &ImageTensor<T>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_inkt(img, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_inkt<T: Scalar>(path: &Path) -> Result<ImageTensor<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_inkt(BufReader::new(file))
}
