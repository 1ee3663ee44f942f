//! PNG emission/reading and small JSON file helpers.
//!
//! PNG output is 8-bit with direct `round(255 * v)` quantization; encoding
//! settings are fixed so identical pixels give identical bytes.

use std::fs;
use std::io;
use std::path::Path;

use crate::tensor::Tensor;

#[derive(Debug)]
pub enum IoError {
    Io(io::Error),
    Png(String),
    Json(serde_json::Error),
    Format(String),
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Io(e) => write!(f, "io: {e}"),
            Self::Png(e) => write!(f, "png: {e}"),
            Self::Json(e) => write!(f, "json: {e}"),
            Self::Format(msg) => write!(f, "format: {msg}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<io::Error> for IoError {
    fn from(e: io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<serde_json::Error> for IoError {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, IoError>;

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write a `[3,H,W]` or `[1,H,W]` tensor in `[0,1]` as an 8-bit PNG.
pub fn write_png(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let shape = image.shape();
    if shape.len() != 3 || (shape[0] != 1 && shape[0] != 3) {
        return Err(IoError::Format(format!(
            "expected [1|3,H,W] image, got {shape:?}"
        )));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let d = image.data();
    let mut rows = Vec::with_capacity(3 * h * w);
    for i in 0..h * w {
        if c == 3 {
            rows.push(to_byte(d[i]));
            rows.push(to_byte(d[h * w + i]));
            rows.push(to_byte(d[2 * h * w + i]));
        } else {
            let g = to_byte(d[i]);
            rows.extend_from_slice(&[g, g, g]);
        }
    }
    let file = fs::File::create(path)?;
    let mut encoder = png::Encoder::new(io::BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder
        .write_header()
        .map_err(|e| IoError::Png(e.to_string()))?;
    writer
        .write_image_data(&rows)
        .map_err(|e| IoError::Png(e.to_string()))?;
    Ok(())
}

/// Read an 8-bit PNG into a `[3,H,W]` tensor in `[0,1]`.
pub fn read_png(path: &Path) -> Result<Tensor<f32>> {
    let file = fs::File::open(path)?;
    let decoder = png::Decoder::new(io::BufReader::new(file));
    let mut reader = decoder
        .read_info()
        .map_err(|e| IoError::Png(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| {
        IoError::Png("image dimensions overflow".into())
    })?];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| IoError::Png(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = match info.color_type {
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Grayscale => 1,
        other => {
            return Err(IoError::Png(format!("unsupported color type {other:?}")));
        }
    };
    let mut data = vec![0.0f32; 3 * h * w];
    for i in 0..h * w {
        for c in 0..3 {
            let src = if channels == 1 { 0 } else { c };
            data[c * h * w + i] = buf[i * channels + src] as f32 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], data).map_err(|e| IoError::Format(e.to_string()))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
