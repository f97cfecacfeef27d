//! 8-bit PNG load/save. Values map to bytes as `round(v * 255)` and back as `b / 255`.

use std::fs::{self, File};
use std::io::{BufWriter, Cursor, Write};
use std::path::{Path, PathBuf};

use advsmo_core::image::{Image, ImageError};
use png::{BitDepth, ColorType, Transformations};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}: file not found")]
    FileMissing(PathBuf),
    #[error("{path}: unsupported bit depth {depth} (only 8-bit PNG is read)")]
    UnsupportedBitDepth { path: PathBuf, depth: u8 },
    #[error("{path}: unsupported color type {color}")]
    UnsupportedColorType { path: PathBuf, color: String },
    #[error("{path}: corrupt PNG: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("PNG encoding failed: {0}")]
    Encode(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes an 8-bit gray, gray+alpha, RGB or RGBA PNG. Alpha is dropped.
pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Image, IoError> {
    let corrupt = |e: png::DecodingError| IoError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let info = reader.info();
    if info.bit_depth != BitDepth::Eight {
        return Err(IoError::UnsupportedBitDepth {
            path: path.to_path_buf(),
            depth: info.bit_depth as u8,
        });
    }
    let (stride, keep) = match info.color_type {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        other => {
            return Err(IoError::UnsupportedColorType {
                path: path.to_path_buf(),
                color: format!("{other:?}"),
            })
        }
    };
    let (w, h) = (info.width as usize, info.height as usize);
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| IoError::Corrupt {
        path: path.to_path_buf(),
        reason: "image too large".into(),
    })?];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    let data = &buf[..frame.buffer_size()];
    let bytes: Vec<u8> = data.chunks_exact(stride).flat_map(|px| px[..keep].iter().copied()).collect();
    Ok(Image::from_bytes(w, h, keep, &bytes)?)
}

pub fn load_image(path: &Path) -> Result<Image, IoError> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IoError::FileMissing(path.to_path_buf()),
        _ => io_err(path)(e),
    })?;
    decode_png(&bytes, path)
}

/// Encodes as an 8-bit PNG with fixed compression settings, so equal images give equal bytes.
pub fn encode_png(img: &Image) -> Result<Vec<u8>, IoError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        enc.set_color(if img.channels() == 1 { ColorType::Grayscale } else { ColorType::Rgb });
        enc.set_depth(BitDepth::Eight);
        enc.set_compression(png::Compression::Balanced);
        let mut writer = enc.write_header().map_err(|e| IoError::Encode(e.to_string()))?;
        writer
            .write_image_data(&img.to_bytes())
            .map_err(|e| IoError::Encode(e.to_string()))?;
        writer.finish().map_err(|e| IoError::Encode(e.to_string()))?;
    }
    Ok(out)
}

pub fn save_image(img: &Image, path: &Path) -> Result<(), IoError> {
    write_bytes(path, &encode_png(img)?)
}

/// Writes `bytes`, creating parent directories as needed.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(bytes).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}
