//! Image container, PGM/PNG I/O, bilinear resizing and grayscale conversion.
//!
//! Intensities are stored as `f64` in `[0, 1]`, row-major with interleaved
//! channels. Files are 8-bit: binary PGM (P5) for one channel, PNG for
//! grayscale or RGB. Alpha channels and other bit depths are rejected.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

/// Errors produced by image construction and I/O.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image data: {0}")]
    CorruptData(String),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense `height x width x channels` grid of intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Creates an image with every intensity set to `value`.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Image, ImageError> {
        check_dims(height, width, channels)?;
        if !(0.0..=1.0).contains(&value) {
            return Err(ImageError::CorruptData(format!("intensity {value} outside [0,1]")));
        }
        Ok(Image { height, width, channels, data: vec![value; height * width * channels] })
    }

    /// Wraps an existing buffer, validating its length and range.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Image, ImageError> {
        check_dims(height, width, channels)?;
        if data.len() != height * width * channels {
            return Err(ImageError::InvalidDimension(format!(
                "buffer of {} values for a {height}x{width}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImageError::CorruptData(format!("intensity {v} outside [0,1]")));
        }
        Ok(Image { height, width, channels, data })
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    /// Sets one intensity, clamping into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = value.clamp(0.0, 1.0);
    }

    /// Returns the interleaved channel values of one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.width + col) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Returns a copy with every value mapped by `f` and clamped into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
            ..self.clone()
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// 8-bit quantization used by every writer: `round(v * 255)`, half up.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<(), ImageError> {
    if height == 0 || width == 0 {
        return Err(ImageError::InvalidDimension(format!("{height}x{width}")));
    }
    if channels != 1 && channels != 3 {
        return Err(ImageError::InvalidDimension(format!("{channels} channels")));
    }
    Ok(())
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

/// Loads a binary PGM or an 8-bit grayscale/RGB PNG, detected by magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(ImageError::FileNotFound(path.display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    if bytes.starts_with(&PNG_MAGIC) {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(&bytes)
    } else {
        Err(ImageError::UnsupportedFormat(path.display().to_string()))
    }
}

/// Writes PGM for single-channel images and PNG for RGB images.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let bytes = match img.channels {
        1 => encode_pgm(img),
        _ => encode_png(img)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// File extension matching what [`save_image`] writes for `img`.
pub fn native_extension(img: &Image) -> &'static str {
    if img.channels == 1 {
        "pgm"
    } else {
        "png"
    }
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    assert_eq!(img.channels, 1, "PGM holds a single channel");
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(if img.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| ImageError::Io(std::io::Error::other(e)))?;
        writer
            .write_image_data(&img.to_bytes())
            .map_err(|e| ImageError::Io(std::io::Error::other(e)))?;
    }
    Ok(out)
}

fn decode_png(bytes: &[u8]) -> Result<Image, ImageError> {
    let corrupt = |e: png::DecodingError| ImageError::CorruptData(e.to_string());
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let (color, depth) = {
        let info = reader.info();
        (info.color_type, info.bit_depth)
    };
    if depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedFormat(format!("PNG bit depth {depth:?}")));
    }
    let channels = match color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(ImageError::UnsupportedFormat(format!("PNG color type {other:?}"))),
    };
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::CorruptData("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let stride = frame.line_size;
    let mut data = Vec::with_capacity(w * h * channels);
    for row in buf.chunks(stride).take(h) {
        data.extend(row[..w * channels].iter().map(|&b| b as f64 / 255.0));
    }
    Image::from_vec(h, w, channels, data)
}

fn decode_pgm(bytes: &[u8]) -> Result<Image, ImageError> {
    // Header: magic, width, height, maxval, separated by whitespace; '#' starts a comment.
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::CorruptData("truncated PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::CorruptData("bad PGM header value".into()))?;
    }
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!("PGM maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImageError::CorruptData("truncated PGM header".into()));
    }
    pos += 1;
    let raster = &bytes[pos..];
    let n = w.checked_mul(h).ok_or_else(|| ImageError::CorruptData("PGM dims overflow".into()))?;
    if raster.len() < n {
        return Err(ImageError::CorruptData(format!("PGM raster has {} of {n} bytes", raster.len())));
    }
    let data = raster[..n].iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_vec(h, w, 1, data).map_err(|e| ImageError::CorruptData(e.to_string()))
}

/// Bilinear resize with corner-aligned sampling.
///
/// Output pixel `i` samples source coordinate `i * (in - 1) / (out - 1)`, so
/// the corners of input and output coincide. A target dimension of one
/// samples the source centre.
pub fn resize_bilinear(img: &Image, out_h: usize, out_w: usize) -> Result<Image, ImageError> {
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::InvalidDimension(format!("target {out_h}x{out_w}")));
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }
    let ch = img.channels;
    let ys: Vec<(usize, usize, f64)> = (0..out_h).map(|i| sample_coord(i, img.height, out_h)).collect();
    let xs: Vec<(usize, usize, f64)> = (0..out_w).map(|j| sample_coord(j, img.width, out_w)).collect();
    let mut data = Vec::with_capacity(out_h * out_w * ch);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..ch {
                let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                let bot = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                data.push((top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
            }
        }
    }
    Ok(Image { height: out_h, width: out_w, channels: ch, data })
}

fn sample_coord(i: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
    let pos = if n_out == 1 {
        (n_in - 1) as f64 / 2.0
    } else {
        i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
    };
    let lo = (pos.floor() as usize).min(n_in - 1);
    let hi = (lo + 1).min(n_in - 1);
    (lo, hi, pos - lo as f64)
}

/// Rec. 601 luminance for RGB input; single-channel images are returned as is.
pub fn to_grayscale(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 1.0))
        .collect();
    Image { height: img.height, width: img.width, channels: 1, data }
}

/// Replicates a single channel into RGB; RGB input is returned as is.
pub fn to_rgb(img: &Image) -> Image {
    if img.channels == 3 {
        return img.clone();
    }
    let data = img.data.iter().flat_map(|&v| [v, v, v]).collect();
    Image { height: img.height, width: img.width, channels: 3, data }
}
