//! Histogram-of-oriented-gradients descriptors.
//!
//! Pipeline: centred-difference gradients, per-cell orientation histograms
//! with linear vote splitting between the two nearest bin centres, then dense
//! overlapping blocks normalised with L2-Hys (L2, clip at 0.2, L2 again).
//! Votes are interpolated in orientation only, not spatially.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{to_grayscale, Image};

#[derive(Debug, Error, PartialEq)]
pub enum HogError {
    #[error("gradient input must be single-channel")]
    NotGrayscale,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("image too small: {0}")]
    ImageTooSmall(String),
    #[error("invalid HOG parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HogParams {
    /// Cell side in pixels.
    pub cell_size: usize,
    /// Block side in cells.
    pub block_size: usize,
    /// Block step in cells.
    pub block_stride: usize,
    pub n_bins: usize,
    /// Orientations over `[0, 360)` instead of `[0, 180)`.
    pub signed: bool,
}

impl Default for HogParams {
    fn default() -> Self {
        HogParams { cell_size: 4, block_size: 2, block_stride: 1, n_bins: 9, signed: false }
    }
}

impl HogParams {
    pub fn validate(&self) -> Result<(), HogError> {
        if self.cell_size == 0 || self.block_size == 0 {
            return Err(HogError::InvalidParams("cell_size and block_size must be >= 1".into()));
        }
        if self.block_stride == 0 || self.block_stride > self.block_size {
            return Err(HogError::InvalidParams("block_stride must lie in [1, block_size]".into()));
        }
        if self.n_bins < 2 {
            return Err(HogError::InvalidParams("n_bins must be >= 2".into()));
        }
        Ok(())
    }

    fn range_deg(&self) -> f64 {
        if self.signed {
            360.0
        } else {
            180.0
        }
    }

    /// Number of blocks along a dimension of `dim` pixels.
    pub fn blocks_along(&self, dim: usize) -> usize {
        let cells = dim / self.cell_size;
        if cells < self.block_size {
            0
        } else {
            (cells - self.block_size) / self.block_stride + 1
        }
    }

    /// Descriptor length for a `height x width` image.
    pub fn descriptor_len(&self, height: usize, width: usize) -> usize {
        self.blocks_along(height) * self.blocks_along(width) * self.block_size * self.block_size * self.n_bins
    }
}

/// A real-valued 2-D grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Grid {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Per-cell histograms, laid out `(cells_y, cells_x, n_bins)` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub cells_y: usize,
    pub cells_x: usize,
    pub n_bins: usize,
    pub data: Vec<f64>,
}

impl CellGrid {
    pub fn cell(&self, cy: usize, cx: usize) -> &[f64] {
        let start = (cy * self.cells_x + cx) * self.n_bins;
        &self.data[start..start + self.n_bins]
    }
}

/// Flat descriptor with layout `(blocks_y, blocks_x, block_size^2, n_bins)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HogDescriptor {
    pub values: Vec<f64>,
    pub blocks_y: usize,
    pub blocks_x: usize,
    pub block_size: usize,
    pub n_bins: usize,
}

impl HogDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block(&self, by: usize, bx: usize) -> &[f64] {
        let n = self.block_size * self.block_size * self.n_bins;
        let start = (by * self.blocks_x + bx) * n;
        &self.values[start..start + n]
    }
}

/// Horizontal and vertical gradients: `(I[x+1] - I[x-1]) / 2` inside the
/// image, one-sided differences on the border, zero along a unit dimension.
pub fn gradients(img: &Image) -> Result<(Grid, Grid), HogError> {
    if img.channels() != 1 {
        return Err(HogError::NotGrayscale);
    }
    let (h, w) = (img.height(), img.width());
    let px = |r: usize, c: usize| img.get(r, c, 0);
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            gx[r * w + c] = if w == 1 {
                0.0
            } else if c == 0 {
                px(r, 1) - px(r, 0)
            } else if c == w - 1 {
                px(r, w - 1) - px(r, w - 2)
            } else {
                (px(r, c + 1) - px(r, c - 1)) / 2.0
            };
            gy[r * w + c] = if h == 1 {
                0.0
            } else if r == 0 {
                px(1, c) - px(0, c)
            } else if r == h - 1 {
                px(h - 1, c) - px(h - 2, c)
            } else {
                (px(r + 1, c) - px(r - 1, c)) / 2.0
            };
        }
    }
    Ok((Grid { rows: h, cols: w, data: gx }, Grid { rows: h, cols: w, data: gy }))
}

/// Orientation in degrees folded into `[0, range)`.
#[inline]
fn orientation(gx: f64, gy: f64, range: f64) -> f64 {
    let mut theta = gy.atan2(gx).to_degrees();
    if theta < 0.0 {
        theta += 360.0;
    }
    if range < 360.0 {
        theta %= range;
    }
    if theta >= range {
        theta -= range;
    }
    theta
}

/// Orientation histograms per cell; each pixel's magnitude is split linearly
/// between the two nearest bin centres `(i + 0.5) * range / n_bins`, wrapping
/// from the last bin to the first.
pub fn cell_histograms(gx: &Grid, gy: &Grid, params: &HogParams) -> Result<CellGrid, HogError> {
    params.validate()?;
    if gx.rows != gy.rows || gx.cols != gy.cols {
        return Err(HogError::DimensionMismatch(format!(
            "gx {}x{} vs gy {}x{}",
            gx.rows, gx.cols, gy.rows, gy.cols
        )));
    }
    let cs = params.cell_size;
    if gx.rows % cs != 0 || gx.cols % cs != 0 {
        return Err(HogError::DimensionMismatch(format!(
            "{}x{} not divisible by cell size {cs}",
            gx.rows, gx.cols
        )));
    }
    let (cells_y, cells_x, nb) = (gx.rows / cs, gx.cols / cs, params.n_bins);
    let bin_width = params.range_deg() / nb as f64;
    let mut data = vec![0.0; cells_y * cells_x * nb];
    for r in 0..gx.rows {
        let row_base = (r / cs) * cells_x;
        for c in 0..gx.cols {
            let (dx, dy) = (gx.at(r, c), gy.at(r, c));
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let pos = orientation(dx, dy, params.range_deg()) / bin_width - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as i64).rem_euclid(nb as i64) as usize;
            let hi = (lo + 1) % nb;
            let hist = &mut data[(row_base + c / cs) * nb..][..nb];
            hist[lo] += mag * (1.0 - frac);
            hist[hi] += mag * frac;
        }
    }
    Ok(CellGrid { cells_y, cells_x, n_bins: nb, data })
}

const L2_EPS: f64 = 1e-12;
const HYS_CLIP: f64 = 0.2;

fn l2_normalize(v: &mut [f64]) {
    let norm = (v.iter().map(|x| x * x).sum::<f64>() + L2_EPS).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Dense block normalisation with L2-Hys.
pub fn block_normalize(cells: &CellGrid, params: &HogParams) -> Result<HogDescriptor, HogError> {
    params.validate()?;
    let bs = params.block_size;
    if cells.n_bins != params.n_bins {
        return Err(HogError::DimensionMismatch(format!("{} bins vs params {}", cells.n_bins, params.n_bins)));
    }
    if cells.cells_y < bs || cells.cells_x < bs {
        return Err(HogError::ImageTooSmall(format!(
            "{}x{} cells for {bs}x{bs}-cell blocks",
            cells.cells_y, cells.cells_x
        )));
    }
    let blocks_y = (cells.cells_y - bs) / params.block_stride + 1;
    let blocks_x = (cells.cells_x - bs) / params.block_stride + 1;
    let block_len = bs * bs * cells.n_bins;
    let mut values = Vec::with_capacity(blocks_y * blocks_x * block_len);
    let mut block = Vec::with_capacity(block_len);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            block.clear();
            for cy in 0..bs {
                for cx in 0..bs {
                    block.extend_from_slice(cells.cell(by * params.block_stride + cy, bx * params.block_stride + cx));
                }
            }
            l2_normalize(&mut block);
            block.iter_mut().for_each(|x| *x = x.min(HYS_CLIP));
            l2_normalize(&mut block);
            values.extend_from_slice(&block);
        }
    }
    Ok(HogDescriptor { values, blocks_y, blocks_x, block_size: bs, n_bins: cells.n_bins })
}

/// Full descriptor; RGB input is converted to luminance first.
pub fn hog_descriptor(img: &Image, params: &HogParams) -> Result<HogDescriptor, HogError> {
    params.validate()?;
    let gray = to_grayscale(img);
    let (gx, gy) = gradients(&gray)?;
    let cells = cell_histograms(&gx, &gy, params)?;
    block_normalize(&cells, params)
}

pub const HOG_FILE_MAGIC: [u8; 4] = *b"HOGD";
pub const HOG_FILE_VERSION: u32 = 1;

/// Serialises a descriptor: `"HOGD"`, version, length and bin count as
/// little-endian u32, then the values as little-endian f32.
pub fn encode_descriptor(desc: &HogDescriptor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * desc.len());
    out.extend_from_slice(&HOG_FILE_MAGIC);
    out.extend_from_slice(&HOG_FILE_VERSION.to_le_bytes());
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(&(desc.n_bins as u32).to_le_bytes());
    for &v in &desc.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Parses a descriptor file back into `(n_bins, values)`.
pub fn decode_descriptor(bytes: &[u8]) -> Result<(usize, Vec<f32>), HogError> {
    let bad = |m: &str| HogError::DimensionMismatch(m.to_string());
    if bytes.len() < 16 || bytes[..4] != HOG_FILE_MAGIC {
        return Err(bad("not a HOGD file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    if word(4) != HOG_FILE_VERSION as usize {
        return Err(bad("unsupported HOGD version"));
    }
    let (len, n_bins) = (word(8), word(12));
    if bytes.len() != 16 + 4 * len {
        return Err(bad("HOGD payload length mismatch"));
    }
    let values = bytes[16..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((n_bins, values))
}

pub fn write_descriptor(desc: &HogDescriptor, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_descriptor(desc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Image {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        Image::from_vec(h, w, 1, data).unwrap()
    }

    #[test]
    fn constant_image_has_zero_gradients() {
        let (gx, gy) = gradients(&gray(6, 6, |_, _| 0.3)).unwrap();
        assert!(gx.data.iter().chain(&gy.data).all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_ramp_gradient() {
        let w = 8;
        let (gx, gy) = gradients(&gray(4, w, |_, c| c as f64 / (w - 1) as f64)).unwrap();
        for r in 0..4 {
            for c in 1..w - 1 {
                assert!((gx.at(r, c) - 1.0 / (w - 1) as f64).abs() < 1e-15);
            }
        }
        assert!(gy.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_step_edge() {
        // rows 0..3 dark, rows 3..6 bright
        let img = gray(6, 6, |r, _| if r < 3 { 0.0 } else { 1.0 });
        let (gx, gy) = gradients(&img).unwrap();
        assert!(gx.data.iter().all(|&v| v == 0.0));
        let max = gy.data.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 0.5);
        for c in 0..6 {
            assert_eq!(gy.at(2, c), 0.5);
            assert_eq!(gy.at(3, c), 0.5);
            assert_eq!(gy.at(0, c), 0.0);
        }
    }

    #[test]
    fn rgb_input_is_rejected_by_gradients() {
        let img = Image::filled(4, 4, 3, 0.5).unwrap();
        assert_eq!(gradients(&img), Err(HogError::NotGrayscale));
    }

    fn single_pixel(theta_deg: f64, mag: f64) -> (Grid, Grid) {
        let (s, c) = theta_deg.to_radians().sin_cos();
        let mut gx = Grid { rows: 4, cols: 4, data: vec![0.0; 16] };
        let mut gy = gx.clone();
        gx.data[5] = mag * c;
        gy.data[5] = mag * s;
        (gx, gy)
    }

    #[test]
    fn soft_binning() {
        let p = HogParams::default();
        let (gx, gy) = single_pixel(10.0, 1.0);
        let h = cell_histograms(&gx, &gy, &p).unwrap();
        assert!((h.data[0] - 1.0).abs() < 1e-12);
        assert!(h.data[1..].iter().all(|v| v.abs() < 1e-12));

        let (gx, gy) = single_pixel(20.0, 2.0);
        let h = cell_histograms(&gx, &gy, &p).unwrap();
        assert!((h.data[0] - 1.0).abs() < 1e-12 && (h.data[1] - 1.0).abs() < 1e-12);

        // 175 deg wraps between the last bin (170) and the first (190 == 10)
        let (gx, gy) = single_pixel(175.0, 1.0);
        let h = cell_histograms(&gx, &gy, &p).unwrap();
        assert!((h.data[8] - 0.75).abs() < 1e-12 && (h.data[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_give_zero_histograms() {
        let g = Grid { rows: 8, cols: 8, data: vec![0.0; 64] };
        let h = cell_histograms(&g, &g, &HogParams::default()).unwrap();
        assert!(h.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn histogram_shape_errors() {
        let a = Grid { rows: 8, cols: 8, data: vec![0.0; 64] };
        let b = Grid { rows: 8, cols: 4, data: vec![0.0; 32] };
        assert!(matches!(cell_histograms(&a, &b, &HogParams::default()), Err(HogError::DimensionMismatch(_))));
        let odd = Grid { rows: 6, cols: 6, data: vec![0.0; 36] };
        assert!(matches!(cell_histograms(&odd, &odd, &HogParams::default()), Err(HogError::DimensionMismatch(_))));
    }

    #[test]
    fn l2_hys_of_a_unit_spike() {
        let p = HogParams::default();
        let mut data = vec![0.0; 36];
        data[0] = 1.0;
        let cells = CellGrid { cells_y: 2, cells_x: 2, n_bins: 9, data };
        let d = block_normalize(&cells, &p).unwrap();
        assert_eq!(d.len(), 36);
        assert!((d.values[0] - 1.0).abs() < 1e-9);
        assert!(d.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_cells_and_too_small() {
        let p = HogParams::default();
        let zero = CellGrid { cells_y: 3, cells_x: 3, n_bins: 9, data: vec![0.0; 81] };
        assert!(block_normalize(&zero, &p).unwrap().values.iter().all(|&v| v == 0.0));
        let tiny = CellGrid { cells_y: 1, cells_x: 3, n_bins: 9, data: vec![0.0; 27] };
        assert!(matches!(block_normalize(&tiny, &p), Err(HogError::ImageTooSmall(_))));
    }

    #[test]
    fn descriptor_lengths() {
        let p = HogParams::default();
        assert_eq!(p.descriptor_len(224, 224), 55 * 55 * 4 * 9);
        assert_eq!(p.descriptor_len(224, 224), 108_900);
        let d = hog_descriptor(&gray(8, 8, |r, c| ((r * 3 + c) % 5) as f64 / 4.0), &p).unwrap();
        assert_eq!(d.len(), 36);
        let flat = hog_descriptor(&Image::filled(224, 224, 3, 0.7).unwrap(), &p).unwrap();
        assert_eq!(flat.len(), 108_900);
        assert!(flat.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn params_validation() {
        assert!(HogParams::default().validate().is_ok());
        assert!(HogParams { block_stride: 3, ..Default::default() }.validate().is_err());
        assert!(HogParams { n_bins: 1, ..Default::default() }.validate().is_err());
        assert!(HogParams { cell_size: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn descriptor_file_round_trip() {
        let p = HogParams::default();
        let d = hog_descriptor(&gray(8, 12, |r, c| ((r + 2 * c) % 7) as f64 / 6.0), &p).unwrap();
        let bytes = encode_descriptor(&d);
        assert_eq!(&bytes[..4], b"HOGD");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, d.len());
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 9);
        let (bins, values) = decode_descriptor(&bytes).unwrap();
        assert_eq!(bins, 9);
        assert!(values.iter().zip(&d.values).all(|(a, b)| *a == *b as f32));
    }
}
