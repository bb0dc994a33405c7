use serde::{Deserialize, Serialize};

use crate::image::Image;

/// Rank-3 `(channels, rows, cols)` array, row-major within each channel.
/// Flat feature vectors use the shape `(n, 1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: [usize; 3],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 3]) -> Tensor {
        Tensor { shape, data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: [usize; 3], data: Vec<f64>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape {shape:?} vs {} values", data.len());
        Tensor { shape, data }
    }

    /// Flat vector as an `(n, 1, 1)` tensor.
    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor { shape: [data.len(), 1, 1], data }
    }

    /// Network input: the ink density `1 - intensity` of each channel, so
    /// white background is zero and line work is positive.
    pub fn from_image(img: &Image) -> Tensor {
        let (h, w, ch) = (img.height(), img.width(), img.channels());
        let mut data = vec![0.0; ch * h * w];
        for (p, px) in img.data().chunks_exact(ch).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * h * w + p] = 1.0 - v;
            }
        }
        Tensor { shape: [ch, h, w], data }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn rows(&self) -> usize {
        self.shape[1]
    }

    pub fn cols(&self) -> usize {
        self.shape[2]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, c: usize, r: usize, col: usize) -> f64 {
        self.data[(c * self.shape[1] + r) * self.shape[2] + col]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, r: usize, col: usize) -> &mut f64 {
        &mut self.data[(c * self.shape[1] + r) * self.shape[2] + col]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape[1] * self.shape[2];
        &self.data[c * n..(c + 1) * n]
    }

    pub fn reshape(self, shape: [usize; 3]) -> Tensor {
        Tensor::from_vec(shape, self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
