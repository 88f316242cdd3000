//! Image and coefficient containers plus the MSE-based quality metrics.

use crate::error::{Error, Result};

/// A real-valued gray-level image stored row-major.
///
/// Values are nominally in `0..=255` but are never clamped; quantization
/// only happens when writing a file.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "image data has {} entries, expected {}",
                data.len(),
                width * height
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("image pixel {i}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds an image from `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::zeros(width, height);
        for r in 0..height {
            for c in 0..width {
                img.data[r * width + c] = f(r, c);
            }
        }
        img
    }

    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(width, height)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
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

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn ensure_dims(&self, expected: (usize, usize)) -> Result<()> {
        if self.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.dims(),
            });
        }
        Ok(())
    }

    pub fn dot(&self, other: &Image) -> f64 {
        dot(&self.data, &other.data)
    }

    /// Squared Euclidean norm.
    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn scaled(&self, factor: f64) -> Image {
        Image::from_vec_unchecked(
            self.width,
            self.height,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// `self + factor * other`, in place.
    pub fn add_scaled(&mut self, factor: f64, other: &Image) {
        axpy(factor, &other.data, &mut self.data);
    }

    pub fn sub(&self, other: &Image) -> Image {
        Image::from_vec_unchecked(
            self.width,
            self.height,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

/// Redundant wavelet-domain representation: `3 * levels + 1` bands, each
/// the size of the image, stored band after band.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    width: usize,
    height: usize,
    levels: usize,
    data: Vec<f64>,
}

impl CoefficientVector {
    pub fn zeros(width: usize, height: usize, levels: usize) -> Self {
        Self {
            width,
            height,
            levels,
            data: vec![0.0; (3 * levels + 1) * width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, levels: usize, data: Vec<f64>) -> Result<Self> {
        let expected = (3 * levels + 1) * width * height;
        if data.len() != expected {
            return Err(Error::CoefficientLength {
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coefficient {i}")));
        }
        Ok(Self {
            width,
            height,
            levels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn num_bands(&self) -> usize {
        3 * self.levels + 1
    }

    pub fn band_len(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn band(&self, b: usize) -> &[f64] {
        let n = self.band_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn band_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.band_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn dot(&self, other: &CoefficientVector) -> f64 {
        dot(&self.data, &other.data)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn add_scaled(&mut self, factor: f64, other: &CoefficientVector) {
        axpy(factor, &other.data, &mut self.data);
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn axpy(factor: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += factor * xi;
    }
}

/// Total (unnormalized) squared error `‖a − b‖²`.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    b.ensure_dims(a.dims())?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum())
}

/// Peak SNR in dB against a 255 peak, using the per-pixel MSE.
/// Returns `f64::INFINITY` for identical images.
pub fn psnr(reference: &Image, estimate: &Image) -> Result<f64> {
    let per_pixel = mse(reference, estimate)? / reference.len() as f64;
    if per_pixel == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0f64 * 255.0 / per_pixel).log10())
}

/// Improvement in SNR (dB) of `estimate` over `degraded_reference`.
pub fn isnr(original: &Image, degraded_reference: &Image, estimate: &Image) -> Result<f64> {
    let reference_err = mse(original, degraded_reference)?;
    let err = mse(original, estimate)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (reference_err / err).log10())
}
