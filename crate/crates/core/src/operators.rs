//! The degradation operator `H`: periodic blur optionally followed by
//! decimation, with its adjoint, the minimum-norm least-squares (ML)
//! estimate and the orthogonal projector onto `range(Hᵀ)`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::image::{dot, Image};

/// Default relative cutoff on `|ĥ(ω)|²` below which a frequency counts as
/// part of the null space.
pub const DEFAULT_PINV_TOLERANCE: f64 = 1e-8;
/// Default relative residual for the `(HHᵀ)†` conjugate-gradient solves.
pub const DEFAULT_CG_TOLERANCE: f64 = 1e-12;

/// A 2D convolution kernel with odd side lengths; the center tap sits at
/// `(rows / 2, cols / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    rows: usize,
    cols: usize,
    taps: Vec<f64>,
}

impl BlurKernel {
    pub fn new(rows: usize, cols: usize, taps: Vec<f64>) -> Result<Self> {
        if rows % 2 == 0 || cols % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel sides must be odd, got {rows}x{cols}"
            )));
        }
        if taps.len() != rows * cols {
            return Err(Error::InvalidArgument(format!(
                "kernel has {} taps, expected {}",
                taps.len(),
                rows * cols
            )));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("kernel tap".into()));
        }
        Ok(Self { rows, cols, taps })
    }

    pub fn identity() -> Self {
        Self {
            rows: 1,
            cols: 1,
            taps: vec![1.0],
        }
    }

    /// Outer product `v vᵀ` of an odd-length 1D profile.
    pub fn separable(profile: &[f64]) -> Result<Self> {
        let n = profile.len();
        let taps = profile
            .iter()
            .flat_map(|a| profile.iter().map(move |b| a * b))
            .collect();
        Self::new(n, n, taps)
    }

    /// `1 / (1 + x₁² + x₂²)` on `-half..=half`, normalized to unit sum.
    pub fn inverse_quadratic(half: usize) -> Self {
        let side = 2 * half + 1;
        let h = half as f64;
        let mut taps = Vec::with_capacity(side * side);
        for r in 0..side {
            for c in 0..side {
                let x1 = r as f64 - h;
                let x2 = c as f64 - h;
                taps.push(1.0 / (1.0 + x1 * x1 + x2 * x2));
            }
        }
        Self {
            rows: side,
            cols: side,
            taps,
        }
        .normalized()
    }

    /// ker1: 15x15 inverse-quadratic blur.
    pub fn ker1() -> Self {
        Self::inverse_quadratic(7)
    }

    /// ker2: 9x9 uniform blur, every tap 1/81.
    pub fn ker2() -> Self {
        Self {
            rows: 9,
            cols: 9,
            taps: vec![1.0 / 81.0; 81],
        }
    }

    /// ker3: separable binomial `[1, 4, 6, 4, 1]`, normalized to unit gain.
    pub fn ker3() -> Self {
        Self::separable(&[1.0, 4.0, 6.0, 4.0, 1.0])
            .expect("odd profile")
            .normalized()
    }

    /// ker4: separable `[1, 2, 1] / 4`.
    pub fn ker4() -> Self {
        Self::separable(&[0.25, 0.5, 0.25]).expect("odd profile")
    }

    /// ker5: separable `[1, 1] / 2`, padded to `[0, 1, 1] / 2` so the
    /// kernel has a center tap (taps at offsets 0 and +1).
    pub fn ker5() -> Self {
        Self::separable(&[0.0, 0.5, 0.5]).expect("odd profile")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn center(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// Rescale so the taps sum to one.
    pub fn normalized(mut self) -> Self {
        let s = self.sum();
        if s != 0.0 {
            self.taps.iter_mut().for_each(|t| *t /= s);
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// `HᵀH` is singular (null-space frequencies, or a wide operator).
    pub rank_deficient: bool,
    /// Condition number of `H` on the full input space; infinite when rank deficient.
    pub effective_condition: f64,
    /// Condition number of `H` restricted to `range(Hᵀ)`.
    pub range_condition: f64,
}

/// Row-then-column 2D FFT on a row-major complex grid.
#[derive(Clone)]
struct Fft2 {
    width: usize,
    height: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            width,
            height,
            row_fwd: planner.plan_fft_forward(width),
            row_inv: planner.plan_fft_inverse(width),
            col_fwd: planner.plan_fft_forward(height),
            col_inv: planner.plan_fft_inverse(height),
        }
    }

    fn forward(&self, buf: &mut [Complex64]) {
        self.process(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalized inverse; callers divide by `width * height`.
    fn inverse(&self, buf: &mut [Complex64]) {
        self.process(buf, &self.row_inv, &self.col_inv);
    }

    fn process(&self, buf: &mut [Complex64], rows: &Arc<dyn Fft<f64>>, cols: &Arc<dyn Fft<f64>>) {
        let (w, h) = (self.width, self.height);
        for row in buf.chunks_exact_mut(w) {
            rows.process(row);
        }
        let mut column = vec![Complex64::default(); h];
        for c in 0..w {
            for r in 0..h {
                column[r] = buf[r * w + c];
            }
            cols.process(&mut column);
            for r in 0..h {
                buf[r * w + c] = column[r];
            }
        }
    }

    fn to_spectrum(&self, img: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = img.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    fn to_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut buf);
        let scale = 1.0 / (self.width * self.height) as f64;
        buf.into_iter().map(|z| z.re * scale).collect()
    }
}

/// `H = S B`: periodic blur `B` (diagonal in the 2D DFT) followed by
/// stride-`d` subsampling `S` keeping grid positions `0, d, 2d, …`.
#[derive(Clone)]
pub struct DegradationOperator {
    kernel: BlurKernel,
    decimation: usize,
    input_dims: (usize, usize),
    output_dims: (usize, usize),
    transfer: Vec<Complex64>,
    /// `|ĥ(ω)|² >= pinv_tolerance · max |ĥ|²`, per frequency.
    passband: Vec<bool>,
    pinv_tolerance: f64,
    cg_tolerance: f64,
    fft: Fft2,
}

impl fmt::Debug for DegradationOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DegradationOperator")
            .field("kernel", &(self.kernel.rows, self.kernel.cols))
            .field("decimation", &self.decimation)
            .field("input_dims", &self.input_dims)
            .field("output_dims", &self.output_dims)
            .field("pinv_tolerance", &self.pinv_tolerance)
            .finish()
    }
}

impl DegradationOperator {
    /// Pure blur on a `width x height` grid.
    pub fn blur(kernel: BlurKernel, width: usize, height: usize) -> Result<Self> {
        Self::new(kernel, width, height, 1)
    }

    pub fn new(kernel: BlurKernel, width: usize, height: usize, decimation: usize) -> Result<Self> {
        Self::with_tolerance(kernel, width, height, decimation, DEFAULT_PINV_TOLERANCE)
    }

    pub fn with_tolerance(
        kernel: BlurKernel,
        width: usize,
        height: usize,
        decimation: usize,
        pinv_tolerance: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if decimation == 0 || width % decimation != 0 || height % decimation != 0 {
            return Err(Error::InvalidArgument(format!(
                "decimation {decimation} must divide the grid {width}x{height}"
            )));
        }
        if !(pinv_tolerance > 0.0 && pinv_tolerance < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "pinv tolerance must lie in (0, 1), got {pinv_tolerance}"
            )));
        }
        let fft = Fft2::new(width, height);

        // Zero-pad with the kernel center wrapped to the origin.
        let mut padded = vec![0.0; width * height];
        let (cr, cc) = kernel.center();
        for r in 0..kernel.rows {
            for c in 0..kernel.cols {
                let dr = (r as isize - cr as isize).rem_euclid(height as isize) as usize;
                let dc = (c as isize - cc as isize).rem_euclid(width as isize) as usize;
                padded[dr * width + dc] += kernel.taps[r * kernel.cols + c];
            }
        }
        let transfer = fft.to_spectrum(&padded);
        let max_sq = transfer.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        let passband = transfer
            .iter()
            .map(|z| max_sq > 0.0 && z.norm_sqr() >= pinv_tolerance * max_sq)
            .collect();

        Ok(Self {
            kernel,
            decimation,
            input_dims: (width, height),
            output_dims: (width / decimation, height / decimation),
            transfer,
            passband,
            pinv_tolerance,
            cg_tolerance: DEFAULT_CG_TOLERANCE,
            fft,
        })
    }

    pub fn with_cg_tolerance(mut self, tol: f64) -> Self {
        self.cg_tolerance = tol;
        self
    }

    pub fn kernel(&self) -> &BlurKernel {
        &self.kernel
    }

    pub fn decimation(&self) -> usize {
        self.decimation
    }

    /// `(width, height)` of `x`.
    pub fn input_dims(&self) -> (usize, usize) {
        self.input_dims
    }

    /// `(width, height)` of `y`.
    pub fn output_dims(&self) -> (usize, usize) {
        self.output_dims
    }

    pub fn input_len(&self) -> usize {
        self.input_dims.0 * self.input_dims.1
    }

    pub fn output_len(&self) -> usize {
        self.output_dims.0 * self.output_dims.1
    }

    pub fn pinv_tolerance(&self) -> f64 {
        self.pinv_tolerance
    }

    /// Transfer function of the blur over the full input grid.
    pub fn transfer(&self) -> &[Complex64] {
        &self.transfer
    }

    /// True when `H` is square and `HᵀH` is invertible, i.e. `P = I`.
    pub fn is_full_rank(&self) -> bool {
        self.decimation == 1 && self.passband.iter().all(|&p| p)
    }

    fn filter(&self, x: &[f64], response: impl Fn(usize, Complex64) -> Complex64) -> Vec<f64> {
        let mut spec = self.fft.to_spectrum(x);
        for (i, z) in spec.iter_mut().enumerate() {
            *z = response(i, *z);
        }
        self.fft.to_real(spec)
    }

    fn blur_raw(&self, x: &[f64]) -> Vec<f64> {
        self.filter(x, |i, z| z * self.transfer[i])
    }

    fn blur_adjoint_raw(&self, x: &[f64]) -> Vec<f64> {
        self.filter(x, |i, z| z * self.transfer[i].conj())
    }

    fn decimate(&self, full: &[f64]) -> Vec<f64> {
        let d = self.decimation;
        if d == 1 {
            return full.to_vec();
        }
        let (w, _) = self.input_dims;
        let (ow, oh) = self.output_dims;
        let mut out = Vec::with_capacity(ow * oh);
        for r in 0..oh {
            for c in 0..ow {
                out.push(full[r * d * w + c * d]);
            }
        }
        out
    }

    fn upsample(&self, low: &[f64]) -> Vec<f64> {
        let d = self.decimation;
        if d == 1 {
            return low.to_vec();
        }
        let (w, h) = self.input_dims;
        let (ow, oh) = self.output_dims;
        let mut out = vec![0.0; w * h];
        for r in 0..oh {
            for c in 0..ow {
                out[r * d * w + c * d] = low[r * ow + c];
            }
        }
        out
    }

    /// `H x`.
    pub fn apply(&self, x: &Image) -> Result<Image> {
        x.ensure_dims(self.input_dims)?;
        let (ow, oh) = self.output_dims;
        Ok(Image::from_vec_unchecked(
            ow,
            oh,
            self.decimate(&self.blur_raw(x.data())),
        ))
    }

    /// `Hᵀ y`: zero-fill upsampling then correlation with the kernel.
    pub fn apply_adjoint(&self, y: &Image) -> Result<Image> {
        y.ensure_dims(self.output_dims)?;
        let (w, h) = self.input_dims;
        Ok(Image::from_vec_unchecked(
            w,
            h,
            self.blur_adjoint_raw(&self.upsample(y.data())),
        ))
    }

    /// `HᵀH x`.
    pub fn apply_normal(&self, x: &Image) -> Result<Image> {
        x.ensure_dims(self.input_dims)?;
        let (w, h) = self.input_dims;
        let data = if self.decimation == 1 {
            self.filter(x.data(), |i, z| z * self.transfer[i].norm_sqr())
        } else {
            let low = self.decimate(&self.blur_raw(x.data()));
            self.blur_adjoint_raw(&self.upsample(&low))
        };
        Ok(Image::from_vec_unchecked(w, h, data))
    }

    /// `HHᵀ v` on the output grid.
    fn apply_gram(&self, v: &[f64]) -> Vec<f64> {
        let full = self.upsample(v);
        let blurred = self.filter(&full, |i, z| z * self.transfer[i].norm_sqr());
        self.decimate(&blurred)
    }

    /// Solves `HHᵀ z = rhs` by conjugate gradients.
    fn solve_gram(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = rhs.len();
        let rhs_norm = dot(rhs, rhs).sqrt();
        let mut z = vec![0.0; n];
        if rhs_norm == 0.0 {
            return Ok(z);
        }
        let max_iter = 10 * n;
        let mut r = rhs.to_vec();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        for _ in 0..max_iter {
            if rr.sqrt() <= self.cg_tolerance * rhs_norm {
                return Ok(z);
            }
            let ap = self.apply_gram(&p);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let step = rr / pap;
            for i in 0..n {
                z[i] += step * p[i];
                r[i] -= step * ap[i];
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            rr = rr_next;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
        }
        if rr.sqrt() <= self.cg_tolerance * rhs_norm {
            return Ok(z);
        }
        Err(Error::CgNotConverged {
            iterations: max_iter,
            residual: rr.sqrt() / rhs_norm,
        })
    }

    /// Minimum-norm least-squares solution `Hᵀ(HHᵀ)†y`.
    pub fn ml_estimate(&self, y: &Image) -> Result<Image> {
        y.ensure_dims(self.output_dims)?;
        let (w, h) = self.input_dims;
        if self.decimation == 1 {
            let data = self.filter(y.data(), |i, z| {
                if self.passband[i] {
                    let t = self.transfer[i];
                    z * t.conj() / t.norm_sqr()
                } else {
                    Complex64::default()
                }
            });
            return Ok(Image::from_vec_unchecked(w, h, data));
        }
        let z = self.solve_gram(y.data())?;
        Ok(Image::from_vec_unchecked(
            w,
            h,
            self.blur_adjoint_raw(&self.upsample(&z)),
        ))
    }

    /// Orthogonal projection `Hᵀ(HHᵀ)†H x` onto `range(Hᵀ)`.
    pub fn project_range_ht(&self, x: &Image) -> Result<Image> {
        x.ensure_dims(self.input_dims)?;
        if self.is_full_rank() {
            return Ok(x.clone());
        }
        if self.decimation == 1 {
            let (w, h) = self.input_dims;
            let data = self.filter(x.data(), |i, z| {
                if self.passband[i] {
                    z
                } else {
                    Complex64::default()
                }
            });
            return Ok(Image::from_vec_unchecked(w, h, data));
        }
        self.ml_estimate(&self.apply(x)?)
    }

    /// Conditioning summary of `H`.
    pub fn condition_report(&self) -> ConditionReport {
        if self.decimation == 1 {
            let mags: Vec<f64> = self.transfer.iter().map(|z| z.norm()).collect();
            let max = mags.iter().cloned().fold(0.0, f64::max);
            let min_pass = mags
                .iter()
                .zip(&self.passband)
                .filter(|(_, &p)| p)
                .map(|(m, _)| *m)
                .fold(f64::INFINITY, f64::min);
            let rank_deficient = !self.is_full_rank();
            let range_condition = max / min_pass;
            return ConditionReport {
                rank_deficient,
                effective_condition: if rank_deficient {
                    f64::INFINITY
                } else {
                    range_condition
                },
                range_condition,
            };
        }
        let (lmax, lmin) = self.gram_extreme_eigenvalues(1000);
        ConditionReport {
            rank_deficient: true,
            effective_condition: f64::INFINITY,
            range_condition: (lmax / lmin.max(0.0)).sqrt(),
        }
    }

    /// Largest and smallest eigenvalue of `HHᵀ` by power iteration (the
    /// smallest via the shifted operator `σI − HHᵀ`).
    fn gram_extreme_eigenvalues(&self, iterations: usize) -> (f64, f64) {
        let n = self.output_len();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let start: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();

        let power = |op: &dyn Fn(&[f64]) -> Vec<f64>| -> f64 {
            let mut v = start.clone();
            let mut estimate = 0.0;
            for _ in 0..iterations {
                let norm = dot(&v, &v).sqrt();
                v.iter_mut().for_each(|e| *e /= norm);
                let av = op(&v);
                estimate = dot(&v, &av);
                v = av;
            }
            estimate
        };
        let lmax = power(&|v| self.apply_gram(v));
        let shift = 1.01 * lmax;
        let shifted = power(&|v| {
            let g = self.apply_gram(v);
            v.iter().zip(g).map(|(a, b)| shift * a - b).collect()
        });
        (lmax, shift - shifted)
    }
}
