//! Undecimated (à trous) 2D Haar frame with periodic boundaries.
//!
//! Each level `j` filters with the dilated pair `h = ½[1, 1]`,
//! `g = ½[1, −1]` (taps at offsets 0 and `2^j`). Since
//! `|ĥ|² + |ĝ|² = 1` the analysis operator is a Parseval frame:
//! `D Dᵀ = I`. Bands are stored level by level as `(h_x g_y)`,
//! `(g_x h_y)`, `(g_x g_y)`, followed by the final scaling band.

use crate::error::{Error, Result};
use crate::image::{CoefficientVector, Image};
use crate::operators::DegradationOperator;

pub const DEFAULT_LEVELS: usize = 3;

/// Relative floor applied to `‖(HD)e_j‖²` before inversion.
const COLUMN_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarFrame {
    width: usize,
    height: usize,
    levels: usize,
}

/// Diagonal of `W`, one entry per coefficient: `1 / ‖(HD)e_j‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    diag: Vec<f64>,
}

impl WeightMatrix {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

impl HaarFrame {
    pub fn new(width: usize, height: usize) -> Self {
        Self::with_levels(width, height, DEFAULT_LEVELS)
    }

    pub fn with_levels(width: usize, height: usize, levels: usize) -> Self {
        assert!(width > 0 && height > 0 && levels > 0);
        Self {
            width,
            height,
            levels,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn num_bands(&self) -> usize {
        3 * self.levels + 1
    }

    pub fn coeff_len(&self) -> usize {
        self.num_bands() * self.width * self.height
    }

    /// Frame constant `γ` in `D Dᵀ = γ I`.
    pub fn gamma(&self) -> f64 {
        1.0
    }

    pub fn zeros(&self) -> CoefficientVector {
        CoefficientVector::zeros(self.width, self.height, self.levels)
    }

    fn check_coeffs(&self, alpha: &CoefficientVector) -> Result<()> {
        if (alpha.width(), alpha.height(), alpha.levels())
            != (self.width, self.height, self.levels)
        {
            return Err(Error::CoefficientLength {
                expected: self.coeff_len(),
                actual: alpha.len(),
            });
        }
        Ok(())
    }

    /// Two-tap periodic filter along one axis: `½(a[i] + sign·a[i + shift])`.
    fn filter(&self, src: &[f64], dst: &mut [f64], axis: Axis, shift: isize, sign: f64) {
        let (w, h) = (self.width, self.height);
        match axis {
            Axis::X => {
                let s = shift.rem_euclid(w as isize) as usize;
                for r in 0..h {
                    let row = &src[r * w..(r + 1) * w];
                    let out = &mut dst[r * w..(r + 1) * w];
                    for c in 0..w {
                        let n = if c + s >= w { c + s - w } else { c + s };
                        out[c] = 0.5 * (row[c] + sign * row[n]);
                    }
                }
            }
            Axis::Y => {
                let s = shift.rem_euclid(h as isize) as usize;
                for r in 0..h {
                    let n = if r + s >= h { r + s - h } else { r + s };
                    for c in 0..w {
                        dst[r * w + c] = 0.5 * (src[r * w + c] + sign * src[n * w + c]);
                    }
                }
            }
        }
    }

    fn filtered(&self, src: &[f64], axis: Axis, shift: isize, sign: f64) -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        self.filter(src, &mut out, axis, shift, sign);
        out
    }

    /// Analysis `Dᵀ x`.
    pub fn analyze(&self, x: &Image) -> Result<CoefficientVector> {
        x.ensure_dims(self.dims())?;
        let mut alpha = self.zeros();
        let mut approx = x.data().to_vec();
        for level in 0..self.levels {
            let o = 1isize << level;
            let lo_x = self.filtered(&approx, Axis::X, o, 1.0);
            let hi_x = self.filtered(&approx, Axis::X, o, -1.0);
            self.filter(&lo_x, alpha.band_mut(3 * level), Axis::Y, o, -1.0);
            self.filter(&hi_x, alpha.band_mut(3 * level + 1), Axis::Y, o, 1.0);
            self.filter(&hi_x, alpha.band_mut(3 * level + 2), Axis::Y, o, -1.0);
            approx = self.filtered(&lo_x, Axis::Y, o, 1.0);
        }
        alpha.band_mut(3 * self.levels).copy_from_slice(&approx);
        Ok(alpha)
    }

    /// Synthesis `D α`, the adjoint of [`analyze`](Self::analyze).
    pub fn synthesize(&self, alpha: &CoefficientVector) -> Result<Image> {
        self.check_coeffs(alpha)?;
        let mut acc = alpha.band(3 * self.levels).to_vec();
        for level in (0..self.levels).rev() {
            let o = -(1isize << level);
            let mut lo = self.filtered(&acc, Axis::Y, o, 1.0);
            let lh = self.filtered(alpha.band(3 * level), Axis::Y, o, -1.0);
            lo.iter_mut().zip(&lh).for_each(|(a, b)| *a += b);

            let mut hi = self.filtered(alpha.band(3 * level + 1), Axis::Y, o, 1.0);
            let hh = self.filtered(alpha.band(3 * level + 2), Axis::Y, o, -1.0);
            hi.iter_mut().zip(&hh).for_each(|(a, b)| *a += b);

            acc = self.filtered(&lo, Axis::X, o, 1.0);
            let hx = self.filtered(&hi, Axis::X, o, -1.0);
            acc.iter_mut().zip(&hx).for_each(|(a, b)| *a += b);
        }
        Ok(Image::from_vec_unchecked(self.width, self.height, acc))
    }

    /// Diagonal PCD weights `W_jj = 1 / ‖(HD)e_j‖²`.
    ///
    /// Column norms depend only on the band and on the atom position
    /// modulo the decimation factor, so `bands · d²` atoms are measured.
    pub fn column_norms(&self, op: &DegradationOperator) -> Result<WeightMatrix> {
        if op.input_dims() != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: op.input_dims(),
            });
        }
        let d = op.decimation();
        let n = self.width * self.height;
        let mut norms = vec![0.0; self.num_bands() * d * d];
        for band in 0..self.num_bands() {
            for pr in 0..d {
                for pc in 0..d {
                    let mut e = self.zeros();
                    e.band_mut(band)[pr * self.width + pc] = 1.0;
                    let atom = self.synthesize(&e)?;
                    norms[(band * d + pr) * d + pc] = op.apply(&atom)?.norm_sq();
                }
            }
        }
        let max = norms.iter().cloned().fold(0.0, f64::max);
        let floor = COLUMN_NORM_FLOOR * max;
        let mut diag = Vec::with_capacity(self.coeff_len());
        for band in 0..self.num_bands() {
            for r in 0..self.height {
                for c in 0..self.width {
                    let v = norms[(band * d + r % d) * d + c % d];
                    diag.push(1.0 / v.max(floor));
                }
            }
        }
        debug_assert_eq!(diag.len(), self.num_bands() * n);
        Ok(WeightMatrix { diag })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::BlurKernel;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::new(w, h, (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_coeffs(rng: &mut ChaCha8Rng, frame: &HaarFrame) -> CoefficientVector {
        let (w, h) = frame.dims();
        CoefficientVector::from_data(
            w,
            h,
            frame.levels(),
            (0..frame.coeff_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    /// Dense synthesis matrix; column j is `D e_j` computed by explicit
    /// convolution of the separable atom filters, independent of the
    /// recursive implementation.
    fn dense_synthesis(w: usize, h: usize, levels: usize) -> DMatrix<f64> {
        // 1D equivalent filters per level: cumulative lowpass then band filter.
        fn conv(a: &[(isize, f64)], b: &[(isize, f64)]) -> Vec<(isize, f64)> {
            let mut out: Vec<(isize, f64)> = Vec::new();
            for &(i, x) in a {
                for &(j, y) in b {
                    match out.iter_mut().find(|(k, _)| *k == i + j) {
                        Some(e) => e.1 += x * y,
                        None => out.push((i + j, x * y)),
                    }
                }
            }
            out
        }
        let nb = 3 * levels + 1;
        let mut m = DMatrix::zeros(w * h, nb * w * h);
        let mut low: Vec<(isize, f64)> = vec![(0, 1.0)];
        let mut band_filters: Vec<(Vec<(isize, f64)>, Vec<(isize, f64)>)> = Vec::new();
        for level in 0..levels {
            let o = 1isize << level;
            let hf = vec![(0, 0.5), (o, 0.5)];
            let gf = vec![(0, 0.5), (o, -0.5)];
            let lh = conv(&low, &hf);
            let gh = conv(&low, &gf);
            // (fx, fy)
            band_filters.push((lh.clone(), gh.clone()));
            band_filters.push((gh.clone(), lh.clone()));
            band_filters.push((gh.clone(), gh.clone()));
            low = lh;
        }
        band_filters.push((low.clone(), low.clone()));
        // analysis coefficient at p = Σ f(k) x[p + k]; synthesis column = atom at p + k.
        for (b, (fx, fy)) in band_filters.iter().enumerate() {
            for r in 0..h {
                for c in 0..w {
                    let col = b * w * h + r * w + c;
                    for &(ky, vy) in fy {
                        for &(kx, vx) in fx {
                            let rr = (r as isize + ky).rem_euclid(h as isize) as usize;
                            let cc = (c as isize + kx).rem_euclid(w as isize) as usize;
                            m[(rr * w + cc, col)] += vx * vy;
                        }
                    }
                }
            }
        }
        m
    }

    #[test]
    fn dense_oracle_synthesis_and_analysis() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = HaarFrame::new(8, 8);
        let m = dense_synthesis(8, 8, 3);
        let alpha = random_coeffs(&mut rng, &frame);
        let x = frame.synthesize(&alpha).unwrap();
        let expected = &m * nalgebra::DVector::from_column_slice(alpha.data());
        for (a, b) in x.data().iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let img = random_image(&mut rng, 8, 8);
        let coeffs = frame.analyze(&img).unwrap();
        let expected = m.transpose() * nalgebra::DVector::from_column_slice(img.data());
        for (a, b) in coeffs.data().iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_atom_matches_dense_column() {
        let frame = HaarFrame::new(8, 8);
        let m = dense_synthesis(8, 8, 3);
        let mut e = frame.zeros();
        let j = 2 * 8 + 5;
        e.band_mut(0)[j] = 1.0;
        let atom = frame.synthesize(&e).unwrap();
        for (i, v) in atom.data().iter().enumerate() {
            assert!((v - m[(i, j)]).abs() < 1e-15);
        }
        // a level-1 (h_x, g_y) atom: four ±1/4 taps
        let nonzero: Vec<f64> = atom.data().iter().cloned().filter(|v| *v != 0.0).collect();
        assert_eq!(nonzero.len(), 4);
        assert!(nonzero.iter().all(|v| v.abs() == 0.25));
    }

    #[test]
    fn zero_coefficients_give_zero_image() {
        let frame = HaarFrame::new(5, 7);
        let img = frame.synthesize(&frame.zeros()).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_has_no_detail() {
        let frame = HaarFrame::new(16, 8);
        let alpha = frame.analyze(&Image::filled(16, 8, 3.0)).unwrap();
        for b in 0..9 {
            assert!(alpha.band(b).iter().all(|v| v.abs() < 1e-15));
        }
        assert!(alpha.band(9).iter().all(|v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn tight_frame_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frame = HaarFrame::new(24, 16);
        for _ in 0..5 {
            let x = random_image(&mut rng, 24, 16);
            let a = frame.analyze(&x).unwrap();
            assert!((a.norm_sq() - frame.gamma() * x.norm_sq()).abs() < 1e-10 * x.norm_sq());
            let back = frame.synthesize(&a.scaled(1.0 / frame.gamma())).unwrap();
            let err = back.sub(&x).norm_sq().sqrt() / x.norm_sq().sqrt();
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn analysis_is_adjoint_of_synthesis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = HaarFrame::new(12, 10);
        for _ in 0..5 {
            let a = random_coeffs(&mut rng, &frame);
            let x = random_image(&mut rng, 12, 10);
            let l = frame.synthesize(&a).unwrap().dot(&x);
            let r = a.dot(&frame.analyze(&x).unwrap());
            assert!((l - r).abs() <= 1e-10 * l.abs().max(r.abs()));
        }
    }

    #[test]
    fn rejects_wrong_sizes() {
        let frame = HaarFrame::new(8, 8);
        assert!(frame.analyze(&Image::zeros(4, 8)).is_err());
        let other = CoefficientVector::zeros(4, 4, 3);
        assert!(frame.synthesize(&other).is_err());
    }

    #[test]
    fn identity_weights_are_band_constant() {
        let frame = HaarFrame::new(16, 16);
        let op = DegradationOperator::blur(BlurKernel::identity(), 16, 16).unwrap();
        let w = frame.column_norms(&op).unwrap();
        let n = 256;
        for b in 0..frame.num_bands() {
            let mut e = frame.zeros();
            e.band_mut(b)[0] = 1.0;
            let expected = 1.0 / frame.synthesize(&e).unwrap().norm_sq();
            assert!(w.diag()[b * n..(b + 1) * n]
                .iter()
                .all(|v| (v - expected).abs() < 1e-12 * expected));
        }
    }

    #[test]
    fn ker3_weights_match_explicit_columns() {
        let frame = HaarFrame::new(16, 16);
        let op = DegradationOperator::blur(BlurKernel::ker3(), 16, 16).unwrap();
        let w = frame.column_norms(&op).unwrap();
        let m = dense_synthesis(16, 16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..40 {
            let j = rng.gen_range(0..frame.coeff_len());
            let col: Vec<f64> = m.column(j).iter().cloned().collect();
            let hcol = op.apply(&Image::new(16, 16, col).unwrap()).unwrap();
            let expected = 1.0 / hcol.norm_sq();
            assert!((w.diag()[j] - expected).abs() < 1e-10 * expected);
        }
        assert!(w.diag().iter().all(|v| v.is_finite() && *v > 0.0));
    }

    #[test]
    fn decimated_weights_depend_on_phase_only() {
        let frame = HaarFrame::new(16, 16);
        let op = DegradationOperator::new(BlurKernel::ker5(), 16, 16, 2).unwrap();
        let w = frame.column_norms(&op).unwrap();
        for j in [0usize, 17, 100, 255, 256 + 3, 9 * 256 + 40] {
            let band = j / 256;
            let pos = j % 256;
            let mut e = frame.zeros();
            e.band_mut(band)[pos] = 1.0;
            let norm = op.apply(&frame.synthesize(&e).unwrap()).unwrap().norm_sq();
            if norm < 1e-20 {
                // annihilated atom (j = 17: odd-phase level-1 detail): clamped
                assert!(w.diag()[j] > 1e10 && w.diag()[j].is_finite());
            } else {
                assert!((w.diag()[j] - 1.0 / norm).abs() < 1e-10 / norm);
            }
        }
        assert!(w.diag().iter().all(|v| v.is_finite() && *v > 0.0));
    }
}
