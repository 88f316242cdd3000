//! Smoothed-ℓ1 penalty `ρ_s(α) = |α| − s·log(1 + |α|/s)` and the scalar
//! shrinkage it induces.
//!
//! `shrink(t, a) = argmin_z ½(z − a)² + t·ρ_s(z)`. For `a ≥ 0` the first
//! order condition `(z − a)(s + z) + t z = 0` gives the positive root
//! `z = ½[(a − s − t) + √((a − s − t)² + 4 s a)]`; negative inputs use
//! antisymmetry.

pub const DEFAULT_SMOOTHING: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    s: f64,
}

impl Default for Penalty {
    fn default() -> Self {
        Self {
            s: DEFAULT_SMOOTHING,
        }
    }
}

impl Penalty {
    /// Panics unless `s > 0`.
    pub fn new(s: f64) -> Self {
        assert!(s > 0.0 && s.is_finite(), "smoothing must be positive");
        Self { s }
    }

    pub fn smoothing(&self) -> f64 {
        self.s
    }

    pub fn value(&self, alpha: f64) -> f64 {
        let a = alpha.abs();
        a - self.s * (a / self.s).ln_1p()
    }

    pub fn total(&self, coeffs: &[f64]) -> f64 {
        coeffs.iter().map(|&a| self.value(a)).sum()
    }

    pub fn shrink(&self, t: f64, a: f64) -> f64 {
        debug_assert!(t > 0.0);
        let s = self.s;
        let m = a.abs();
        let b = m - s - t;
        let q = (b * b + 4.0 * s * m).sqrt();
        // Pick the cancellation-free form of the positive root.
        let z = if b >= 0.0 {
            0.5 * (b + q)
        } else {
            2.0 * s * m / (q - b)
        };
        z.copysign(a)
    }

    /// `d shrink / da`, an even function with values in `(0, 1]`.
    pub fn shrink_derivative(&self, t: f64, a: f64) -> f64 {
        debug_assert!(t > 0.0);
        let s = self.s;
        let m = a.abs();
        let b = m - s - t;
        let q = (b * b + 4.0 * s * m).sqrt();
        // ½[1 + (m − t + s)/q], rewritten to avoid cancellation when
        // m − t + s ≈ −q.
        let num = m - t + s;
        if num >= 0.0 {
            0.5 * (1.0 + num / q)
        } else {
            // 1 + num/q = (q² − num²) / (q (q − num)), q² − num² = 4 s t
            2.0 * s * t / (q * (q - num))
        }
    }

    /// Elementwise shrinkage with per-entry thresholds.
    pub fn shrink_slice(&self, thresholds: impl Threshold, input: &[f64], out: &mut [f64]) {
        for (j, (o, &a)) in out.iter_mut().zip(input).enumerate() {
            *o = self.shrink(thresholds.at(j), a);
        }
    }

    pub fn shrink_derivative_slice(
        &self,
        thresholds: impl Threshold,
        input: &[f64],
        out: &mut [f64],
    ) {
        for (j, (o, &a)) in out.iter_mut().zip(input).enumerate() {
            *o = self.shrink_derivative(thresholds.at(j), a);
        }
    }
}

/// Threshold source for vectorized shrinkage: one scalar for every entry,
/// or a per-entry array.
pub trait Threshold {
    fn at(&self, j: usize) -> f64;
}

impl Threshold for f64 {
    fn at(&self, _: usize) -> f64 {
        *self
    }
}

/// Thresholds `scale · weights[j]`.
pub struct Weighted<'a> {
    pub weights: &'a [f64],
    pub scale: f64,
}

impl Threshold for Weighted<'_> {
    fn at(&self, j: usize) -> f64 {
        self.weights[j] * self.scale
    }
}
