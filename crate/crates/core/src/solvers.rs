//! SSF and PCD iterative shrinkage in the `u = Hᵀy/σ²` parameterization,
//! with the probe `(dα_k/du)·n` propagated alongside the iterates so the
//! divergence of `x̂ = Dα_K` can be read off after any number of steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dictionary::{HaarFrame, WeightMatrix};
use crate::error::{Error, Result};
use crate::image::{CoefficientVector, Image};
use crate::operators::DegradationOperator;
use crate::shrinkage::{Penalty, Weighted};
use crate::tuning::golden_section_with;

const MAJORIZER_POWER_ITERATIONS: usize = 100;
const MAJORIZER_SAFETY: f64 = 1.01;
const LINE_SEARCH_INTERVAL: (f64, f64) = (0.0, 2.0);
const LINE_SEARCH_ITERATIONS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Ssf,
    Pcd,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ssf" => Ok(Self::Ssf),
            "pcd" => Ok(Self::Pcd),
            other => Err(Error::InvalidArgument(format!("unknown algorithm {other:?}"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ssf => "SSF",
            Self::Pcd => "PCD",
        })
    }
}

/// PCD step length along `v_k − α_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    LineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// SSF majorizer constant; estimated from `HD` when `None`.
    pub c: Option<f64>,
    pub step: StepSize,
    pub penalty: Penalty,
    pub sigma2: f64,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm, sigma2: f64) -> Self {
        Self {
            algorithm,
            c: None,
            step: StepSize::LineSearch,
            penalty: Penalty::default(),
            sigma2,
        }
    }

    pub fn with_step(mut self, step: StepSize) -> Self {
        self.step = step;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }
}

/// Measured data `y` together with its back-projection `Hᵀy = σ²u`.
#[derive(Debug, Clone)]
pub struct Observation {
    y: Image,
    backprojection: Image,
}

impl Observation {
    pub fn new(op: &DegradationOperator, y: Image) -> Result<Self> {
        let backprojection = op.apply_adjoint(&y)?;
        Ok(Self { y, backprojection })
    }

    pub fn y(&self) -> &Image {
        &self.y
    }

    /// `Hᵀy`, i.e. `σ²u`.
    pub fn backprojection(&self) -> &Image {
        &self.backprojection
    }

    /// Same `y` with `u` moved to `u + eps·dir`. Only the back-projection
    /// changes, so objective values computed from `y` are no longer exact.
    pub fn with_u_perturbation(&self, dir: &Image, eps: f64, sigma2: f64) -> Self {
        let mut backprojection = self.backprojection.clone();
        backprojection.add_scaled(eps * sigma2, dir);
        Self {
            y: self.y.clone(),
            backprojection,
        }
    }
}

/// Random probe `n ~ N(0, I)` on the input grid with its precomputed
/// image `σ²Dᵀn` in the coefficient domain.
#[derive(Debug, Clone)]
pub struct Probe {
    direction: Image,
    scaled_coeffs: CoefficientVector,
}

impl Probe {
    pub fn new(frame: &HaarFrame, direction: Image, sigma2: f64) -> Result<Self> {
        let scaled_coeffs = frame.analyze(&direction)?.scaled(sigma2);
        Ok(Self {
            direction,
            scaled_coeffs,
        })
    }

    pub fn direction(&self) -> &Image {
        &self.direction
    }
}

/// Standard-normal image from a seeded generator.
pub fn gaussian_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(width, height, |_, _| StandardNormal.sample(&mut rng))
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub alpha: CoefficientVector,
    /// `(dα_k/du)·n`; absent for runs that do not need a divergence.
    pub probe: Option<CoefficientVector>,
    pub k: usize,
    pub lambda_history: Vec<f64>,
    pub objective_history: Vec<f64>,
    /// `x̂ = Dα`.
    pub estimate: Image,
    /// `H x̂`.
    pub blurred: Image,
}

impl SolverState {
    /// `‖H x̂ − y‖²`.
    pub fn residual_norm_sq(&self, obs: &Observation) -> f64 {
        self.blurred.sub(obs.y()).norm_sq()
    }

    /// `⟨v, D·probe⟩`; with `v = n` this is the divergence estimate.
    pub fn probe_inner(&self, frame: &HaarFrame, v: &Image) -> Result<f64> {
        let probe = self
            .probe
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("state carries no probe".into()))?;
        Ok(frame.synthesize(probe)?.dot(v))
    }
}

/// Iterative-shrinkage solver bound to an operator and a dictionary.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    op: &'a DegradationOperator,
    frame: &'a HaarFrame,
    config: SolverConfig,
    c: f64,
    weights: Option<WeightMatrix>,
}

impl<'a> Solver<'a> {
    pub fn new(
        op: &'a DegradationOperator,
        frame: &'a HaarFrame,
        config: SolverConfig,
    ) -> Result<Self> {
        if op.input_dims() != frame.dims() {
            return Err(Error::DimensionMismatch {
                expected: frame.dims(),
                actual: op.input_dims(),
            });
        }
        if !(config.sigma2 >= 0.0 && config.sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be nonnegative, got {}",
                config.sigma2
            )));
        }
        let c = match config.c {
            Some(c) if c > 0.0 => c,
            Some(c) => {
                return Err(Error::InvalidArgument(format!(
                    "majorizer constant must be positive, got {c}"
                )))
            }
            None => estimate_majorizer_c(op, frame)?,
        };
        let weights = match config.algorithm {
            Algorithm::Pcd => Some(frame.column_norms(op)?),
            Algorithm::Ssf => None,
        };
        Ok(Self {
            op,
            frame,
            config,
            c,
            weights,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn operator(&self) -> &DegradationOperator {
        self.op
    }

    pub fn frame(&self) -> &HaarFrame {
        self.frame
    }

    pub fn majorizer(&self) -> f64 {
        self.c
    }

    pub fn weights(&self) -> Option<&WeightMatrix> {
        self.weights.as_ref()
    }

    pub fn probe(&self, direction: Image) -> Result<Probe> {
        Probe::new(self.frame, direction, self.config.sigma2)
    }

    /// `f(α) = ½‖y − HDα‖² + λ Σ ρ_s(α_j)`.
    pub fn objective(&self, obs: &Observation, alpha: &CoefficientVector, lambda: f64) -> Result<f64> {
        let hx = self.op.apply(&self.frame.synthesize(alpha)?)?;
        Ok(self.objective_from_parts(obs, &hx, alpha, lambda))
    }

    fn objective_from_parts(
        &self,
        obs: &Observation,
        blurred: &Image,
        alpha: &CoefficientVector,
        lambda: f64,
    ) -> f64 {
        0.5 * blurred.sub(obs.y()).norm_sq() + lambda * self.config.penalty.total(alpha.data())
    }

    /// `α₀ = (HD)ᵀy`, `probe₀ = σ²Dᵀn`.
    pub fn init_state(&self, obs: &Observation, probe: Option<&Probe>) -> Result<SolverState> {
        obs.y().ensure_dims(self.op.output_dims())?;
        let alpha = self.frame.analyze(obs.backprojection())?;
        let estimate = self.frame.synthesize(&alpha)?;
        let blurred = self.op.apply(&estimate)?;
        Ok(SolverState {
            alpha,
            probe: probe.map(|p| p.scaled_coeffs.clone()),
            k: 0,
            lambda_history: Vec::new(),
            objective_history: Vec::new(),
            estimate,
            blurred,
        })
    }

    /// `Dᵀ(Hᵀy − HᵀH x̂)`.
    fn data_gradient(&self, obs: &Observation, state: &SolverState) -> Result<CoefficientVector> {
        let mut g = obs.backprojection().clone();
        g.add_scaled(-1.0, &self.op.apply_adjoint(&state.blurred)?);
        self.frame.analyze(&g)
    }

    /// `Dᵀ(σ²n − HᵀHD·probe)`.
    fn probe_gradient(&self, probe: &Probe, coeffs: &CoefficientVector) -> Result<CoefficientVector> {
        let pe = self.frame.synthesize(coeffs)?;
        let mut g = self.frame.analyze(&self.op.apply_normal(&pe)?)?;
        // Dᵀ(σ²n) is cached on the probe
        for (gi, ni) in g.data_mut().iter_mut().zip(probe.scaled_coeffs.data()) {
            *gi = ni - *gi;
        }
        Ok(g)
    }

    fn finish(
        &self,
        obs: &Observation,
        state: &SolverState,
        alpha: CoefficientVector,
        probe: Option<CoefficientVector>,
        estimate: Image,
        blurred: Image,
        lambda: f64,
    ) -> Result<SolverState> {
        let f = self.objective_from_parts(obs, &blurred, &alpha, lambda);
        if !f.is_finite() {
            return Err(Error::NonFinite(format!("objective at iteration {}", state.k + 1)));
        }
        let mut lambda_history = state.lambda_history.clone();
        lambda_history.push(lambda);
        let mut objective_history = state.objective_history.clone();
        objective_history.push(f);
        Ok(SolverState {
            alpha,
            probe,
            k: state.k + 1,
            lambda_history,
            objective_history,
            estimate,
            blurred,
        })
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("λ must be positive, got {lambda}")));
        }
        Ok(())
    }

    /// One SSF iteration:
    /// `α' = S_{λ/c}(α + Dᵀ(σ²u − HᵀHDα)/c)`, and
    /// `p' = S'(·) ⊙ [p + Dᵀ(σ²n − HᵀHD p)/c]`.
    pub fn ssf_step(
        &self,
        obs: &Observation,
        probe: Option<&Probe>,
        state: &SolverState,
        lambda: f64,
    ) -> Result<SolverState> {
        Self::check_lambda(lambda)?;
        let inv_c = 1.0 / self.c;
        let threshold = lambda * inv_c;
        let penalty = &self.config.penalty;

        let mut arg = state.alpha.clone();
        arg.add_scaled(inv_c, &self.data_gradient(obs, state)?);
        let mut alpha = self.frame.zeros();
        penalty.shrink_slice(threshold, arg.data(), alpha.data_mut());

        let next_probe = match (probe, &state.probe) {
            (Some(p), Some(current)) => {
                let mut inner = current.clone();
                inner.add_scaled(inv_c, &self.probe_gradient(p, current)?);
                for (v, &a) in inner.data_mut().iter_mut().zip(arg.data()) {
                    *v *= penalty.shrink_derivative(threshold, a);
                }
                Some(inner)
            }
            _ => None,
        };

        let estimate = self.frame.synthesize(&alpha)?;
        let blurred = self.op.apply(&estimate)?;
        self.finish(obs, state, alpha, next_probe, estimate, blurred, lambda)
    }

    /// One PCD iteration:
    /// `v = S_{Wλ}(α + W Dᵀ(σ²u − HᵀHDα))`, `α' = α + μ(v − α)`, and
    /// `p' = (1 − μ)p + μ S'(·) ⊙ [p + W Dᵀ(σ²n − HᵀHD p)]` with `μ`
    /// held fixed in the derivative.
    pub fn pcd_step(
        &self,
        obs: &Observation,
        probe: Option<&Probe>,
        state: &SolverState,
        lambda: f64,
    ) -> Result<SolverState> {
        Self::check_lambda(lambda)?;
        let weights = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("PCD step on a solver built for SSF".into()))?
            .diag();
        let penalty = &self.config.penalty;

        let grad = self.data_gradient(obs, state)?;
        let mut arg = state.alpha.clone();
        for ((a, g), w) in arg.data_mut().iter_mut().zip(grad.data()).zip(weights) {
            *a += w * g;
        }
        let mut v = self.frame.zeros();
        penalty.shrink_slice(
            Weighted {
                weights,
                scale: lambda,
            },
            arg.data(),
            v.data_mut(),
        );

        let mut direction = v;
        direction.add_scaled(-1.0, &state.alpha);
        let d_img = self.frame.synthesize(&direction)?;
        let hd_img = self.op.apply(&d_img)?;

        let mu = match self.config.step {
            StepSize::Fixed(mu) => mu,
            StepSize::LineSearch => self.line_search(obs, state, &direction, &hd_img, lambda)?,
        };

        let mut alpha = state.alpha.clone();
        alpha.add_scaled(mu, &direction);
        let mut estimate = state.estimate.clone();
        estimate.add_scaled(mu, &d_img);
        let mut blurred = state.blurred.clone();
        blurred.add_scaled(mu, &hd_img);

        let next_probe = match (probe, &state.probe) {
            (Some(p), Some(current)) => {
                let pg = self.probe_gradient(p, current)?;
                let mut next = current.scaled(1.0 - mu);
                for (j, ((out, (&c, &g)), &a)) in next
                    .data_mut()
                    .iter_mut()
                    .zip(current.data().iter().zip(pg.data()))
                    .zip(arg.data())
                    .enumerate()
                {
                    let deriv = penalty.shrink_derivative(weights[j] * lambda, a);
                    *out += mu * deriv * (c + weights[j] * g);
                }
                Some(next)
            }
            _ => None,
        };

        self.finish(obs, state, alpha, next_probe, estimate, blurred, lambda)
    }

    /// Golden-section minimization of `f(α + μ d)` over `μ ∈ [0, 2]`.
    fn line_search(
        &self,
        obs: &Observation,
        state: &SolverState,
        direction: &CoefficientVector,
        hd: &Image,
        lambda: f64,
    ) -> Result<f64> {
        let residual = obs.y().sub(&state.blurred);
        let cross = residual.dot(hd);
        let curvature = hd.norm_sq();
        let penalty = &self.config.penalty;
        let alpha = state.alpha.data();
        let dir = direction.data();
        let (mu, _, _) = golden_section_with(
            |mu| {
                let data = -mu * cross + 0.5 * mu * mu * curvature;
                let reg: f64 = alpha
                    .iter()
                    .zip(dir)
                    .map(|(a, d)| penalty.value(a + mu * d))
                    .sum();
                let value = data + lambda * reg;
                if value.is_finite() {
                    Ok((value, ()))
                } else {
                    Err(Error::NonFinite(format!("line search objective at μ = {mu}")))
                }
            },
            LINE_SEARCH_INTERVAL,
            LINE_SEARCH_ITERATIONS,
        )?;
        Ok(mu)
    }

    pub fn step(
        &self,
        obs: &Observation,
        probe: Option<&Probe>,
        state: &SolverState,
        lambda: f64,
    ) -> Result<SolverState> {
        match self.config.algorithm {
            Algorithm::Ssf => self.ssf_step(obs, probe, state, lambda),
            Algorithm::Pcd => self.pcd_step(obs, probe, state, lambda),
        }
    }

    /// Runs one step per entry of `schedule` from the initial state and
    /// returns `x̂ = Dα_K` with the final state.
    pub fn run(
        &self,
        obs: &Observation,
        probe: Option<&Probe>,
        schedule: &[f64],
    ) -> Result<(Image, SolverState)> {
        let mut state = self.init_state(obs, probe)?;
        for &lambda in schedule {
            state = self.step(obs, probe, &state, lambda)?;
        }
        Ok((state.estimate.clone(), state))
    }

    /// `K` steps at a fixed `λ`.
    pub fn run_fixed(
        &self,
        obs: &Observation,
        probe: Option<&Probe>,
        lambda: f64,
        iterations: usize,
    ) -> Result<(Image, SolverState)> {
        self.run(obs, probe, &vec![lambda; iterations])
    }
}

/// Upper bound on `‖HD‖²`: power iteration on `(HD)ᵀ(HD)` times a 1%
/// safety margin.
pub fn estimate_majorizer_c(op: &DegradationOperator, frame: &HaarFrame) -> Result<f64> {
    let (w, h) = frame.dims();
    let mut v = frame.analyze(&gaussian_image(w, h, 0x00c0_ffee))?;
    let mut estimate = 0.0;
    for _ in 0..MAJORIZER_POWER_ITERATIONS {
        let norm = v.norm_sq().sqrt();
        if norm == 0.0 {
            break;
        }
        v = v.scaled(1.0 / norm);
        let next = frame.analyze(&op.apply_normal(&frame.synthesize(&v)?)?)?;
        estimate = v.dot(&next);
        v = next;
    }
    Ok(estimate * MAJORIZER_SAFETY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::BlurKernel;
    use nalgebra::{DMatrix, DVector};

    fn test_image(w: usize, h: usize, seed: u64) -> Image {
        let noise = gaussian_image(w, h, seed);
        Image::from_fn(w, h, |r, c| {
            let base = if (r / 3 + c / 4) % 2 == 0 { 180.0 } else { 40.0 };
            base + 0.5 * (r * c) as f64 + 10.0 * noise.get(r, c)
        })
    }

    fn dense_h(op: &DegradationOperator) -> DMatrix<f64> {
        let (w, h) = op.input_dims();
        let mut m = DMatrix::zeros(op.output_len(), w * h);
        for j in 0..w * h {
            let mut e = Image::zeros(w, h);
            e.data_mut()[j] = 1.0;
            m.set_column(j, &DVector::from_column_slice(op.apply(&e).unwrap().data()));
        }
        m
    }

    fn dense_d(frame: &HaarFrame) -> DMatrix<f64> {
        let (w, h) = frame.dims();
        let mut m = DMatrix::zeros(w * h, frame.coeff_len());
        for j in 0..frame.coeff_len() {
            let mut e = frame.zeros();
            e.data_mut()[j] = 1.0;
            m.set_column(j, &DVector::from_column_slice(frame.synthesize(&e).unwrap().data()));
        }
        m
    }

    fn vec_of(data: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(data)
    }

    fn setup(kernel: BlurKernel, n: usize, d: usize) -> (DegradationOperator, HaarFrame, Image) {
        let op = DegradationOperator::new(kernel, n, n, d).unwrap();
        let frame = HaarFrame::new(n, n);
        let mut y = op.apply(&test_image(n, n, 11)).unwrap();
        let (wy, hy) = op.output_dims();
        y.add_scaled(1.5, &gaussian_image(wy, hy, 12));
        (op, frame, y)
    }

    #[test]
    fn objective_matches_dense_summation() {
        let (op, frame, y) = setup(BlurKernel::ker4(), 8, 1);
        let solver = Solver::new(&op, &frame, SolverConfig::new(Algorithm::Ssf, 2.0)).unwrap();
        let obs = Observation::new(&op, y.clone()).unwrap();
        let noise = gaussian_image(frame.coeff_len(), 1, 5);
        let alpha = CoefficientVector::from_data(8, 8, 3, noise.data().iter().map(|v| 20.0 * v).collect()).unwrap();
        let lambda = 0.7;
        let hd = dense_h(&op) * dense_d(&frame);
        let r = vec_of(y.data()) - hd * vec_of(alpha.data());
        let mut reg = 0.0;
        for &a in alpha.data() {
            reg += a.abs() - 1e-3 * (1.0 + a.abs() / 1e-3).ln();
        }
        let oracle = 0.5 * r.norm_squared() + lambda * reg;
        let f = solver.objective(&obs, &alpha, lambda).unwrap();
        assert!((f - oracle).abs() < 1e-10 * oracle.abs());
        let zero = frame.zeros();
        assert_eq!(solver.objective(&obs, &zero, lambda).unwrap(), 0.5 * y.norm_sq());
    }

    #[test]
    fn init_state_matches_dense_oracle() {
        let (op, frame, y) = setup(BlurKernel::ker3(), 8, 1);
        let sigma2 = 3.0;
        let solver = Solver::new(&op, &frame, SolverConfig::new(Algorithm::Ssf, sigma2)).unwrap();
        let obs = Observation::new(&op, y.clone()).unwrap();
        let n = gaussian_image(8, 8, 9);
        let probe = solver.probe(n.clone()).unwrap();
        let state = solver.init_state(&obs, Some(&probe)).unwrap();
        let dm = dense_d(&frame);
        let alpha = dm.transpose() * dense_h(&op).transpose() * vec_of(y.data());
        let p0 = dm.transpose() * vec_of(n.data()) * sigma2;
        assert!((vec_of(state.alpha.data()) - &alpha).norm() < 1e-10 * alpha.norm());
        assert!((vec_of(state.probe.as_ref().unwrap().data()) - &p0).norm() < 1e-12 * p0.norm());
        assert_eq!(state.k, 0);

        let zero_obs = Observation::new(&op, Image::zeros(8, 8)).unwrap();
        let s0 = solver.init_state(&zero_obs, Some(&probe)).unwrap();
        assert!(s0.alpha.data().iter().all(|&a| a == 0.0));
        assert_eq!(s0.probe, state.probe);
    }

    #[test]
    fn identity_operator_initial_estimate_is_data() {
        let op = DegradationOperator::blur(BlurKernel::identity(), 8, 8).unwrap();
        let frame = HaarFrame::new(8, 8);
        let y = test_image(8, 8, 3);
        let solver = Solver::new(&op, &frame, SolverConfig::new(Algorithm::Ssf, 1.0)).unwrap();
        let obs = Observation::new(&op, y.clone()).unwrap();
        let (x0, state) = solver.run(&obs, None, &[]).unwrap();
        assert!(x0.sub(&y).norm_sq() < 1e-20 * y.norm_sq());
        assert!(state.probe.is_none());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (op, frame, y) = setup(BlurKernel::ker4(), 8, 1);
        let solver = Solver::new(&op, &frame, SolverConfig::new(Algorithm::Ssf, 1.0)).unwrap();
        let obs = Observation::new(&op, y).unwrap();
        let s = solver.init_state(&obs, None).unwrap();
        assert!(solver.step(&obs, None, &s, 0.0).is_err());
        assert!(solver.step(&obs, None, &s, f64::NAN).is_err());
        assert!(solver.pcd_step(&obs, None, &s, 1.0).is_err());
        let other = HaarFrame::new(16, 16);
        assert!(Solver::new(&op, &other, SolverConfig::new(Algorithm::Ssf, 1.0)).is_err());
        assert!(Solver::new(&op, &frame, SolverConfig::new(Algorithm::Ssf, -1.0)).is_err());
        assert!(Solver::new(&op, &frame, SolverConfig::new(Algorithm::Ssf, 1.0).with_c(0.0)).is_err());
        let wrong = Observation::new(&op, Image::zeros(8, 8)).unwrap();
        let small = DegradationOperator::blur(BlurKernel::ker4(), 4, 4).unwrap();
        assert!(Solver::new(&small, &HaarFrame::new(4, 4), SolverConfig::new(Algorithm::Ssf, 1.0))
            .unwrap()
            .init_state(&wrong, None)
            .is_err());
    }

    #[test]
    fn tiny_lambda_ssf_is_gradient_step() {
        let (op, frame, y) = setup(BlurKernel::ker1(), 16, 1);
        let solver = Solver::new(&op, &frame, SolverConfig::new(Algorithm::Ssf, 2.0)).unwrap();
        let obs = Observation::new(&op, y.clone()).unwrap();
        let s0 = solver.init_state(&obs, None).unwrap();
        let s1 = solver.ssf_step(&obs, None, &s0, 1e-12).unwrap();
        let hd = dense_h(&op) * dense_d(&frame);
        let a0 = vec_of(s0.alpha.data());
        let grad = hd.transpose() * (vec_of(y.data()) - &hd * &a0);
        let oracle = a0 + grad / solver.majorizer();
        let err = (vec_of(s1.alpha.data()) - &oracle).amax();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn pcd_unit_step_takes_the_shrunk_point() {
        let (op, frame, y) = setup(BlurKernel::ker3(), 8, 1);
        let config = SolverConfig::new(Algorithm::Pcd, 1.0).with_step(StepSize::Fixed(1.0));
        let solver = Solver::new(&op, &frame, config).unwrap();
        let obs = Observation::new(&op, y.clone()).unwrap();
        let s0 = solver.init_state(&obs, None).unwrap();
        let s1 = solver.step(&obs, None, &s0, 2.0).unwrap();
        let s2 = solver.step(&obs, None, &s1, 2.0).unwrap();

        let hd = dense_h(&op) * dense_d(&frame);
        let w = solver.weights().unwrap().diag();
        let a1 = vec_of(s1.alpha.data());
        let grad = hd.transpose() * (vec_of(y.data()) - &hd * &a1);
        let p = Penalty::default();
        for j in 0..a1.len() {
            let v = p.shrink(2.0 * w[j], a1[j] + w[j] * grad[j]);
            assert!((s2.alpha.data()[j] - v).abs() < 1e-9 * v.abs().max(1.0));
        }
    }

    /// Data `y` and `α*` satisfying `DᵀHᵀ(y − HDα*) = λρ'(α*)`, the
    /// stationarity condition shared by the SSF and PCD fixed points.
    fn stationary_instance(
        op: &DegradationOperator,
        frame: &HaarFrame,
    ) -> (Image, CoefficientVector, f64) {
        let (w, h) = op.output_dims();
        let r = gaussian_image(w, h, 31);
        let g = frame.analyze(&op.apply_adjoint(&r).unwrap()).unwrap();
        let lambda = g.data().iter().fold(0.0f64, |m, v| m.max(v.abs())) / 0.9;
        let s = Penalty::default().smoothing();
        let mut alpha = frame.zeros();
        for (a, gj) in alpha.data_mut().iter_mut().zip(g.data()) {
            // ρ'(z) = z / (s + |z|)
            let v = gj / lambda;
            *a = s * v / (1.0 - v.abs());
        }
        let mut y = op.apply(&frame.synthesize(&alpha).unwrap()).unwrap();
        y.add_scaled(1.0, &r);
        (y, alpha, lambda)
    }

    fn state_at(solver: &Solver<'_>, alpha: CoefficientVector) -> SolverState {
        let estimate = solver.frame().synthesize(&alpha).unwrap();
        let blurred = solver.operator().apply(&estimate).unwrap();
        SolverState {
            alpha,
            probe: None,
            k: 0,
            lambda_history: Vec::new(),
            objective_history: Vec::new(),
            estimate,
            blurred,
        }
    }

    #[test]
    fn stationary_point_is_fixed_for_both_algorithms() {
        let op = DegradationOperator::blur(BlurKernel::ker4(), 8, 8).unwrap();
        let frame = HaarFrame::new(8, 8);
        let (y, alpha, lambda) = stationary_instance(&op, &frame);
        let obs = Observation::new(&op, y).unwrap();
        let configs = [
            SolverConfig::new(Algorithm::Ssf, 1.0),
            SolverConfig::new(Algorithm::Pcd, 1.0).with_step(StepSize::Fixed(0.3)),
            SolverConfig::new(Algorithm::Pcd, 1.0).with_step(StepSize::Fixed(1.7)),
            SolverConfig::new(Algorithm::Pcd, 1.0),
        ];
        for config in configs {
            let solver = Solver::new(&op, &frame, config).unwrap();
            let state = state_at(&solver, alpha.clone());
            let next = solver.step(&obs, None, &state, lambda).unwrap();
            for (a, b) in next.alpha.data().iter().zip(alpha.data()) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn pcd_line_search_does_not_increase_objective() {
        let (op, frame, y) = setup(BlurKernel::ker1(), 16, 1);
        let solver = Solver::new(&op, &frame, SolverConfig::new(Algorithm::Pcd, 2.0)).unwrap();
        let obs = Observation::new(&op, y).unwrap();
        let (_, state) = solver.run_fixed(&obs, None, 0.5, 30).unwrap();
        let f0 = solver.objective(&obs, &solver.init_state(&obs, None).unwrap().alpha, 0.5).unwrap();
        let mut prev = f0;
        for &f in &state.objective_history {
            assert!(f <= prev * (1.0 + 1e-10), "{f} > {prev}");
            prev = f;
        }
    }

    #[test]
    fn ssf_objective_is_monotone() {
        let (op, frame, y) = setup(BlurKernel::ker1(), 16, 1);
        let solver = Solver::new(&op, &frame, SolverConfig::new(Algorithm::Ssf, 2.0)).unwrap();
        let obs = Observation::new(&op, y).unwrap();
        let (_, state) = solver.run_fixed(&obs, None, 0.3, 100).unwrap();
        for w in state.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].abs());
        }
        assert_eq!(state.lambda_history, vec![0.3; 100]);
    }

    /// Central differences of `α_K(u)` along `n` against the propagated probe.
    fn probe_vs_finite_differences(algorithm: Algorithm, n_px: usize, k: usize) {
        let (op, frame, y) = setup(BlurKernel::ker1(), n_px, 1);
        let sigma2 = 2.0;
        let config = SolverConfig::new(algorithm, sigma2).with_step(StepSize::Fixed(1.0));
        let solver = Solver::new(&op, &frame, config).unwrap();
        let obs = Observation::new(&op, y).unwrap();
        let n = gaussian_image(n_px, n_px, 21);
        let probe = solver.probe(n.clone()).unwrap();
        let lambda = 1.0;
        let (_, state) = solver.run_fixed(&obs, Some(&probe), lambda, k).unwrap();
        let eps = 1e-6;
        let plus = solver
            .run_fixed(&obs.with_u_perturbation(&n, eps, sigma2), None, lambda, k)
            .unwrap()
            .1;
        let minus = solver
            .run_fixed(&obs.with_u_perturbation(&n, -eps, sigma2), None, lambda, k)
            .unwrap()
            .1;
        let mut fd = plus.alpha.clone();
        fd.add_scaled(-1.0, &minus.alpha);
        let fd = fd.scaled(0.5 / eps);
        let p = state.probe.as_ref().unwrap();
        let mut diff = p.clone();
        diff.add_scaled(-1.0, &fd);
        let rel = (diff.norm_sq() / fd.norm_sq()).sqrt();
        assert!(rel < 1e-4, "{algorithm} {n_px}: relative error {rel}");
    }

    #[test]
    fn ssf_probe_matches_finite_differences() {
        probe_vs_finite_differences(Algorithm::Ssf, 8, 5);
        probe_vs_finite_differences(Algorithm::Ssf, 16, 5);
    }

    #[test]
    fn pcd_probe_matches_finite_differences() {
        probe_vs_finite_differences(Algorithm::Pcd, 8, 5);
        probe_vs_finite_differences(Algorithm::Pcd, 16, 5);
    }

    #[test]
    fn probe_is_linear_in_direction() {
        let (op, frame, y) = setup(BlurKernel::ker3(), 16, 1);
        for algorithm in [Algorithm::Ssf, Algorithm::Pcd] {
            let solver = Solver::new(&op, &frame, SolverConfig::new(algorithm, 2.0)).unwrap();
            let obs = Observation::new(&op, y.clone()).unwrap();
            let n = gaussian_image(16, 16, 4);
            let single = solver.probe(n.clone()).unwrap();
            let double = solver.probe(n.scaled(2.0)).unwrap();
            let a = solver.run_fixed(&obs, Some(&single), 0.8, 6).unwrap().1;
            let b = solver.run_fixed(&obs, Some(&double), 0.8, 6).unwrap().1;
            assert_eq!(a.probe.unwrap().scaled(2.0), b.probe.unwrap());
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (op, frame, y) = setup(BlurKernel::ker2(), 16, 1);
        let solver = Solver::new(&op, &frame, SolverConfig::new(Algorithm::Pcd, 0.3)).unwrap();
        let obs = Observation::new(&op, y).unwrap();
        let probe = solver.probe(gaussian_image(16, 16, 8)).unwrap();
        let a = solver.run_fixed(&obs, Some(&probe), 0.4, 7).unwrap().1;
        let b = solver.run_fixed(&obs, Some(&probe), 0.4, 7).unwrap().1;
        assert_eq!(a.alpha, b.alpha);
        assert_eq!(a.probe, b.probe);
        assert_eq!(a.objective_history, b.objective_history);
    }

    #[test]
    fn majorizer_for_identity_is_frame_bound() {
        let op = DegradationOperator::blur(BlurKernel::identity(), 16, 16).unwrap();
        let frame = HaarFrame::new(16, 16);
        let c = estimate_majorizer_c(&op, &frame).unwrap();
        assert!((c - frame.gamma() * 1.01).abs() < 1e-9);
    }

    #[test]
    fn majorizer_matches_dense_singular_value() {
        for (kernel, d) in [(BlurKernel::ker1(), 1), (BlurKernel::ker3(), 1), (BlurKernel::ker4(), 2)] {
            let op = DegradationOperator::new(kernel, 8, 8, d).unwrap();
            let frame = HaarFrame::new(8, 8);
            let hd = dense_h(&op) * dense_d(&frame);
            let smax = hd.singular_values().max();
            let c = estimate_majorizer_c(&op, &frame).unwrap();
            assert!((c / 1.01 - smax * smax).abs() < 1e-6 * smax * smax, "{c} vs {}", smax * smax);
        }
    }

    #[test]
    fn decimation_does_not_increase_majorizer() {
        let frame = HaarFrame::new(16, 16);
        for kernel in [BlurKernel::ker4(), BlurKernel::ker5(), BlurKernel::ker3()] {
            let full = DegradationOperator::new(kernel.clone(), 16, 16, 1).unwrap();
            let dec = DegradationOperator::new(kernel, 16, 16, 2).unwrap();
            let cf = estimate_majorizer_c(&full, &frame).unwrap();
            let cd = estimate_majorizer_c(&dec, &frame).unwrap();
            assert!(cd <= cf * (1.0 + 1e-9), "{cd} > {cf}");
        }
    }
}
