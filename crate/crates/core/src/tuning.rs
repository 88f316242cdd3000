//! Parameter selection: golden-section search, global `λ` and `K` tuning,
//! and the greedy and look-ahead per-iteration schemes.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{isnr, mse, psnr, Image};
use crate::risk::{
    discrepancy, first_crossing, gcv, gsure, lcurve_select, projected_gsure, LcurvePoint,
    RiskReport,
};
use crate::solvers::{gaussian_image, Observation, Probe, Solver, SolverState};

const INV_PHI: f64 = 0.618_033_988_749_894_9;
/// Seed offset separating the GCV probe from the divergence probe.
const GCV_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;
pub const LCURVE_GRID_POINTS: usize = 20;

/// Golden-section minimization carrying a payload with each evaluation.
///
/// `iterations` bracket shrinkages cost `iterations + 1` evaluations. The
/// best evaluated point is returned together with its payload; ties keep
/// the earlier evaluation and move the bracket left.
pub fn golden_section_with<T, F>(
    mut f: F,
    bracket: (f64, f64),
    iterations: usize,
) -> Result<(f64, f64, T)>
where
    F: FnMut(f64) -> Result<(f64, T)>,
{
    let (mut lo, mut hi) = bracket;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("bad bracket [{lo}, {hi}]")));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument(
            "golden section needs at least one iteration".into(),
        ));
    }
    let mut best: Option<(f64, f64, T)> = None;
    let mut eval = |x: f64, best: &mut Option<(f64, f64, T)>| -> Result<f64> {
        let (v, payload) = f(x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("golden-section objective at {x}")));
        }
        if best.as_ref().map_or(true, |b| v < b.1) {
            *best = Some((x, v, payload));
        }
        Ok(v)
    };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = eval(x1, &mut best)?;
    let mut f2 = eval(x2, &mut best)?;
    for it in 0..iterations {
        let last = it + 1 == iterations;
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            if !last {
                f1 = eval(x1, &mut best)?;
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            if !last {
                f2 = eval(x2, &mut best)?;
            }
        }
    }
    Ok(best.expect("at least two evaluations"))
}

/// Golden-section minimum `(argmin, min)` of a scalar function.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    bracket: (f64, f64),
    iterations: usize,
) -> Result<(f64, f64)> {
    let (x, fx, ()) = golden_section_with(|x| Ok((f(x), ())), bracket, iterations)?;
    Ok((x, fx))
}

/// Golden section over `log λ`; the payload is paired with the exact `λ`
/// that was evaluated.
pub fn log_golden_section<T, F>(
    mut f: F,
    bracket: (f64, f64),
    iterations: usize,
) -> Result<(f64, f64, (f64, T))>
where
    F: FnMut(f64) -> Result<(f64, T)>,
{
    if !(bracket.0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "log-scale bracket must be positive, got [{}, {}]",
            bracket.0, bracket.1
        )));
    }
    golden_section_with(
        |t| {
            let lambda = t.exp();
            let (v, payload) = f(lambda)?;
            Ok((v, (lambda, payload)))
        },
        (bracket.0.ln(), bracket.1.ln()),
        iterations,
    )
}

/// Width of the bracket left after `iterations` shrinkages.
pub fn final_bracket_width(bracket: (f64, f64), iterations: usize) -> f64 {
    (bracket.1 - bracket.0) * INV_PHI.powi(iterations as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    ProjectedGsure,
    Gsure,
    Gcv,
    Lcurve,
    Discrepancy,
    /// True MSE against a known original.
    OracleMse,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::ProjectedGsure,
        Criterion::Gsure,
        Criterion::Gcv,
        Criterion::Lcurve,
        Criterion::Discrepancy,
        Criterion::OracleMse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::ProjectedGsure => "projected_gsure",
            Self::Gsure => "gsure",
            Self::Gcv => "gcv",
            Self::Lcurve => "lcurve",
            Self::Discrepancy => "discrepancy",
            Self::OracleMse => "oracle_mse",
        }
    }

    /// Pointwise score of one candidate; lower is better.
    pub fn score(self, report: &RiskReport) -> Result<f64> {
        match self {
            Self::ProjectedGsure => Ok(report.projected_gsure),
            Self::Gsure => Ok(report.gsure),
            Self::Gcv => report
                .gcv
                .ok_or_else(|| Error::InvalidArgument("GCV probe run was not tracked".into())),
            Self::Discrepancy => Ok(report.discrepancy),
            Self::OracleMse => report
                .true_mse
                .ok_or(Error::MissingGroundTruth("oracle_mse")),
            Self::Lcurve => Err(Error::UnsupportedCriterion(
                "the L-curve ranks a whole curve, not a single candidate",
            )),
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|c| c.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown criterion {s:?}")))
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningConfig {
    pub lambda_bracket: (f64, f64),
    pub n_gs: usize,
    pub k_max: usize,
    /// Relative stopping threshold of the greedy schemes.
    pub delta: f64,
    /// Look-ahead depth.
    pub r: usize,
    pub criterion: Criterion,
}

pub const DEFAULT_LAMBDA_BRACKET: (f64, f64) = (1e-4, 2.0);

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            lambda_bracket: DEFAULT_LAMBDA_BRACKET,
            n_gs: 20,
            k_max: 200,
            delta: 1e-3,
            r: 1,
            criterion: Criterion::ProjectedGsure,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lambda_bracket;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::Config(format!("λ bracket [{lo}, {hi}] is not a positive interval")));
        }
        if self.n_gs < 5 {
            return Err(Error::Config(format!("n_gs must be at least 5, got {}", self.n_gs)));
        }
        if self.k_max == 0 {
            return Err(Error::Config("K_max must be positive".into()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("δ must be nonnegative, got {}", self.delta)));
        }
        if self.r == 0 {
            return Err(Error::Config("look-ahead depth r must be at least 1".into()));
        }
        Ok(())
    }

    /// `LCURVE_GRID_POINTS` log-spaced values spanning the bracket.
    pub fn lambda_grid(&self) -> Vec<f64> {
        log_grid(self.lambda_bracket, LCURVE_GRID_POINTS)
    }
}

pub fn log_grid(bracket: (f64, f64), points: usize) -> Vec<f64> {
    let (lo, hi) = (bracket.0.ln(), bracket.1.ln());
    (0..points)
        .map(|i| {
            if i + 1 == points {
                bracket.1
            } else {
                (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaChoice {
    Global(f64),
    PerIteration(Vec<f64>),
}

impl LambdaChoice {
    /// The threshold used at the last iteration.
    pub fn last(&self) -> f64 {
        match self {
            Self::Global(l) => *l,
            Self::PerIteration(v) => v.last().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuningResult {
    pub lambda: LambdaChoice,
    pub k: usize,
    /// Every candidate scored, in evaluation order.
    pub reports: Vec<RiskReport>,
    /// Report of the returned estimate.
    pub selected: RiskReport,
    pub estimate: Image,
    pub solver_steps: usize,
    pub wall_time: f64,
}

/// Solver state plus the matching run on the GCV probe image.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub state: SolverState,
    pub gcv_state: Option<SolverState>,
}

struct GroundTruth {
    image: Image,
    /// `mse(x, y)` for ISNR; absent for scale-up.
    degraded_mse_reference: Option<Image>,
}

/// Everything shared by the candidates of one tuning run: the data, one
/// fixed probe realization, `x_ML`, `Pn` and optionally the original.
pub struct TuningContext<'a> {
    solver: Solver<'a>,
    obs: Observation,
    probe: Probe,
    projected_direction: Image,
    x_ml: Image,
    gcv_obs: Option<Observation>,
    truth: Option<GroundTruth>,
    steps: AtomicUsize,
}

impl<'a> TuningContext<'a> {
    pub fn new(solver: Solver<'a>, y: Image, probe_seed: u64) -> Result<Self> {
        let op = solver.operator();
        let obs = Observation::new(op, y)?;
        let (w, h) = op.input_dims();
        let direction = gaussian_image(w, h, probe_seed);
        let projected_direction = op.project_range_ht(&direction)?;
        let probe = solver.probe(direction)?;
        let x_ml = op.ml_estimate(obs.y())?;
        Ok(Self {
            solver,
            obs,
            probe,
            projected_direction,
            x_ml,
            gcv_obs: None,
            truth: None,
            steps: AtomicUsize::new(0),
        })
    }

    /// Also run every candidate on a standard-normal image `n_y` so GCV
    /// can be evaluated.
    pub fn with_gcv(mut self, probe_seed: u64) -> Result<Self> {
        let op = self.solver.operator();
        let (w, h) = op.output_dims();
        let n_y = gaussian_image(w, h, probe_seed.wrapping_add(GCV_SEED_OFFSET));
        self.gcv_obs = Some(Observation::new(op, n_y)?);
        Ok(self)
    }

    /// Attach the original image so true MSE and ISNR/PSNR are reported.
    pub fn with_truth(mut self, original: Image) -> Result<Self> {
        original.ensure_dims(self.solver.operator().input_dims())?;
        let degraded_mse_reference = if self.solver.operator().decimation() == 1 {
            Some(self.obs.y().clone())
        } else {
            None
        };
        self.truth = Some(GroundTruth {
            image: original,
            degraded_mse_reference,
        });
        Ok(self)
    }

    pub fn solver(&self) -> &Solver<'a> {
        &self.solver
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn x_ml(&self) -> &Image {
        &self.x_ml
    }

    pub fn tracks_gcv(&self) -> bool {
        self.gcv_obs.is_some()
    }

    pub fn has_truth(&self) -> bool {
        self.truth.is_some()
    }

    /// Solver steps taken on the data so far (GCV probe runs excluded).
    pub fn solver_steps(&self) -> usize {
        self.steps.load(Ordering::Relaxed)
    }

    pub fn start(&self) -> Result<Candidate> {
        let state = self.solver.init_state(&self.obs, Some(&self.probe))?;
        let gcv_state = match &self.gcv_obs {
            Some(g) => Some(self.solver.init_state(g, None)?),
            None => None,
        };
        Ok(Candidate { state, gcv_state })
    }

    pub fn advance(&self, from: &Candidate, lambda: f64) -> Result<Candidate> {
        let state = self
            .solver
            .step(&self.obs, Some(&self.probe), &from.state, lambda)?;
        self.steps.fetch_add(1, Ordering::Relaxed);
        let gcv_state = match (&self.gcv_obs, &from.gcv_state) {
            (Some(g), Some(s)) => Some(self.solver.step(g, None, s, lambda)?),
            _ => None,
        };
        Ok(Candidate { state, gcv_state })
    }

    /// `k` steps at a fixed `λ` from the initial state.
    pub fn run(&self, lambda: f64, k: usize) -> Result<Candidate> {
        let mut c = self.start()?;
        for _ in 0..k {
            c = self.advance(&c, lambda)?;
        }
        Ok(c)
    }

    pub fn evaluate(&self, c: &Candidate) -> Result<RiskReport> {
        let st = &c.state;
        let op = self.solver.operator();
        let frame = self.solver.frame();
        let estimate = &st.estimate;
        let probe_image = frame.synthesize(
            st.probe
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("candidate carries no probe".into()))?,
        )?;
        let divergence = probe_image.dot(self.probe.direction());
        let projected_divergence = probe_image.dot(&self.projected_direction);
        let residual_norm_sq = st.residual_norm_sq(&self.obs);
        let n_y = op.output_len();
        let sigma2 = self.solver.config().sigma2;
        let gcv_value = match (&self.gcv_obs, &c.gcv_state) {
            (Some(g), Some(s)) => Some(gcv(residual_norm_sq, g.y().dot(&s.blurred), n_y)?),
            _ => None,
        };
        let (true_mse, quality_db) = match &self.truth {
            Some(t) => {
                let q = match &t.degraded_mse_reference {
                    Some(y) => isnr(&t.image, y, estimate)?,
                    None => psnr(&t.image, estimate)?,
                };
                (Some(mse(&t.image, estimate)?), Some(q))
            }
            None => (None, None),
        };
        Ok(RiskReport {
            lambda: st.lambda_history.last().copied().unwrap_or(0.0),
            k: st.k,
            gsure: gsure(estimate, divergence, &self.x_ml)?,
            projected_gsure: projected_gsure(estimate, projected_divergence, &self.x_ml, op)?,
            gcv: gcv_value,
            lcurve_x: residual_norm_sq.ln(),
            lcurve_y: estimate.norm_sq().ln(),
            discrepancy: discrepancy(residual_norm_sq, n_y, sigma2),
            residual_norm_sq,
            true_mse,
            quality_db,
        })
    }

    fn require_criterion(&self, criterion: Criterion) -> Result<()> {
        match criterion {
            Criterion::Gcv if !self.tracks_gcv() => Err(Error::InvalidArgument(
                "GCV needs a context built with_gcv".into(),
            )),
            Criterion::OracleMse if !self.has_truth() => {
                Err(Error::MissingGroundTruth("oracle_mse"))
            }
            _ => Ok(()),
        }
    }
}

fn result(
    ctx: &TuningContext<'_>,
    start_steps: usize,
    started: Instant,
    lambda: LambdaChoice,
    selected: (RiskReport, Image),
    reports: Vec<RiskReport>,
) -> TuningResult {
    TuningResult {
        lambda,
        k: selected.0.k,
        reports,
        selected: selected.0,
        estimate: selected.1,
        solver_steps: ctx.solver_steps() - start_steps,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

/// Evaluates `k` fixed-`λ` steps for every `λ` in `grid`, in parallel.
pub fn lambda_sweep(
    ctx: &TuningContext<'_>,
    k: usize,
    grid: &[f64],
) -> Result<Vec<(RiskReport, Image)>> {
    grid.par_iter()
        .map(|&lambda| {
            let c = ctx.run(lambda, k)?;
            Ok((ctx.evaluate(&c)?, c.state.estimate))
        })
        .collect()
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    Ok(())
}

/// One global `λ` for `k` iterations, chosen by golden section (or by the
/// maximum-curvature rule on a log grid for the L-curve).
pub fn tune_global_lambda(
    ctx: &TuningContext<'_>,
    k: usize,
    config: &TuningConfig,
) -> Result<TuningResult> {
    config.validate()?;
    check_k(k)?;
    let criterion = config.criterion;
    if criterion == Criterion::Lcurve {
        return tune_global_lambda_grid(ctx, k, criterion, &config.lambda_grid());
    }
    ctx.require_criterion(criterion)?;
    let started = Instant::now();
    let start_steps = ctx.solver_steps();
    let mut reports = Vec::new();
    let (_, _, (lambda, selected)) = log_golden_section(
        |lambda| {
            let c = ctx.run(lambda, k)?;
            let report = ctx.evaluate(&c)?;
            reports.push(report.clone());
            Ok((criterion.score(&report)?, (report, c.state.estimate)))
        },
        config.lambda_bracket,
        config.n_gs,
    )?;
    Ok(result(
        ctx,
        start_steps,
        started,
        LambdaChoice::Global(lambda),
        selected,
        reports,
    ))
}

/// Global `λ` chosen from an explicit grid (strictly increasing for the
/// L-curve). Ties go to the first grid point.
pub fn tune_global_lambda_grid(
    ctx: &TuningContext<'_>,
    k: usize,
    criterion: Criterion,
    grid: &[f64],
) -> Result<TuningResult> {
    check_k(k)?;
    ctx.require_criterion(criterion)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty λ grid".into()));
    }
    let start_steps = ctx.solver_steps();
    let started = Instant::now();
    let evaluated = lambda_sweep(ctx, k, grid)?;
    let mut result = global_lambda_from_sweep(criterion, evaluated)?;
    result.solver_steps = ctx.solver_steps() - start_steps;
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Selects a global `λ` from an already evaluated sweep (as returned by
/// [`lambda_sweep`]). Reports no solver steps of its own.
pub fn global_lambda_from_sweep(
    criterion: Criterion,
    evaluated: Vec<(RiskReport, Image)>,
) -> Result<TuningResult> {
    if evaluated.is_empty() {
        return Err(Error::InvalidArgument("empty λ sweep".into()));
    }
    let started = Instant::now();
    let reports: Vec<RiskReport> = evaluated.iter().map(|(r, _)| r.clone()).collect();
    let idx = select_index(criterion, &reports, |r| r.lambda)?;
    let (selected, estimate) = evaluated.into_iter().nth(idx).expect("index in range");
    Ok(TuningResult {
        lambda: LambdaChoice::Global(selected.lambda),
        k: selected.k,
        reports,
        selected,
        estimate,
        solver_steps: 0,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Index of the chosen report: argmin of the score, or the L-curve corner
/// with `param` as the curve parameter.
fn select_index(
    criterion: Criterion,
    reports: &[RiskReport],
    param: impl Fn(&RiskReport) -> f64,
) -> Result<usize> {
    if criterion == Criterion::Lcurve {
        let samples: Vec<LcurvePoint> = reports
            .iter()
            .map(|r| LcurvePoint {
                param: param(r),
                x: r.lcurve_x,
                y: r.lcurve_y,
            })
            .collect();
        return Ok(lcurve_select(&samples)?.0);
    }
    let mut best = (0, f64::INFINITY);
    for (i, r) in reports.iter().enumerate() {
        let s = criterion.score(r)?;
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("{criterion} at λ = {}, K = {}", r.lambda, r.k)));
        }
        if s < best.1 {
            best = (i, s);
        }
    }
    Ok(best.0)
}

/// Number of iterations for a fixed `λ`: one run to `K_max`, scored after
/// every step. The discrepancy criterion uses its first-crossing rule and
/// falls back to the argmin when the residual never drops below `n_y σ²`.
pub fn tune_global_k(
    ctx: &TuningContext<'_>,
    lambda: f64,
    config: &TuningConfig,
) -> Result<TuningResult> {
    config.validate()?;
    let criterion = config.criterion;
    ctx.require_criterion(criterion)?;
    let started = Instant::now();
    let start_steps = ctx.solver_steps();
    let mut c = ctx.start()?;
    let mut reports = Vec::with_capacity(config.k_max);
    for _ in 0..config.k_max {
        c = ctx.advance(&c, lambda)?;
        reports.push(ctx.evaluate(&c)?);
    }
    let mut result = global_k_from_reports(ctx, lambda, criterion, reports)?;
    result.solver_steps = ctx.solver_steps() - start_steps;
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}

/// Selects `K` for a criterion from the per-iteration reports of one
/// fixed-`λ` run (`reports[i]` after `i + 1` steps) and replays the run to
/// recover the estimate. Reports no solver steps of its own.
pub fn global_k_from_reports(
    ctx: &TuningContext<'_>,
    lambda: f64,
    criterion: Criterion,
    reports: Vec<RiskReport>,
) -> Result<TuningResult> {
    ctx.require_criterion(criterion)?;
    if reports.is_empty() || reports.iter().enumerate().any(|(i, r)| r.k != i + 1) {
        return Err(Error::InvalidArgument(
            "reports must cover iterations 1, 2, … in order".into(),
        ));
    }
    let started = Instant::now();
    let idx = match criterion {
        Criterion::Discrepancy => {
            let history: Vec<f64> = reports.iter().map(|r| r.residual_norm_sq).collect();
            let op = ctx.solver().operator();
            match first_crossing(&history, op.output_len(), ctx.solver().config().sigma2) {
                Some(i) => i,
                None => select_index(criterion, &reports, |r| r.k as f64)?,
            }
        }
        _ => select_index(criterion, &reports, |r| r.k as f64)?,
    };
    // Iterates are nested in K, so replaying idx + 1 steps reproduces them.
    let (estimate, _) = ctx
        .solver()
        .run_fixed(ctx.observation(), None, lambda, idx + 1)?;
    let selected = reports[idx].clone();
    Ok(TuningResult {
        lambda: LambdaChoice::Global(lambda),
        k: selected.k,
        reports,
        selected,
        estimate,
        solver_steps: 0,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Per-iteration `λ`: each iteration golden-sections the criterion of the
/// one-step-ahead state and commits the winner, stopping once the relative
/// improvement falls to `δ` or `K_max` is reached.
pub fn tune_greedy(ctx: &TuningContext<'_>, config: &TuningConfig) -> Result<TuningResult> {
    config.validate()?;
    greedy(ctx, config, 0)
}

/// Greedy scheme where each candidate is scored after `r` further greedy
/// iterations (truncated to the remaining iteration budget).
pub fn tune_greedy_lookahead(
    ctx: &TuningContext<'_>,
    config: &TuningConfig,
) -> Result<TuningResult> {
    config.validate()?;
    greedy(ctx, config, config.r)
}

/// One greedy iteration from `from`: the best one-step candidate, its
/// score and report, plus every report scored along the way.
fn greedy_iteration(
    ctx: &TuningContext<'_>,
    config: &TuningConfig,
    from: &Candidate,
    depth: usize,
    reports: Option<&mut Vec<RiskReport>>,
) -> Result<(f64, f64, (Candidate, RiskReport))> {
    let criterion = config.criterion;
    let mut reports = reports;
    let (_, score, (lambda, best)) = log_golden_section(
        |lambda| {
            let next = ctx.advance(from, lambda)?;
            let report = ctx.evaluate(&next)?;
            if let Some(r) = reports.as_deref_mut() {
                r.push(report.clone());
            }
            let score = if depth == 0 {
                criterion.score(&report)?
            } else {
                let mut ahead = next.clone();
                for _ in 0..depth {
                    ahead = greedy_iteration(ctx, config, &ahead, 0, None)?.2 .0;
                }
                criterion.score(&ctx.evaluate(&ahead)?)?
            };
            Ok((score, (next, report)))
        },
        config.lambda_bracket,
        config.n_gs,
    )?;
    Ok((lambda, score, best))
}

fn greedy(ctx: &TuningContext<'_>, config: &TuningConfig, r: usize) -> Result<TuningResult> {
    let criterion = config.criterion;
    if criterion == Criterion::Lcurve {
        return Err(Error::UnsupportedCriterion(
            "greedy tuning needs a pointwise criterion",
        ));
    }
    ctx.require_criterion(criterion)?;
    let started = Instant::now();
    let start_steps = ctx.solver_steps();
    let mut committed = ctx.start()?;
    let mut committed_report = ctx.evaluate(&committed)?;
    let mut previous = criterion.score(&committed_report)?;
    let mut reports = Vec::new();
    let mut lambdas = Vec::new();
    for k in 1..=config.k_max {
        let depth = r.min(config.k_max - k);
        let (lambda, _, (next, report)) =
            greedy_iteration(ctx, config, &committed, depth, Some(&mut reports))?;
        let score = criterion.score(&report)?;
        lambdas.push(lambda);
        committed = next;
        committed_report = report;
        let stop = previous - score <= config.delta * score.abs();
        previous = score;
        if stop {
            break;
        }
    }
    Ok(result(
        ctx,
        start_steps,
        started,
        LambdaChoice::PerIteration(lambdas),
        (committed_report, committed.state.estimate),
        reports,
    ))
}
