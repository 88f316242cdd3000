//! Experiment runner: configuration, degradation synthesis, tuning
//! dispatch and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dictionary::HaarFrame;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::operators::{BlurKernel, DegradationOperator};
use crate::pgm::{encode_pgm, load_pgm, write_atomic};
use crate::risk::{RiskReport, LCURVE_MIN_SAMPLES};
use crate::solvers::{gaussian_image, Algorithm, Solver, SolverConfig};
use crate::tuning::{
    global_k_from_reports, global_lambda_from_sweep, lambda_sweep, tune_global_lambda,
    tune_greedy, tune_greedy_lookahead, Criterion, TuningConfig, TuningContext, TuningResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelName {
    Ker1,
    Ker2,
    Ker3,
    Ker4,
    Ker5,
}

impl KernelName {
    pub fn kernel(self) -> BlurKernel {
        match self {
            Self::Ker1 => BlurKernel::ker1(),
            Self::Ker2 => BlurKernel::ker2(),
            Self::Ker3 => BlurKernel::ker3(),
            Self::Ker4 => BlurKernel::ker4(),
            Self::Ker5 => BlurKernel::ker5(),
        }
    }
}

impl FromStr for KernelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ker1" => Ok(Self::Ker1),
            "ker2" => Ok(Self::Ker2),
            "ker3" => Ok(Self::Ker3),
            "ker4" => Ok(Self::Ker4),
            "ker5" => Ok(Self::Ker5),
            _ => Err(Error::Config(format!("unknown kernel {s:?}"))),
        }
    }
}

impl std::fmt::Display for KernelName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ker{}", *self as u8 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GlobalLambda,
    GlobalK,
    Greedy,
    Lookahead,
    All,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Self::GlobalLambda => "global-lambda",
            Self::GlobalK => "global-k",
            Self::Greedy => "greedy",
            Self::Lookahead => "lookahead",
            Self::All => "all",
        }
    }

    fn expand(self) -> Vec<Method> {
        match self {
            Self::All => vec![Self::GlobalLambda, Self::GlobalK, Self::Greedy, Self::Lookahead],
            m => vec![m],
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        [Self::GlobalLambda, Self::GlobalK, Self::Greedy, Self::Lookahead, Self::All]
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// One criterion, or every criterion the method supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriterionChoice {
    All,
    One(Criterion),
}

impl CriterionChoice {
    fn expand(self) -> Vec<Criterion> {
        match self {
            Self::All => Criterion::ALL.to_vec(),
            Self::One(c) => vec![c],
        }
    }
}

impl FromStr for CriterionChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self::All);
        }
        s.parse()
            .map(Self::One)
            .map_err(|_| Error::Config(format!("unknown criterion {s:?}")))
    }
}

impl std::fmt::Display for CriterionChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::All => f.write_str("all"),
            Self::One(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub problem: Option<u8>,
    pub kernel: KernelName,
    pub sigma2: f64,
    pub decimation: usize,
    pub algorithm: Algorithm,
    pub image: Option<PathBuf>,
    pub method: Method,
    pub criterion: CriterionChoice,
    pub noise_seed: u64,
    pub probe_seed: u64,
    /// Iterations for global `λ` tuning.
    pub k: usize,
    /// Threshold for global `K` tuning.
    pub lambda: f64,
    pub tuning: TuningConfig,
    pub out: PathBuf,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let mut spec = Self {
            problem: None,
            kernel: KernelName::Ker1,
            sigma2: 2.0,
            decimation: 1,
            algorithm: Algorithm::Pcd,
            image: None,
            method: Method::GlobalLambda,
            criterion: CriterionChoice::All,
            noise_seed: 1,
            probe_seed: 2,
            k: 43,
            lambda: 0.065,
            tuning: TuningConfig::default(),
            out: PathBuf::from("out"),
        };
        spec.apply_problem(1).expect("preset 1 exists");
        spec
    }
}

impl ExperimentSpec {
    /// Kernel, noise level, decimation and algorithm of a numbered problem.
    pub fn apply_problem(&mut self, id: u8) -> Result<()> {
        let (kernel, sigma2, decimation, algorithm) = match id {
            1 => (KernelName::Ker1, 2.0, 1, Algorithm::Pcd),
            2 => (KernelName::Ker2, 0.308, 1, Algorithm::Pcd),
            3 => (KernelName::Ker3, 49.0, 1, Algorithm::Pcd),
            4 => (KernelName::Ker4, 49.0, 2, Algorithm::Ssf),
            5 => (KernelName::Ker5, 16.0, 2, Algorithm::Ssf),
            _ => return Err(Error::Config(format!("unknown problem {id}; expected 1-5"))),
        };
        self.problem = Some(id);
        self.kernel = kernel;
        self.sigma2 = sigma2;
        self.decimation = decimation;
        self.algorithm = algorithm;
        Ok(())
    }

    /// Sets one `key = value` entry. Keys accept `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "problem" => self.apply_problem(num(&key, value)?)?,
            "kernel" => self.kernel = value.parse()?,
            "sigma2" => self.sigma2 = num(&key, value)?,
            "decimation" => self.decimation = num(&key, value)?,
            "algorithm" => {
                self.algorithm = value
                    .parse()
                    .map_err(|_| Error::Config(format!("unknown algorithm {value:?}")))?
            }
            "image" => self.image = Some(PathBuf::from(value)),
            "method" => self.method = value.parse()?,
            "criterion" => self.criterion = value.parse()?,
            "noise_seed" => self.noise_seed = num(&key, value)?,
            "probe_seed" => self.probe_seed = num(&key, value)?,
            "lambda_lo" => self.tuning.lambda_bracket.0 = num(&key, value)?,
            "lambda_hi" => self.tuning.lambda_bracket.1 = num(&key, value)?,
            "n_gs" => self.tuning.n_gs = num(&key, value)?,
            "kmax" | "k_max" => self.tuning.k_max = num(&key, value)?,
            "delta" => self.tuning.delta = num(&key, value)?,
            "r" => self.tuning.r = num(&key, value)?,
            "k" => self.k = num(&key, value)?,
            "lambda" => self.lambda = num(&key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies entries in order, except that `problem` goes first so
    /// explicit settings override the preset.
    pub fn apply_all<'a>(&mut self, entries: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        let entries: Vec<_> = entries.into_iter().collect();
        let is_problem = |k: &str| k.trim().eq_ignore_ascii_case("problem");
        for (k, v) in entries.iter().filter(|(k, _)| is_problem(k)) {
            self.set(k, v)?;
        }
        for (k, v) in entries.iter().filter(|(k, _)| !is_problem(k)) {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("σ² must be positive, got {}", self.sigma2)));
        }
        if !matches!(self.decimation, 1 | 2) {
            return Err(Error::Config(format!(
                "decimation must be 1 or 2, got {}",
                self.decimation
            )));
        }
        if self.image.is_none() {
            return Err(Error::Config("no input image given".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        self.tuning.validate()
    }
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
        if k.trim().is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        entries.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(entries)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    parse_config(&fs::read_to_string(path)?)
}

/// `y = Hx + w` with `w ~ N(0, σ²I)` drawn from `noise_seed`.
pub fn synthesize_degraded(
    x: &Image,
    op: &DegradationOperator,
    sigma2: f64,
    noise_seed: u64,
) -> Result<Image> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!("σ² must be nonnegative, got {sigma2}")));
    }
    let mut y = op.apply(x)?;
    if sigma2 > 0.0 {
        let (w, h) = op.output_dims();
        y.add_scaled(sigma2.sqrt(), &gaussian_image(w, h, noise_seed));
    }
    Ok(y)
}

/// One row of `selection.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub method: &'static str,
    pub criterion: Criterion,
    pub lambda: f64,
    pub k: usize,
    pub true_mse: Option<f64>,
    pub quality_db: Option<f64>,
    pub solver_steps: usize,
    pub lambda_schedule: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub files: Vec<PathBuf>,
    pub selections: Vec<Selection>,
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn risk_row(out: &mut String, run: &str, r: &RiskReport) {
    let _ = writeln!(
        out,
        "{run},{},{},{},{},{},{},{},{},{},{}",
        num(r.lambda),
        r.k,
        num(r.gsure),
        num(r.projected_gsure),
        opt(r.gcv),
        num(r.lcurve_x),
        num(r.lcurve_y),
        num(r.discrepancy),
        opt(r.true_mse),
        opt(r.quality_db),
    );
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    fn discard(&self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

struct Collected {
    risk_csv: String,
    selections: Vec<Selection>,
    images: Vec<(String, Image)>,
    notes: Vec<String>,
}

impl Collected {
    fn record(&mut self, method: Method, criterion: Criterion, result: &TuningResult) {
        let run = format!("{}/{}", method.name(), criterion);
        for r in &result.reports {
            risk_row(&mut self.risk_csv, &run, r);
        }
        let schedule = match &result.lambda {
            crate::tuning::LambdaChoice::Global(l) => vec![*l],
            crate::tuning::LambdaChoice::PerIteration(v) => v.clone(),
        };
        self.selections.push(Selection {
            method: method.name(),
            criterion,
            lambda: result.selected.lambda,
            k: result.k,
            true_mse: result.selected.true_mse,
            quality_db: result.selected.quality_db,
            solver_steps: result.solver_steps,
            lambda_schedule: schedule,
        });
        self.images
            .push((format!("{}_{}.pgm", method.name(), criterion), result.estimate.clone()));
        self.notes.push(format!(
            "{run}: lambda = {:.6e}, K = {}, steps = {}, time = {:.2} s",
            result.selected.lambda, result.k, result.solver_steps, result.wall_time
        ));
    }
}

fn run_methods(spec: &ExperimentSpec, ctx: &TuningContext<'_>, c: &mut Collected) -> Result<()> {
    let criteria = spec.criterion.expand();
    for method in spec.method.expand() {
        match method {
            Method::GlobalLambda => {
                let grid = spec.tuning.lambda_grid();
                let before = ctx.solver_steps();
                let sweep = lambda_sweep(ctx, spec.k, &grid)?;
                let sweep_steps = ctx.solver_steps() - before;
                for (r, _) in &sweep {
                    risk_row(&mut c.risk_csv, "global-lambda/grid", r);
                }
                for &criterion in &criteria {
                    let result = if criterion == Criterion::Lcurve {
                        let mut r = global_lambda_from_sweep(criterion, sweep.clone())?;
                        r.solver_steps = sweep_steps;
                        r
                    } else {
                        let config = TuningConfig {
                            criterion,
                            ..spec.tuning.clone()
                        };
                        tune_global_lambda(ctx, spec.k, &config)?
                    };
                    c.record(method, criterion, &result);
                }
            }
            Method::GlobalK => {
                let before = ctx.solver_steps();
                let mut cand = ctx.start()?;
                let mut reports = Vec::with_capacity(spec.tuning.k_max);
                for _ in 0..spec.tuning.k_max {
                    cand = ctx.advance(&cand, spec.lambda)?;
                    reports.push(ctx.evaluate(&cand)?);
                }
                let run_steps = ctx.solver_steps() - before;
                for &criterion in &criteria {
                    if criterion == Criterion::Lcurve
                        && spec.criterion == CriterionChoice::All
                        && reports.len() < LCURVE_MIN_SAMPLES
                    {
                        c.notes.push(format!(
                            "global-k/lcurve skipped: {} iterations, the L-curve needs {LCURVE_MIN_SAMPLES}",
                            reports.len()
                        ));
                        continue;
                    }
                    let mut result =
                        global_k_from_reports(ctx, spec.lambda, criterion, reports.clone())?;
                    result.solver_steps = run_steps;
                    c.record(method, criterion, &result);
                }
            }
            Method::Greedy | Method::Lookahead => {
                for &criterion in &criteria {
                    if criterion == Criterion::Lcurve {
                        c.notes.push(format!(
                            "{}/lcurve skipped: the L-curve is not a per-candidate score",
                            method.name()
                        ));
                        continue;
                    }
                    let config = TuningConfig {
                        criterion,
                        ..spec.tuning.clone()
                    };
                    let result = if method == Method::Greedy {
                        tune_greedy(ctx, &config)?
                    } else {
                        tune_greedy_lookahead(ctx, &config)?
                    };
                    c.record(method, criterion, &result);
                }
            }
            Method::All => unreachable!("expanded above"),
        }
    }
    Ok(())
}

fn summary(spec: &ExperimentSpec, op: &DegradationOperator, c_major: f64, collected: &Collected) -> String {
    let mut s = String::new();
    let cond = op.condition_report();
    let _ = writeln!(s, "image = {}", spec.image.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
    let _ = writeln!(s, "problem = {}", spec.problem.map(|p| p.to_string()).unwrap_or_else(|| "custom".into()));
    let _ = writeln!(s, "kernel = {}", spec.kernel);
    let _ = writeln!(s, "sigma2 = {}", spec.sigma2);
    let _ = writeln!(s, "decimation = {}", spec.decimation);
    let _ = writeln!(s, "algorithm = {}", spec.algorithm);
    let _ = writeln!(s, "method = {}", spec.method.name());
    let _ = writeln!(s, "criterion = {}", spec.criterion);
    let _ = writeln!(s, "noise_seed = {}", spec.noise_seed);
    let _ = writeln!(s, "probe_seed = {}", spec.probe_seed);
    let _ = writeln!(s, "k = {}", spec.k);
    let _ = writeln!(s, "lambda = {}", spec.lambda);
    let _ = writeln!(s, "lambda_lo = {}", spec.tuning.lambda_bracket.0);
    let _ = writeln!(s, "lambda_hi = {}", spec.tuning.lambda_bracket.1);
    let _ = writeln!(s, "n_gs = {}", spec.tuning.n_gs);
    let _ = writeln!(s, "kmax = {}", spec.tuning.k_max);
    let _ = writeln!(s, "delta = {}", spec.tuning.delta);
    let _ = writeln!(s, "r = {}", spec.tuning.r);
    let _ = writeln!(s);
    let _ = writeln!(s, "# operator");
    let _ = writeln!(s, "# rank deficient: {}", cond.rank_deficient);
    let _ = writeln!(s, "# condition number: {:e}", cond.effective_condition);
    let _ = writeln!(s, "# condition on range: {:e}", cond.range_condition);
    let _ = writeln!(s, "# SSF majorizer c: {c_major:.6}");
    let _ = writeln!(s, "#");
    let _ = writeln!(s, "# runs");
    for n in &collected.notes {
        let _ = writeln!(s, "# {n}");
    }
    s
}

/// Runs the configured tuning methods and writes `risk_curve.csv`,
/// `selection.csv`, one PGM per selection plus `degraded.pgm`, and
/// `summary.txt` into `spec.out`. Files written before a failure are
/// removed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let image_path = spec.image.as_ref().expect("validated");
    let x = load_pgm(image_path)?;
    let (w, h) = x.dims();
    let op = DegradationOperator::new(spec.kernel.kernel(), w, h, spec.decimation)?;
    let frame = HaarFrame::new(w, h);
    let y = synthesize_degraded(&x, &op, spec.sigma2, spec.noise_seed)?;
    let solver = Solver::new(&op, &frame, SolverConfig::new(spec.algorithm, spec.sigma2))?;
    let c_major = solver.majorizer();
    let ctx = TuningContext::new(solver, y.clone(), spec.probe_seed)?
        .with_gcv(spec.probe_seed)?
        .with_truth(x)?;

    let quality = if spec.decimation == 1 { "isnr_db" } else { "psnr_db" };
    let mut collected = Collected {
        risk_csv: format!(
            "run,lambda,k,gsure,projected_gsure,gcv,lcurve_x,lcurve_y,discrepancy,true_mse,{quality}\n"
        ),
        selections: Vec::new(),
        images: Vec::new(),
        notes: Vec::new(),
    };
    run_methods(spec, &ctx, &mut collected)?;

    let mut selection_csv =
        format!("method,criterion,lambda,k,true_mse,{quality},solver_steps,lambda_schedule\n");
    for s in &collected.selections {
        let schedule: Vec<String> = s.lambda_schedule.iter().map(|&l| num(l)).collect();
        let _ = writeln!(
            selection_csv,
            "{},{},{},{},{},{},{},{}",
            s.method,
            s.criterion,
            num(s.lambda),
            s.k,
            opt(s.true_mse),
            opt(s.quality_db),
            s.solver_steps,
            schedule.join(";"),
        );
    }
    let summary_text = summary(spec, &op, c_major, &collected);

    let created_dir = !spec.out.exists();
    fs::create_dir_all(&spec.out)?;
    let mut outputs = Outputs {
        dir: spec.out.clone(),
        written: Vec::new(),
    };
    let written = (|| -> Result<()> {
        outputs.write("risk_curve.csv", collected.risk_csv.as_bytes())?;
        outputs.write("selection.csv", selection_csv.as_bytes())?;
        outputs.write("degraded.pgm", &encode_pgm(&y))?;
        for (name, img) in &collected.images {
            outputs.write(name, &encode_pgm(img))?;
        }
        outputs.write("summary.txt", summary_text.as_bytes())
    })();
    if let Err(e) = written {
        outputs.discard();
        if created_dir {
            let _ = fs::remove_dir(&spec.out);
        }
        return Err(e);
    }
    Ok(ExperimentOutput {
        files: outputs.written,
        selections: collected.selections,
    })
}
