use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use shrinktune::experiment::{load_config, run_experiment, ExperimentSpec};

/// Tune λ and K of iterative-shrinkage deblurring / scale-up on a PGM
/// image and write risk curves, selections and reconstructions.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Flat `key = value` config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem preset 1-5.
    #[arg(long)]
    problem: Option<u8>,
    /// Binary PGM (P5) original image.
    #[arg(long)]
    image: Option<PathBuf>,
    /// global-lambda, global-k, greedy, lookahead or all.
    #[arg(long)]
    method: Option<String>,
    /// projected_gsure, gsure, gcv, lcurve, discrepancy, oracle_mse or all.
    #[arg(long)]
    criterion: Option<String>,
    #[arg(long)]
    noise_seed: Option<u64>,
    #[arg(long)]
    probe_seed: Option<u64>,
    #[arg(long)]
    lambda_lo: Option<f64>,
    #[arg(long)]
    lambda_hi: Option<f64>,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    r: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any other config key, e.g. `--set sigma2=8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Cli {
    fn overrides(&self) -> Vec<(String, String)> {
        let mut v = Vec::new();
        let mut push = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push((k.to_string(), val));
            }
        };
        push("problem", self.problem.map(|p| p.to_string()));
        push("image", self.image.as_ref().map(|p| p.display().to_string()));
        push("method", self.method.clone());
        push("criterion", self.criterion.clone());
        push("noise_seed", self.noise_seed.map(|s| s.to_string()));
        push("probe_seed", self.probe_seed.map(|s| s.to_string()));
        push("lambda_lo", self.lambda_lo.map(|s| s.to_string()));
        push("lambda_hi", self.lambda_hi.map(|s| s.to_string()));
        push("kmax", self.kmax.map(|s| s.to_string()));
        push("delta", self.delta.map(|s| s.to_string()));
        push("r", self.r.map(|s| s.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        v
    }
}

fn run(cli: &Cli) -> shrinktune::Result<()> {
    let mut spec = ExperimentSpec::default();
    if let Some(path) = &cli.config {
        let entries = load_config(path)?;
        spec.apply_all(entries.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    }
    let mut extra = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| shrinktune::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        extra.push((k.to_string(), v.to_string()));
    }
    extra.extend(cli.overrides());
    spec.apply_all(extra.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;

    let output = run_experiment(&spec)?;
    for s in &output.selections {
        let quality = s
            .quality_db
            .map(|q| format!("{q:.3} dB"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<14} {:<16} lambda={:<12.5e} K={:<4} {}",
            s.method,
            s.criterion.name(),
            s.lambda, s.k, quality
        );
    }
    println!("wrote {} files to {}", output.files.len(), spec.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shrinktune: {e}");
            ExitCode::FAILURE
        }
    }
}
