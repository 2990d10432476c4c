// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use dpbayes::harness::{
    metrics_csv, run_linreg_experiment, run_mechanism, run_nb_experiment, run_verify, summarize, ExperimentConfig,
    Mechanism, StealthMode, Task,
};
use dpbayes::Error;

/// Differentially private Bayesian inference experiments.
///
/// Flags may also be given as `key=value` tokens, e.g.
/// `dpbayes task=linreg b=1 radius=auto seed=7`.
#[derive(Debug, Parser)]
#[command(name = "dpbayes", version)]
struct Cli {
    /// TOML or JSON configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// nb, linreg, mechanism or verify.
    #[arg(long)]
    task: Option<String>,
    /// Comma-separated: none, laplace, fourier, sampler, map.
    #[arg(long, alias = "mechanism", value_delimiter = ',')]
    mechanisms: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    epsilon_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    b_grid: Option<Vec<f64>>,
    /// Single prior precision (shorthand for a one-point b grid).
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, alias = "train-fraction")]
    train_frac: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Privacy level for a single mechanism release.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fourier non-negativity parameter.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    records: Option<usize>,
    /// Network spec (JSON) for the mechanism task.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Parameter grid CSV for the map mechanism.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long)]
    map_delta: Option<f64>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// Truncation radius, or `auto` for 10/sqrt(b).
    #[arg(long)]
    radius: Option<String>,
    /// rerun or clamp.
    #[arg(long)]
    stealth: Option<String>,
}

/// Rewrites bare `key=value` tokens into `--key value`.
fn normalize_args(args: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out = Vec::new();
    for (k, a) in args.into_iter().enumerate() {
        match a.split_once('=') {
            Some((key, value)) if k > 0 && !a.starts_with('-') && !key.is_empty() => {
                out.push(format!("--{}", key.replace('_', "-")));
                out.push(value.to_string());
            }
            _ => out.push(a),
        }
    }
    out
}

fn build_config(cli: Cli) -> dpbayes::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = &cli.task {
        cfg.task = t.parse::<Task>()?;
    }
    if let Some(m) = &cli.mechanisms {
        cfg.mechanisms = m.iter().map(|s| s.parse::<Mechanism>()).collect::<dpbayes::Result<_>>()?;
    }
    if let Some(g) = cli.epsilon_grid {
        cfg.epsilon_grid = g;
    }
    if let Some(g) = cli.b_grid {
        cfg.b_grid = g;
    }
    if let Some(b) = cli.b {
        cfg.b_grid = vec![b];
    }
    if let Some(r) = cli.repeats {
        cfg.repeats = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = cli.train_frac {
        cfg.train_fraction = Some(f);
    }
    if let Some(o) = cli.out {
        cfg.out = Some(o);
    }
    if let Some(e) = cli.epsilon {
        cfg.mechanism.epsilon = e;
        if cfg.task == Task::Nb {
            cfg.epsilon_grid = vec![e];
        }
    }
    if let Some(t) = cli.t {
        cfg.mechanism.t = t;
        cfg.nb.t = t;
    }
    if let Some(s) = cli.samples {
        match cfg.task {
            Task::Linreg => cfg.linreg.samples = s,
            Task::Mechanism => cfg.mechanism.samples = s,
            _ => cfg.nb.samples = s,
        }
    }
    if let Some(f) = cli.features {
        match cfg.task {
            Task::Linreg => cfg.linreg.features = f,
            _ => cfg.nb.features = f,
        }
    }
    if let Some(n) = cli.records {
        match cfg.task {
            Task::Linreg => cfg.linreg.records = n,
            _ => cfg.nb.records = n,
        }
    }
    if let Some(d) = cli.data {
        match cfg.task {
            Task::Linreg => cfg.linreg.data = Some(d),
            Task::Mechanism => cfg.mechanism.data = Some(d),
            _ => cfg.nb.data = Some(d),
        }
    }
    if let Some(n) = cli.network {
        cfg.mechanism.network = Some(n);
    }
    if let Some(g) = cli.grid {
        cfg.mechanism.grid = Some(g);
    }
    if let Some(d) = cli.map_delta {
        cfg.mechanism.map_delta = Some(d);
    }
    if let Some(s) = cli.sigma2 {
        cfg.linreg.sigma2 = s;
    }
    if let Some(r) = cli.radius {
        cfg.linreg.radius = match r.as_str() {
            "auto" => None,
            v => Some(v.parse::<f64>().map_err(|e| Error::Parse(format!("radius: {e}")))?),
        };
    }
    if let Some(s) = cli.stealth {
        cfg.nb.stealth = s.parse::<StealthMode>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(path: Option<&Path>, text: &str) -> dpbayes::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}.{name}.csv"))
}

fn print_summary(rows: &[dpbayes::harness::MetricsRow], metric: &str) {
    for ((mech, param), (mean, se)) in summarize(rows, metric) {
        eprintln!("{mech:>8} {:>8} {metric} {mean:.4} ± {se:.4}", f64::from_bits(param));
    }
}

fn run(cfg: &ExperimentConfig) -> dpbayes::Result<bool> {
    let out = cfg.out.as_deref();
    match cfg.task {
        Task::Nb => {
            let res = run_nb_experiment(cfg)?;
            emit(out, &metrics_csv(&res.rows))?;
            print_summary(&res.rows, "accuracy");
            if res.stealth_reruns > 0 {
                eprintln!("fourier releases repeated after negative counts: {}", res.stealth_reruns);
            }
            if res.sampler_fallbacks > 0 {
                eprintln!("sampler runs using the constant predictor (omega >= 1/2): {}", res.sampler_fallbacks);
            }
            Ok(true)
        }
        Task::Linreg => {
            let res = run_linreg_experiment(cfg)?;
            emit(out, &metrics_csv(&res.rows))?;
            print_summary(&res.rows, "mse");
            for (b, p) in &res.privacy {
                eprintln!("b = {b}: L = {:.4}, epsilon per unit rho = {:.4}", p.lipschitz, p.epsilon_per_unit_rho);
            }
            Ok(true)
        }
        Task::Mechanism => {
            let docs = run_mechanism(cfg)?;
            for (k, (name, text)) in docs.iter().enumerate() {
                match out {
                    Some(p) if k == 0 => emit(Some(p), text)?,
                    Some(p) => emit(Some(&sibling(p, name)), text)?,
                    None => {
                        if docs.len() > 1 {
                            println!("# {name}");
                        }
                        emit(None, text)?;
                    }
                }
            }
            Ok(true)
        }
        Task::Verify => {
            let report = run_verify(cfg.seed);
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Parse(e.to_string()))?;
            emit(out, &(json + "\n"))?;
            for c in &report.checks {
                eprintln!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(normalize_args(std::env::args())) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = match build_config(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
