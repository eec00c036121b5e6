//! `specstab`: spectral gaps, structured distances to ambiguity, clustering and
//! the chain and random-centers experiments from the command line.
//!
//! Exit codes: 0 ok, 2 unreadable or malformed input, 3 bad arguments,
//! 4 no admissible extremizer found, 5 internal error.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use specstab::experiments::{chain_sweep, frequency_experiment, sbm_sweep, CentersSpec};
use specstab::io::read_graph;
use specstab::{compute_sda, spectral_gap, ClusterOptions, Error, OuterConfig, WeightMatrix};

use output::{fmt_f, write_out};

#[derive(Parser, Debug)]
#[command(name = "specstab", version, about = "Spectral clustering stability indicators")]
struct Cli {
    /// Also write a run manifest (arguments, seed, settings, version, wall time) to this file.
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// kth spectral gap of L(W) and its scaled form gap/√2.
    Gap(GapArgs),
    /// Structured distance to ambiguity δ_k(W) with its extremizer.
    Sda(SdaArgs),
    /// Unnormalized spectral clustering into k groups.
    Cluster(ClusterArgs),
    /// k_opt of both indicators along the chain model or sampled SBMs.
    Sweep(SweepArgs),
    /// Frequency of each k_opt over random-centers samples.
    Freq(FreqArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Minimized gap counts as zero below this, relative to max(1, λ_{k+1}).
    #[arg(long)]
    tol_f: Option<f64>,
    /// Relative width at which the ε bracket stops shrinking.
    #[arg(long, visible_alias = "tol")]
    tol_eps: Option<f64>,
    /// Initial Euler step of the inner flow.
    #[arg(long)]
    h0: Option<f64>,
    /// Comma-separated penalty values starting at 0, e.g. 0,10,100,1000.
    #[arg(long, value_delimiter = ',')]
    c_schedule: Option<Vec<f64>>,
    /// Extra random starting directions.
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SolverArgs {
    fn config(&self) -> Result<OuterConfig, Failure> {
        let mut c = OuterConfig { seed: self.seed, ..OuterConfig::default() };
        if let Some(v) = self.tol_f {
            c.tol_f = v;
        }
        if let Some(v) = self.tol_eps {
            c.tol_eps = v;
        }
        if let Some(v) = self.h0 {
            c.inner.h0 = v;
        }
        if let Some(v) = &self.c_schedule {
            c.c_schedule = v.clone();
        }
        if let Some(v) = self.restarts {
            c.restarts = v;
        }
        c.validate().map_err(|e| Failure::Argument(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct GapArgs {
    /// Graph file (.mtx or .json edge list).
    graph: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct SdaArgs {
    graph: PathBuf,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Include the outer iteration trace.
    #[arg(long)]
    trace: bool,
    /// Write the full report here and print only a summary.
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    graph: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embed with the eigenvectors of the k smallest nonzero eigenvalues.
    #[arg(long)]
    skip_zero: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Model {
    /// Reduced chain model, swept over μ1.
    Chain,
    /// Sampled chain SBM, swept over p1.
    Sbm,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum, default_value = "chain")]
    model: Model,
    /// Number of communities.
    #[arg(long, default_value_t = 8)]
    r: usize,
    /// Community size (chain: pair weight; SBM: vertices per community).
    #[arg(long, default_value_t = 100.0)]
    size: f64,
    /// Swept parameter values: `start:stop:step` or a comma-separated list.
    #[arg(long, default_value = "2:100:2")]
    values: String,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    #[command(flatten)]
    solver: SolverArgs,
    /// Directory for `sweep.csv` (or `sweep.json`) and `manifest.json`; stdout otherwise.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct FreqArgs {
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_tol: f64,
    /// Points per sample.
    #[arg(long, default_value_t = 120)]
    n: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,8,16,24,32,40")]
    centers: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    k_min: usize,
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, short, value_name = "FILE")]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug)]
enum Failure {
    Parse(String),
    Argument(String),
    Infeasible(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Argument(_) => 3,
            Failure::Infeasible(_) => 4,
            Failure::Internal(_) => 5,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Argument(m) | Failure::Infeasible(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. } => Failure::Parse(e.to_string()),
            Error::KOutOfRange { .. } | Error::InvalidInput(_) => Failure::Argument(e.to_string()),
            Error::PenaltyScheduleExhausted { .. } | Error::NoUpperBound(_) => Failure::Infeasible(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(format!("write failed: {e}"))
    }
}

/// Everything needed to repeat a run.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    input: Option<String>,
    seed: Option<u64>,
    config: Option<OuterConfig>,
    version: String,
    threads: usize,
    wall_time_s: f64,
}

struct Run {
    input: Option<String>,
    seed: Option<u64>,
    config: Option<OuterConfig>,
}

fn load(path: &Path) -> Result<WeightMatrix, Failure> {
    read_graph(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn cmd_gap(a: &GapArgs) -> Result<Run, Failure> {
    let w = load(&a.graph)?;
    let g = spectral_gap(&w, a.k)?;
    let text = match a.format {
        Format::Json => output::json(&g)?,
        Format::Csv => format!(
            "k,lambda_k,lambda_k1,gap,scaled_gap\n{},{},{},{},{}\n",
            g.k,
            fmt_f(g.lambda_k),
            fmt_f(g.lambda_k1),
            fmt_f(g.gap),
            fmt_f(g.scaled_gap)
        ),
    };
    write_out(None, &text)?;
    Ok(Run { input: Some(a.graph.display().to_string()), seed: None, config: None })
}

fn cmd_sda(a: &SdaArgs) -> Result<Run, Failure> {
    let w = load(&a.graph)?;
    let config = a.solver.config()?;
    let r = compute_sda(&w, a.k, &config)?;
    let report = r.report(a.trace);
    let full = match a.format {
        Format::Json => output::json(&report)?,
        Format::Csv => output::sda_csv(&report),
    };
    match &a.output {
        Some(path) => {
            write_out(Some(path), &full)?;
            let summary = match a.format {
                Format::Json => output::json(&output::SdaSummary::from(&report))?,
                Format::Csv => output::sda_summary_csv(&report),
            };
            write_out(None, &summary)?;
        }
        None => write_out(None, &full)?,
    }
    if !r.feasible {
        return Err(Failure::Infeasible(format!(
            "no nonnegative extremizer found (min weight {:e})",
            r.w_star.min_value()
        )));
    }
    Ok(Run { input: Some(a.graph.display().to_string()), seed: Some(config.seed), config: Some(config) })
}

fn cmd_cluster(a: &ClusterArgs) -> Result<Run, Failure> {
    let w = load(&a.graph)?;
    let options = ClusterOptions { skip_zero: a.skip_zero, ..ClusterOptions::default() };
    let c = specstab::cluster::spectral_cluster_with(&w, a.k, a.seed, &options)?;
    let text = match a.format {
        Format::Json => output::json(&c)?,
        Format::Csv => {
            let mut s = String::from("vertex,label\n");
            for (v, l) in c.labels.iter().enumerate() {
                s.push_str(&format!("{v},{l}\n"));
            }
            s
        }
    };
    write_out(None, &text)?;
    Ok(Run { input: Some(a.graph.display().to_string()), seed: Some(a.seed), config: None })
}

/// `start:stop:step` or `v1,v2,…`.
fn parse_values(s: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Argument(format!("cannot parse values '{s}'"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts[..] {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || !(stop >= start) {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| start + i as f64 * step).collect()
        }
        [_] => s.split(',').map(num).collect::<Result<Vec<f64>, _>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

fn cmd_sweep(a: &SweepArgs) -> Result<Run, Failure> {
    if a.k_min == 0 || a.k_min > a.k_max {
        return Err(Failure::Argument(format!("empty k range {}..={}", a.k_min, a.k_max)));
    }
    let values = parse_values(&a.values)?;
    let config = a.solver.config()?;
    let points = match a.model {
        Model::Chain => chain_sweep(a.r, a.size, &values, a.k_min, a.k_max, &config)?,
        Model::Sbm => {
            if a.size.fract() != 0.0 || a.size < 1.0 {
                return Err(Failure::Argument("SBM community size must be a positive integer".into()));
            }
            sbm_sweep(a.r, a.size as usize, &values, a.solver.seed, a.k_min, a.k_max, &config)?
        }
    };
    let text = match a.format {
        Format::Json => output::json(&points)?,
        Format::Csv => output::sweep_csv(&points, a.k_min, a.k_max, a.model == Model::Chain),
    };
    let path = a.output_dir.as_ref().map(|d| {
        d.join(match a.format {
            Format::Json => "sweep.json",
            Format::Csv => "sweep.csv",
        })
    });
    if let Some(d) = &a.output_dir {
        std::fs::create_dir_all(d).map_err(|e| Failure::Argument(format!("{}: {e}", d.display())))?;
    }
    write_out(path.as_deref(), &text)?;
    Ok(Run { input: None, seed: Some(config.seed), config: Some(config) })
}

fn cmd_freq(a: &FreqArgs) -> Result<Run, Failure> {
    let spec = CentersSpec {
        centers: a.centers.clone(),
        n: a.n,
        alpha: a.alpha,
        weight_tol: a.weight_tol,
        seed: a.solver.seed,
    };
    let config = a.solver.config()?;
    let table = frequency_experiment(&spec, a.samples, a.k_min, a.k_max, &config)?;
    let text = match a.format {
        Format::Json => output::json(&table)?,
        Format::Csv => output::freq_csv(&table),
    };
    write_out(a.output.as_deref(), &text)?;
    Ok(Run { input: Some(serde_json::to_string(&spec).expect("spec serializes")), seed: Some(spec.seed), config: Some(config) })
}

fn set_threads() -> Result<usize, Failure> {
    let Ok(v) = std::env::var("SPECSTAB_THREADS") else {
        return Ok(rayon::current_num_threads());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Argument(format!("SPECSTAB_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Internal(e.to_string()))?;
    Ok(n)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let threads = set_threads()?;
    let start = Instant::now();
    let (name, run) = match &cli.command {
        Command::Gap(a) => ("gap", cmd_gap(a)?),
        Command::Sda(a) => ("sda", cmd_sda(a)?),
        Command::Cluster(a) => ("cluster", cmd_cluster(a)?),
        Command::Sweep(a) => ("sweep", cmd_sweep(a)?),
        Command::Freq(a) => ("freq", cmd_freq(a)?),
    };
    let manifest = RunManifest {
        command: name.into(),
        args: std::env::args().skip(1).collect(),
        input: run.input,
        seed: run.seed,
        config: run.config,
        version: env!("CARGO_PKG_VERSION").into(),
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let dir_manifest = match &cli.command {
        Command::Sweep(SweepArgs { output_dir: Some(d), .. }) => Some(d.join("manifest.json")),
        _ => None,
    };
    for path in cli.manifest.iter().chain(dir_manifest.iter()) {
        write_out(Some(path), &output::json(&manifest)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
