//! `hysure`: simulate hyperspectral scenes, select subspace rank and sparsity
//! threshold by SURE, compare sparse models, and run benchmark tables.
//!
//! Machine-readable output goes to stdout; progress and logs to stderr.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hysure::{
    io, model_select, risk_surface, select_rank, sim::derive_seed, simulate_scene_with,
    AbundanceMode, Config, Cube, ModelSpec, Noise, SceneConfig, WaveletSpec,
};
use rayon::prelude::*;
use std::fmt::Write as FmtWrite;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "hysure",
    version,
    about = "Hyperspectral subspace rank and sparsity selection by SURE"
)]
struct Cli {
    /// Worker threads for the grid search (fallback: HYSURE_THREADS, then all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated scene (clean + noisy cubes + manifest)
    Simulate(SimulateArgs),
    /// Select rank and threshold for a cube by minimizing SURE
    Rank(RankArgs),
    /// Compare the seven sparse models by minimum SURE
    ModelSelect(ModelSelectArgs),
    /// Median rank estimates over a (rank, SNR) grid of simulated scenes
    Bench(BenchArgs),
    /// Estimate per-band noise variances by multiple regression
    NoiseEst(NoiseEstArgs),
}

/// Scene dimensions in `HxWxB` form, e.g. `128x128x224`.
#[derive(Debug, Clone, Copy)]
struct Size {
    height: usize,
    width: usize,
    bands: usize,
}

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split('x').collect();
        if parts.len() != 3 {
            return Err(format!("'{s}' is not HxWxB"));
        }
        let parse = |t: &str| -> std::result::Result<usize, String> {
            let v: usize = t.parse().map_err(|_| format!("'{t}' is not a number"))?;
            if v == 0 {
                return Err("dimensions must be positive".into());
            }
            Ok(v)
        };
        Ok(Size {
            height: parse(parts[0])?,
            width: parse(parts[1])?,
            bands: parse(parts[2])?,
        })
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct GridArgs {
    /// Spatial wavelet tap count (2 = Haar)
    #[arg(long, default_value_t = 8)]
    taps: usize,

    /// Spatial wavelet decomposition levels
    #[arg(long, default_value_t = 5)]
    levels: usize,

    /// Spectral wavelet tap count (models 1 and 3)
    #[arg(long, default_value_t = 2)]
    spectral_taps: usize,

    /// Spectral wavelet decomposition levels (models 1 and 3)
    #[arg(long, default_value_t = 5)]
    spectral_levels: usize,

    /// Largest threshold on the grid
    #[arg(long, default_value_t = 4.0)]
    lambda_max: f64,

    /// Number of evenly spaced thresholds on [0, lambda-max]
    #[arg(long, default_value_t = 201, value_parser = clap::value_parser!(u32).range(2..))]
    lambda_steps: u32,

    /// Cap on the rank grid (default: min(pixels, bands))
    #[arg(long)]
    rank_max: Option<usize>,
}

impl GridArgs {
    fn build(&self, cube: Option<&Cube>) -> Result<Config> {
        let mut cfg = Config {
            spatial_wavelet: WaveletSpec::daubechies(self.taps, self.levels)?,
            spectral_wavelet: WaveletSpec::daubechies(self.spectral_taps, self.spectral_levels)?,
            ..Config::default()
        };
        if !(self.lambda_max > 0.0 && self.lambda_max.is_finite()) {
            bail!("--lambda-max must be positive and finite");
        }
        let steps = self.lambda_steps as usize;
        cfg.lambda_grid = (0..steps)
            .map(|i| i as f64 * self.lambda_max / (steps - 1) as f64)
            .collect();
        if let Some(cap) = self.rank_max {
            if cap == 0 {
                bail!("--rank-max must be positive");
            }
            let cap = match cube {
                Some(c) => cap.min(c.pixels().min(c.bands())),
                None => cap,
            };
            cfg.rank_grid = Some((1..=cap).collect());
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene dimensions as HxWxB
    #[arg(long, default_value = "128x128x224")]
    size: Size,

    /// Number of endmembers (subspace rank of the clean scene)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    rank: u32,

    /// Target SNR in dB
    #[arg(long)]
    snr: f64,

    /// Noise-profile shape (1/18 = 0.0556 concentrates noise mid-spectrum; 0 = uniform)
    #[arg(long, default_value_t = 0.0556)]
    eta: f64,

    /// Abundance sampling mode
    #[arg(long, default_value = "dirichlet-sum1")]
    mode: String,

    /// RNG seed; identical seeds reproduce scenes bit for bit
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Output base path; writes <out>.clean.hsr, <out>.noisy.hsr, <out>.json
    #[arg(long)]
    out: PathBuf,

    /// CSV of endmember signatures (one row per band, one column per endmember)
    #[arg(long)]
    endmembers: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Input cube (HSR1 raster)
    #[arg(long)]
    input: PathBuf,

    /// JSON array of per-band noise variances; skips estimation
    #[arg(long)]
    noise_file: Option<PathBuf>,

    /// Dump the full risk surface as CSV
    #[arg(long)]
    surface: Option<PathBuf>,

    #[command(flatten)]
    grid: GridArgs,

    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Args)]
struct ModelSelectArgs {
    /// Input cube (HSR1 raster)
    #[arg(long)]
    input: PathBuf,

    /// Comma-separated model ids, e.g. 4,5,7 (default: all seven)
    #[arg(long, default_value = "1,2,3,4,5,6,7")]
    models: String,

    /// Clean reference cube: adds squared-error columns and enables --curves
    #[arg(long)]
    truth: Option<PathBuf>,

    /// With --truth: write per-threshold (sure, mse) curves at each model's
    /// selected rank to this CSV
    #[arg(long)]
    curves: Option<PathBuf>,

    /// JSON array of per-band noise variances; skips estimation
    #[arg(long)]
    noise_file: Option<PathBuf>,

    #[command(flatten)]
    grid: GridArgs,

    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    format: OutputFormat,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated true ranks
    #[arg(long, default_value = "3,5,10,15,20,30")]
    ranks: String,

    /// Comma-separated SNR levels in dB
    #[arg(long, default_value = "10,15,20,25,35,50")]
    snrs: String,

    /// Seeded trials per cell; the reported value is the median
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    trials: u32,

    /// Noise-profile shape
    #[arg(long, default_value_t = 0.0556)]
    eta: f64,

    /// Scene dimensions as HxWxB
    #[arg(long, default_value = "64x64x224")]
    size: Size,

    /// Abundance sampling mode
    #[arg(long, default_value = "dirichlet-sum1")]
    mode: String,

    /// Base RNG seed; every (rank, snr, trial) derives its own stream
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Write the median table CSV here (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,

    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct NoiseEstArgs {
    /// Input cube (HSR1 raster)
    #[arg(long)]
    input: PathBuf,

    /// Write the JSON variance array here (default: stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads(cli.threads)?;
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Rank(args) => cmd_rank(args),
        Command::ModelSelect(args) => cmd_model_select(args),
        Command::Bench(args) => cmd_bench(args),
        Command::NoiseEst(args) => cmd_noise_est(args),
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = flag.or_else(|| {
        std::env::var("HYSURE_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if n == 0 {
            bail!("thread count must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

fn load_cube(path: &Path) -> Result<Cube> {
    let (cube, _) = io::read_cube::<f64>(path)
        .with_context(|| format!("reading cube {}", path.display()))?;
    Ok(cube)
}

fn load_noise(path: &Path, bands: usize) -> Result<Noise> {
    let noise =
        io::load_noise::<f64>(path).with_context(|| format!("reading {}", path.display()))?;
    if noise.bands() != bands {
        bail!(
            "noise file has {} bands, cube has {bands}",
            noise.bands()
        );
    }
    Ok(noise)
}

fn parse_mode(mode: &str) -> Result<AbundanceMode> {
    Ok(mode.parse::<AbundanceMode>()?)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let endmembers = args
        .endmembers
        .as_deref()
        .map(io::load_endmembers_csv::<f64>)
        .transpose()?;
    let config = SceneConfig {
        height: args.size.height,
        width: args.size.width,
        bands: args.size.bands,
        rank: args.rank as usize,
        mode: parse_mode(&args.mode)?,
        eta: args.eta,
        snr_db: args.snr,
        seed: args.seed,
    };
    let scene = simulate_scene_with::<f64>(&config, endmembers)?;
    let manifest = io::save_scene(&args.out, &scene)?;
    eprintln!(
        "wrote {}, {}, {}.json",
        manifest.clean_file,
        manifest.noisy_file,
        args.out.display()
    );
    println!(
        "{}",
        serde_json::json!({
            "realized_snr_db": scene.realized_snr_db,
            "clean": manifest.clean_file,
            "noisy": manifest.noisy_file,
            "manifest": format!("{}.json", args.out.display()),
        })
    );
    Ok(())
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let cube = load_cube(&args.input)?;
    let mut cfg = args.grid.build(Some(&cube))?;
    if let Some(path) = &args.noise_file {
        cfg.noise = Some(load_noise(path, cube.bands())?);
    }
    cfg.keep_surface = true;
    let start = Instant::now();
    let report = select_rank(&cube, &cfg)?;
    let runtime_ms = start.elapsed().as_millis() as u64;
    let best = report.best();
    if let Some(path) = &args.surface {
        let surface = best.surface.as_ref().expect("surface kept");
        let mut file = std::fs::File::create(path)
            .with_context(|| format!("creating {}", path.display()))?;
        io::surface_to_csv(surface, &mut file)?;
        eprintln!("wrote risk surface to {}", path.display());
    }
    match args.format {
        OutputFormat::Json => println!(
            "{}",
            serde_json::json!({
                "r_hat": best.rank,
                "lambda_hat": best.lambda,
                "sure_min": best.sure,
                "ed": best.ed,
                "runtime_ms": runtime_ms,
            })
        ),
        OutputFormat::Csv => {
            println!("r_hat,lambda_hat,sure_min,ed,runtime_ms");
            println!(
                "{},{},{},{},{}",
                best.rank, best.lambda, best.sure, best.ed, runtime_ms
            );
        }
    }
    Ok(())
}

fn parse_models(spec: &str) -> Result<Vec<ModelSpec>> {
    let mut models = Vec::new();
    for part in spec.split(',') {
        let id: usize = part
            .trim()
            .parse()
            .with_context(|| format!("'{part}' is not a model id"))?;
        models.push(ModelSpec::from_id(id)?);
    }
    if models.is_empty() {
        bail!("no models given");
    }
    Ok(models)
}

fn cmd_model_select(args: ModelSelectArgs) -> Result<()> {
    let cube = load_cube(&args.input)?;
    let models = parse_models(&args.models)?;
    let mut cfg = args.grid.build(Some(&cube))?;
    if let Some(path) = &args.noise_file {
        cfg.noise = Some(load_noise(path, cube.bands())?);
    }
    let truth = args.truth.as_deref().map(load_cube).transpose()?;
    if args.curves.is_some() && truth.is_none() {
        bail!("--curves needs --truth");
    }
    let report = model_select(&cube, &models, &cfg, truth.as_ref())?;

    if let Some(curve_path) = &args.curves {
        let truth = truth.as_ref().expect("checked above");
        let noise = match &cfg.noise {
            Some(n) => n.clone(),
            None => hysure::estimate_noise(&cube)?,
        };
        let mut csv = String::from("model,r,lambda,sure,mse\n");
        for outcome in &report.outcomes {
            let spec = ModelSpec::from_id(outcome.model_id)?;
            let mut curve_cfg = cfg.clone();
            curve_cfg.rank_grid = Some(vec![outcome.rank]);
            let surface = risk_surface(&cube, spec, &curve_cfg, &noise)?;
            let mse = hysure::mse_surface(&cube, spec, &curve_cfg, &noise, truth)?;
            for (j, &lam) in surface.lambda_grid.iter().enumerate() {
                writeln!(
                    csv,
                    "{},{},{},{},{}",
                    outcome.model_id,
                    outcome.rank,
                    lam,
                    surface.risk[[0, j]],
                    mse[[0, j]]
                )?;
            }
        }
        std::fs::write(curve_path, csv)
            .with_context(|| format!("writing {}", curve_path.display()))?;
        eprintln!("wrote overlay curves to {}", curve_path.display());
    }

    match args.format {
        OutputFormat::Json => {
            let rows: Vec<serde_json::Value> = report
                .outcomes
                .iter()
                .map(|o| {
                    serde_json::json!({
                        "model": o.model_id,
                        "r_hat": o.rank,
                        "lambda_hat": o.lambda,
                        "sure_min": o.sure,
                        "ed": o.ed,
                        "mse": o.mse,
                    })
                })
                .collect();
            println!(
                "{}",
                serde_json::json!({
                    "chosen_model": report.chosen_model_id(),
                    "models": rows,
                })
            );
        }
        OutputFormat::Csv => {
            println!("model,r_hat,lambda_hat,sure_min,ed,mse");
            for o in &report.outcomes {
                let mse = o.mse.map_or(String::new(), |v| v.to_string());
                println!(
                    "{},{},{},{},{},{}",
                    o.model_id, o.rank, o.lambda, o.sure, o.ed, mse
                );
            }
        }
    }
    Ok(())
}

fn parse_list<T: FromStr>(spec: &str, what: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        out.push(
            part.trim()
                .parse::<T>()
                .ok()
                .with_context(|| format!("'{part}' is not a valid {what}"))?,
        );
    }
    if out.is_empty() {
        bail!("empty {what} list");
    }
    Ok(out)
}

fn median(mut values: Vec<usize>) -> f64 {
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2] as f64
    } else {
        (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0
    }
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let ranks: Vec<usize> = parse_list(&args.ranks, "rank")?;
    let snrs: Vec<f64> = parse_list(&args.snrs, "snr")?;
    if ranks.iter().any(|&r| r == 0 || r > args.size.bands) {
        bail!("ranks must lie in 1..={}", args.size.bands);
    }
    let mode = parse_mode(&args.mode)?;
    let cfg = args.grid.build(None)?;
    let trials = args.trials as usize;

    let mut tasks = Vec::new();
    for (ri, &rank) in ranks.iter().enumerate() {
        for (si, &snr) in snrs.iter().enumerate() {
            for trial in 0..trials {
                tasks.push((ri, si, rank, snr, trial));
            }
        }
    }
    let start = Instant::now();
    let results: Vec<(usize, usize, usize)> = tasks
        .par_iter()
        .map(|&(ri, si, rank, snr, trial)| {
            let scene_cfg = SceneConfig {
                height: args.size.height,
                width: args.size.width,
                bands: args.size.bands,
                rank,
                mode,
                eta: args.eta,
                snr_db: snr,
                seed: derive_seed(args.seed, &[rank as u64, snr.to_bits(), trial as u64]),
            };
            let scene = hysure::simulate_scene::<f64>(&scene_cfg)?;
            let report = select_rank(&scene.noisy, &cfg)?;
            eprintln!(
                "cell r={rank} snr={snr} trial={trial}: r_hat={}",
                report.best().rank
            );
            Ok((ri, si, report.best().rank))
        })
        .collect::<Result<_>>()?;

    let mut per_cell: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); snrs.len()]; ranks.len()];
    for (ri, si, r_hat) in results {
        per_cell[ri][si].push(r_hat);
    }
    let mut csv = String::from("snr");
    for &r in &ranks {
        write!(csv, ",r={r}")?;
    }
    csv.push('\n');
    let mut exact = 0usize;
    let mut within_one = 0usize;
    for (si, &snr) in snrs.iter().enumerate() {
        write!(csv, "{snr}")?;
        for (ri, &rank) in ranks.iter().enumerate() {
            let med = median(per_cell[ri][si].clone());
            if med == rank as f64 {
                exact += 1;
            }
            if (med - rank as f64).abs() <= 1.0 {
                within_one += 1;
            }
            if med.fract() == 0.0 {
                write!(csv, ",{}", med as i64)?;
            } else {
                write!(csv, ",{med}")?;
            }
        }
        csv.push('\n');
    }
    let cells = ranks.len() * snrs.len();
    eprintln!(
        "bench: {cells} cells x {trials} trials in {:.1}s; exact {exact}/{cells}, within one {within_one}/{cells}",
        start.elapsed().as_secs_f64()
    );
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            println!(
                "{}",
                serde_json::json!({
                    "cells": cells,
                    "trials": trials,
                    "exact": exact,
                    "within_one": within_one,
                    "table": path.display().to_string(),
                })
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_noise_est(args: NoiseEstArgs) -> Result<()> {
    let cube = load_cube(&args.input)?;
    let noise = hysure::estimate_noise(&cube)?;
    match &args.out {
        Some(path) => {
            io::save_noise(path, &noise)?;
            eprintln!("wrote {}", path.display());
            println!(
                "{}",
                serde_json::json!({"bands": noise.bands(), "file": path.display().to_string()})
            );
        }
        None => println!("{}", serde_json::to_string(&noise)?),
    }
    Ok(())
}
