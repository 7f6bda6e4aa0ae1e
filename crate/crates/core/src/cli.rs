//! Command-line surface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{desk_suite, DeskOptions};
use crate::config::{env_seed, load_config};
use crate::csvio::{read_csv, write_dataset, write_matrix, CsvSchema};
use crate::matrix::{apply_mcar, denormalize_matrix, fuse_imputation, normalize};
use crate::orchestrator::{estimate_only, evaluate, run, run_full_baseline, ScisConfig};
use crate::sse::HoeffdingVariant;
use crate::synth::{synth, SynthKind, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "scis", version, about = "Masked Sinkhorn imputation with sample-size estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Impute the missing cells of a CSV file
    Impute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Train on every row, skipping size estimation
        #[arg(long)]
        full: bool,
    },
    /// Print the minimum training size estimate as JSON
    EstimateSize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(short = 'k', long = "k")]
        k: Option<usize>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        n0: Option<usize>,
        #[arg(long)]
        nv: Option<usize>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Hide part of the observed cells, impute them and report RMSE
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        holdout: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write a synthetic dataset
    Synth {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// MCAR rate applied after generation (mixture and manifold kinds)
        #[arg(long, default_value_t = 0.0)]
        missing_rate: f64,
        #[arg(long, default_value_t = 3)]
        components: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        /// Observation probability of the Dirac masks
        #[arg(long, default_value_t = 0.5)]
        q: f64,
    },
    /// Run the desk benchmark suite and print a JSON report
    Bench {
        #[arg(long, default_value = "desk")]
        suite: String,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Strict,
    PaperAppendix,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    GaussianMixture,
    LinearManifold,
    MaskedDirac,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

fn runtime<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load(args: &ConfigArgs) -> Result<ScisConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p).map_err(|e| Failure::Usage(e.to_string()))?,
        None => ScisConfig::default(),
    };
    if let Some(seed) = env_seed().map_err(|e| Failure::Usage(e.to_string()))? {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).map_err(runtime)?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(()),
    }
}

fn read_normalized(path: &Path) -> Result<(crate::csvio::CsvTable, crate::matrix::MaskedDataset), Failure> {
    let table = read_csv(path, &CsvSchema::default()).map_err(runtime)?;
    let norm = normalize(&table.dataset).map_err(runtime)?;
    Ok((table, norm))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Impute {
            input,
            output,
            config,
            full,
        } => {
            let cfg = load(&config)?;
            let (table, norm) = read_normalized(&input)?;
            let out = if full { run_full_baseline(&norm, &cfg) } else { run(&norm, &cfg) }.map_err(runtime)?;
            let ranges = norm.feature_ranges.as_deref().expect("normalized dataset has ranges");
            let restored = denormalize_matrix(&out.imputed, ranges).map_err(runtime)?;
            // observed cells come from the file, not the scaling round trip
            let result = fuse_imputation(&table.dataset, &restored).map_err(runtime)?;
            write_matrix(&output, &result, table.header.as_deref()).map_err(runtime)?;
            print_json(&out.report)
        }
        Command::EstimateSize {
            input,
            epsilon,
            alpha,
            beta,
            k,
            variant,
            n0,
            nv,
            config,
        } => {
            let mut cfg = load(&config)?;
            let s = &mut cfg.sse;
            if let Some(v) = epsilon {
                s.epsilon = v;
            }
            if let Some(v) = alpha {
                s.alpha = v;
            }
            if let Some(v) = beta {
                s.beta = v;
            }
            if let Some(v) = k {
                s.k = v;
            }
            if let Some(v) = variant {
                s.variant = match v {
                    VariantArg::Strict => HoeffdingVariant::Strict,
                    VariantArg::PaperAppendix => HoeffdingVariant::PaperAppendix,
                };
            }
            if let Some(v) = n0 {
                s.n0 = v;
            }
            if let Some(v) = nv {
                s.nv = v;
            }
            let (_, norm) = read_normalized(&input)?;
            let est = estimate_only(&norm, &cfg).map_err(runtime)?;
            print_json(&est)
        }
        Command::Evaluate {
            input,
            holdout,
            seed,
            full,
            config,
        } => {
            if !(0.0..1.0).contains(&holdout) {
                return Err(Failure::Usage(format!("--holdout must lie in [0, 1), got {holdout}")));
            }
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (_, norm) = read_normalized(&input)?;
            let out = evaluate(&norm, &cfg, holdout, full).map_err(runtime)?;
            print_json(&out.report)
        }
        Command::Synth {
            kind,
            out,
            n,
            d,
            seed,
            missing_rate,
            components,
            noise,
            theta,
            q,
        } => {
            if n == 0 || d == 0 {
                return Err(Failure::Usage("--n and --d must be positive".into()));
            }
            let seed = match seed {
                Some(s) => s,
                None => env_seed().map_err(|e| Failure::Usage(e.to_string()))?.unwrap_or(0),
            };
            let kind = match kind {
                KindArg::GaussianMixture => SynthKind::GaussianMixture,
                KindArg::LinearManifold => SynthKind::LinearManifold,
                KindArg::MaskedDirac => SynthKind::MaskedDirac,
            };
            let spec = SynthSpec {
                kind,
                n,
                d,
                components,
                noise,
                theta,
                q,
                seed,
            };
            let rate = if kind == SynthKind::MaskedDirac { 1.0 - q } else { missing_rate };
            let ds = apply_mcar(&synth(&spec), rate, seed.wrapping_add(1)).map_err(|e| Failure::Usage(e.to_string()))?;
            let header: Vec<String> = (0..d).map(|c| format!("x{c}")).collect();
            write_dataset(&out, &ds, Some(&header), &CsvSchema::default()).map_err(runtime)?;
            #[derive(Serialize)]
            struct SynthReport<'a> {
                spec: &'a SynthSpec,
                missing_rate: f64,
                observed_cells: usize,
            }
            print_json(&SynthReport {
                spec: &spec,
                missing_rate: rate,
                observed_cells: ds.mask.observed_count(),
            })
        }
        Command::Bench {
            suite,
            n,
            seeds,
            config,
        } => {
            if suite != "desk" {
                return Err(Failure::Usage(format!("unknown suite `{suite}`; available: desk")));
            }
            let cfg = load(&config)?;
            let opts = DeskOptions {
                n,
                seeds: seeds.unwrap_or_else(|| vec![cfg.seed]),
                ..DeskOptions::default()
            };
            let report = desk_suite(&opts, &cfg).map_err(runtime)?;
            print_json(&report)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            EXIT_RUNTIME
        }
    }
}
