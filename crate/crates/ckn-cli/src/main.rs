//! `ckn`: train, encode and evaluate convolutional kernel networks, learn
//! filter sheets on whitened patches, and run the exact-kernel verification
//! suite.
//!
//! Exit codes: 0 success, 1 validation error (bad flags or config), 2 runtime
//! failure, 3 oracle-check failure.

use ckn_cli::commands;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use ckn_core::data::Split;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ckn", version, about = "Convolutional kernel networks")]
struct Cli {
    /// Cap the worker thread count (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a run configuration.
    Train(TrainArgs),
    /// Encode a dataset split with a trained model.
    Encode(EncodeArgs),
    /// Select the SVM regularization, train, and report the test error.
    Evaluate(EvaluateArgs),
    /// Learn filters on whitened patches and export the top sheet.
    Gabor(GaborArgs),
    /// Run the exact-vs-approximate verification suite.
    OracleCheck(OracleCheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset root (overrides CKN_DATA_DIR and the config's dataset.dir).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Overrides the config's train.seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "ckn-out")]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Dataset split to encode.
    #[arg(long, value_parser = parse_split)]
    split: Split,
    /// Half-open index range `a..b` within the split.
    #[arg(long, value_parser = parse_range)]
    range: Option<(usize, usize)>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output feature file; labels go to the `.labels` sidecar.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    train_features: PathBuf,
    #[arg(long)]
    test_features: PathBuf,
    /// Stratified subsample of the training features (e.g. 300, 1000, ...).
    #[arg(long)]
    train_size: Option<usize>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Epoch cap per solver run during model selection.
    #[arg(long, default_value_t = 40)]
    cv_epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    cv_tol: f64,
    /// Epoch cap for the final training run.
    #[arg(long, default_value_t = 300)]
    final_epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    final_tol: f64,
    /// Directory for report.txt and results.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GaborArgs {
    /// Directory of grayscale .pgm images.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Generate this many synthetic textured images instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[arg(long, default_value_t = 12)]
    patch_side: usize,
    /// Whitened patch bank size.
    #[arg(long, default_value_t = 300_000)]
    bank: usize,
    /// Training pairs drawn from the bank.
    #[arg(long, default_value_t = 300_000)]
    pairs: usize,
    #[arg(long, default_value_t = 256)]
    filters: usize,
    #[arg(long, default_value_t = 4000)]
    iterations: usize,
    /// Filters exported to the sheet, by descending weight.
    #[arg(long, default_value_t = 128)]
    top: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "ckn-gabor")]
    out: PathBuf,
}

#[derive(Args)]
struct OracleCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(format!("invalid split '{other}' (use 'train' or 'test')")),
    }
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("invalid range '{s}' (use 'a..b')"))?;
    let a = a.parse().map_err(|_| format!("invalid range start '{a}'"))?;
    let b = b.parse().map_err(|_| format!("invalid range end '{b}'"))?;
    if a >= b {
        return Err(format!("empty range '{s}'"));
    }
    Ok((a, b))
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    match cli.command {
        Command::Train(args) => {
            commands::train::run(&args.config, args.data_dir.as_deref(), args.seed, &args.out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Encode(args) => {
            commands::encode::run(
                &args.config,
                &args.model,
                args.split,
                args.range,
                args.data_dir.as_deref(),
                &args.out,
            )?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate(args) => {
            commands::evaluate::run(&commands::evaluate::EvaluateArgs {
                train_features: &args.train_features,
                test_features: &args.test_features,
                train_size: args.train_size,
                folds: args.folds,
                seed: args.seed,
                cv_epochs: args.cv_epochs,
                cv_tol: args.cv_tol,
                final_epochs: args.final_epochs,
                final_tol: args.final_tol,
                out_dir: args.out.as_deref(),
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Gabor(args) => {
            commands::gabor::run(&commands::gabor::GaborArgs {
                images_dir: args.images.as_deref(),
                synthetic: args.synthetic,
                patch_side: args.patch_side,
                bank: args.bank,
                pairs: args.pairs,
                filters: args.filters,
                iterations: args.iterations,
                top: args.top,
                seed: args.seed,
                out_dir: &args.out,
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleCheck(args) => {
            if commands::oracle_check::run(args.seed)? {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }
    }
}

/// Validation errors: config parsing/validation and anything the core flags
/// as an invalid argument.
fn is_validation_error(err: &anyhow::Error) -> bool {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<ckn_core::CknError>() {
            if matches!(
                core,
                ckn_core::CknError::InvalidArgument(_) | ckn_core::CknError::EmptyResult(_)
            ) {
                return true;
            }
        }
        let msg = cause.to_string();
        if msg.contains("missing required key")
            || msg.contains("invalid value")
            || msg.contains("unknown key")
            || msg.contains("must be")
            || msg.contains("not allowed")
        {
            return true;
        }
    }
    false
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_validation_error(&err) {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
