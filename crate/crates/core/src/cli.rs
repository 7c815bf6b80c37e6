//! `pourseq` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::activation::Activation;
use crate::data::{load_dataset, save_dataset};
use crate::dtw::{dtw_exact, export_alignment, export_summary, fastdtw, score_testset};
use crate::nn::{gradient_check, load_checkpoint, save_checkpoint, CellKind, Checkpoint, NetworkConfig};
use crate::synth::{generate_dataset, SynthParams};
use crate::train::{evaluate_model, export_loss_curve, export_predictions, train, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "pourseq", version, about = "Pouring weight-trajectory prediction with stacked LSTM/GRU networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset of pouring sequences.
    Synth(SynthArgs),
    /// Train a network (or all six cell × head variants) on a dataset.
    Train(TrainArgs),
    /// Write per-sequence predictions for a dataset.
    Predict(PredictArgs),
    /// Score a model on a dataset with FastDTW and export alignments.
    #[command(name = "eval-dtw")]
    EvalDtw(EvalDtwArgs),
    /// Check BPTT gradients against finite differences on a small network.
    Gradcheck(GradcheckArgs),
    /// DTW distance between two sequences stored one number per line.
    Dtw(DtwArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of sequences.
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Observation noise standard deviation (lbf).
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    /// Shortest sequence length (timesteps).
    #[arg(long, default_value_t = 30)]
    pub len_min: usize,
    /// Longest sequence length (timesteps).
    #[arg(long, default_value_t = 80)]
    pub len_max: usize,
    /// Output dataset file (one JSON record per line).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "gru", value_parser = ["lstm", "gru"])]
    pub cell: String,
    #[arg(long, default_value = "tanh", value_parser = ["sigmoid", "linear", "tanh"])]
    pub head: String,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint file to write.
    #[arg(long)]
    pub out_model: PathBuf,
    /// Loss-curve file to write (epoch,train_loss,val_loss).
    #[arg(long)]
    pub out_losses: PathBuf,
    /// Train all six cell × head variants; output names get a `-<cell>-<head>` suffix.
    #[arg(long)]
    pub all_variants: bool,
    /// Include padded steps in the loss.
    #[arg(long)]
    pub no_mask: bool,
    /// Keep the parameters of the best validation epoch instead of the last.
    #[arg(long)]
    pub keep_best: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory; one `<id>.csv` per sequence (t,theta,actual_f,predicted_f).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalDtwArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// FastDTW search radius.
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
    /// Output directory for `summary.csv` and `align-<id>.csv` files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct DtwArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Full exact DTW.
    #[arg(long, conflicts_with = "radius")]
    pub exact: bool,
    /// FastDTW radius (default 1 when --exact is not given).
    #[arg(long)]
    pub radius: Option<usize>,
}

/// Parses `argv` (program name first) and runs the command.
///
/// Exit codes: 0 success, 1 runtime failure, 2 usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            eprintln!("{} (see --help)", text.lines().next().unwrap_or("usage error"));
            return 2;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pourseq: {}", one_line(&e));
            1
        }
    }
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !parts.last().is_some_and(|prev| prev.ends_with(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ").replace('\n', " ")
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Predict(a) => predict_cmd(a),
        Command::EvalDtw(a) => eval_dtw(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Dtw(a) => dtw_cmd(a),
    }
}

fn synth(a: SynthArgs) -> anyhow::Result<()> {
    let params = SynthParams {
        num_sequences: a.n,
        len_min: a.len_min,
        len_max: a.len_max,
        noise_std: a.noise,
        seed: a.seed,
        ..SynthParams::default()
    };
    let seqs = generate_dataset(&params)?;
    save_dataset(&seqs, &a.out)?;
    println!("wrote {} sequences to {}", seqs.len(), a.out.display());
    Ok(())
}

/// `dir/name.ext` → `dir/name-<suffix>.ext`.
fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}-{suffix}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{suffix}"),
    };
    path.with_file_name(name)
}

fn train_cmd(a: TrainArgs) -> anyhow::Result<()> {
    let data = load_dataset(&a.data)?;
    let variants: Vec<(CellKind, Activation)> = if a.all_variants {
        CellKind::ALL.iter().flat_map(|&c| Activation::ALL.iter().map(move |&h| (c, h))).collect()
    } else {
        vec![(a.cell.parse().map_err(anyhow::Error::msg)?, a.head.parse().map_err(anyhow::Error::msg)?)]
    };

    for (cell, head) in variants {
        let config = TrainConfig {
            epochs: a.epochs,
            lr: a.lr,
            batch_size: a.batch_size,
            seed: a.seed,
            masked_loss: !a.no_mask,
            keep_best_validation: a.keep_best,
            ..TrainConfig::new(NetworkConfig::new(cell, head))
        };
        let name = config.network.variant_name();
        let (model_path, loss_path) = if a.all_variants {
            (with_suffix(&a.out_model, &name), with_suffix(&a.out_losses, &name))
        } else {
            (a.out_model.clone(), a.out_losses.clone())
        };
        let outcome = train(&data, &config).with_context(|| format!("training {name}"))?;
        let ckpt = Checkpoint::new(config.network.clone(), outcome.normalization, outcome.params);
        save_checkpoint(&ckpt, &model_path)?;
        export_loss_curve(&outcome.report, &loss_path)?;
        let last = outcome.report.epochs.last().expect("at least one epoch");
        println!(
            "{name}: epochs={} train_loss={:.6} val_loss={:.6} internal_test_loss={:.6} -> {}",
            last.epoch,
            last.train_loss,
            last.validation_loss,
            outcome.report.internal_test_loss,
            model_path.display()
        );
    }
    Ok(())
}

fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn predict_cmd(a: PredictArgs) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&a.model)?;
    let data = load_dataset(&a.data)?;
    let pairs = evaluate_model(&ckpt.params, &ckpt.config, &ckpt.normalization, &data)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for pair in &pairs {
        export_predictions(pair, a.out.join(format!("{}.csv", file_safe(&pair.id))))?;
    }
    println!("wrote {} prediction files to {}", pairs.len(), a.out.display());
    Ok(())
}

fn eval_dtw(a: EvalDtwArgs) -> anyhow::Result<()> {
    let ckpt = load_checkpoint(&a.model)?;
    let data = load_dataset(&a.data)?;
    if data.is_empty() {
        bail!("{} contains no sequences", a.data.display());
    }
    let pairs = evaluate_model(&ckpt.params, &ckpt.config, &ckpt.normalization, &data)?;
    let curves: Vec<(Vec<f64>, Vec<f64>)> = pairs.iter().map(|p| (p.predicted.clone(), p.actual.clone())).collect();
    let summary = score_testset(&curves, a.radius)?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
    export_summary(&ids, &summary, a.out.join("summary.csv"))?;
    for p in &pairs {
        let result = fastdtw(&p.predicted, &p.actual, a.radius)?;
        export_alignment(&result, &p.predicted, &p.actual, a.out.join(format!("align-{}.csv", file_safe(&p.id))))?;
    }
    println!(
        "sequences={} mean={} median={} min={} max={}",
        summary.distances.len(),
        summary.mean,
        summary.median,
        summary.min,
        summary.max
    );
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> anyhow::Result<()> {
    if !(a.eps > 0.0) {
        bail!("--eps must be positive");
    }
    let mut worst = 0.0f64;
    for cell in CellKind::ALL {
        for head in Activation::ALL {
            let cmp = gradient_check(cell, head, a.seed, a.eps)?;
            println!(
                "{cell}-{head}: max_relative_error={:.3e} max_abs_error={:.3e} worst={} scalars={}",
                cmp.max_relative_error, cmp.max_abs_error, cmp.worst, cmp.scalars
            );
            worst = worst.max(cmp.max_relative_error);
        }
    }
    if worst > a.tol {
        bail!("gradient check failed: max relative error {worst:.3e} exceeds {:.3e}", a.tol);
    }
    println!("ok: max relative error {worst:.3e} <= {:.3e}", a.tol);
    Ok(())
}

/// One number per line; blank lines are ignored.
pub fn read_series(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().with_context(|| format!("{}:{}: not a number: `{}`", path.display(), i + 1, l.trim()))
        })
        .collect()
}

fn dtw_cmd(a: DtwArgs) -> anyhow::Result<()> {
    let x = read_series(&a.a)?;
    let y = read_series(&a.b)?;
    let result = if a.exact { dtw_exact(&x, &y)? } else { fastdtw(&x, &y, a.radius.unwrap_or(1))? };
    println!("{}", result.distance);
    Ok(())
}
