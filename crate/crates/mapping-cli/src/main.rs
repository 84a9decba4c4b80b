//! Command-line harness: train the actor-critic, evaluate and compare
//! policies on seeded episode batches, dump episode traces, and plot
//! learning curves.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mapping_core::nn::save_params;
use mapping_core::train::{train, TrainConfig};

use mapping_cli::config::{PolicyConfig, PolicyName, RunConfig};
use mapping_cli::eval::{compare, evaluate, CompareReport, EvalReport};
use mapping_cli::plot::{plot_curve_file, render_curve_svg};
use mapping_cli::trace::{trace_to_file, TraceOptions};

#[derive(Parser)]
#[command(
    name = "mapping-cli",
    version,
    about = "Simulation harness for active mapping with known poses"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the MLP actor-critic and write weights plus a learning curve.
    Train(TrainArgs),
    /// Evaluate one policy over a batch of independent seeded episodes.
    Eval(EvalArgs),
    /// Evaluate several policies on paired episodes and print a table.
    Compare(CompareArgs),
    /// Write one episode as line-delimited JSON records.
    Trace(TraceArgs),
    /// Render a learning-curve JSON file as an SVG plot.
    Plot(PlotArgs),
}

/// Options shared by every subcommand that runs episodes.
#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; omitted sections fall back to the standard
    /// 25x25 setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(path) => RunConfig::load(path),
            None => Ok(RunConfig::default()),
        }
    }
}

/// Policy selection flags; `--weights` implies the learned policy.
#[derive(Args)]
struct PolicyArgs {
    /// Policy: random, frontier, myopic, or learned:<weights-path>.
    #[arg(long)]
    policy: Option<PolicyName>,
    /// Weights path; shorthand for --policy learned:<path>.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Learned policy takes the argmax action instead of sampling.
    #[arg(long)]
    greedy: bool,
}

impl PolicyArgs {
    fn apply(&self, policy: &mut PolicyConfig) {
        if let Some(name) = &self.policy {
            policy.name = name.clone();
        }
        if let Some(weights) = &self.weights {
            policy.name = PolicyName::Learned(weights.clone());
        }
        if self.greedy {
            policy.greedy = true;
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Episode count override.
    #[arg(long)]
    episodes: Option<usize>,
    /// Where to write the trained weights.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Where to write the learning curve (JSON).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Also render the curve to this SVG path.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Progress print interval in episodes; 0 silences progress.
    #[arg(long, default_value_t = 50)]
    progress_every: usize,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Episode count override.
    #[arg(long)]
    episodes: Option<usize>,
    /// Worker thread override; 0 means one per core.
    #[arg(long)]
    workers: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Policies to compare; repeat the flag. Defaults to random, frontier,
    /// and myopic.
    #[arg(long = "policy")]
    policies: Vec<PolicyName>,
    /// Learned policies take the argmax action instead of sampling.
    #[arg(long)]
    greedy: bool,
    /// Episode count override.
    #[arg(long)]
    episodes: Option<usize>,
    /// Worker thread override; 0 means one per core.
    #[arg(long)]
    workers: Option<usize>,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Which episode index of the seed's stream to trace.
    #[arg(long, default_value_t = 0)]
    episode: u64,
    /// Belief snapshot stride in steps; 0 keeps only the initial snapshot.
    #[arg(long, default_value_t = 0)]
    snapshot_stride: usize,
    /// Trace output path; falls back to `output.trace` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Learning-curve JSON file produced by `train --curve`.
    #[arg(long)]
    curve: PathBuf,
    /// SVG output path.
    #[arg(long)]
    out: PathBuf,
    /// Gaussian smoothing width in episodes.
    #[arg(long, default_value_t = 25.0)]
    smoothing: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Compare(args) => run_compare(args),
        Command::Trace(args) => run_trace(args),
        Command::Plot(args) => plot_curve_file(&args.curve, &args.out, args.smoothing),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Some sources (TOML parse errors) render over several lines;
            // collapse to the single-line form the exit contract promises.
            let message = format!("{err:#}")
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut run = args.common.load()?;
    if let Some(seed) = args.common.seed {
        run.training.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        run.training.episodes = episodes;
    }
    run.validate()?;

    let training: TrainConfig = run.training;
    let progress = args.progress_every;
    let mut recent: Vec<f64> = Vec::new();
    let (params, curve) = train(run.environment, &training, |report| {
        recent.push(report.reward);
        if recent.len() > 100 {
            recent.remove(0);
        }
        if progress > 0 && (report.episode + 1) % progress == 0 {
            let mean = recent.iter().sum::<f64>() / recent.len() as f64;
            eprintln!(
                "episode {:>6}/{}  trailing-{} mean {:>8.2}  lr {:.3e}",
                report.episode + 1,
                training.episodes,
                recent.len(),
                mean,
                report.lr
            );
        }
    })?;

    println!(
        "trained {} episodes  final trailing-100 mean {:.2}",
        training.episodes,
        curve.trailing_mean(100)
    );
    if let Some(path) = args.weights.as_deref().or(run.output.weights.as_deref()) {
        save_params(&params, path)
            .with_context(|| format!("writing weights {}", path.display()))?;
        println!("weights -> {}", path.display());
    }
    if let Some(path) = args.curve.as_deref().or(run.output.curve.as_deref()) {
        write_json(path, &curve)?;
        println!("curve -> {}", path.display());
    }
    if let Some(path) = args.plot.as_deref().or(run.output.plot.as_deref()) {
        let svg = render_curve_svg(&curve, 25.0)?;
        std::fs::write(path, svg).with_context(|| format!("writing plot {}", path.display()))?;
        println!("plot -> {}", path.display());
    }
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let mut run = args.common.load()?;
    if let Some(seed) = args.common.seed {
        run.evaluation.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        run.evaluation.episodes = episodes;
    }
    if let Some(workers) = args.workers {
        run.evaluation.workers = workers;
    }
    args.policy.apply(&mut run.policy);
    run.validate()?;

    let report = evaluate(&run.environment, &run.policy, &run.evaluation)?;
    print_eval_rows(std::slice::from_ref(&report));
    if let Some(path) = args.report.as_deref().or(run.output.report.as_deref()) {
        write_json(path, &report)?;
        println!("report -> {}", path.display());
    }
    Ok(())
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let mut run = args.common.load()?;
    if let Some(seed) = args.common.seed {
        run.evaluation.seed = seed;
    }
    if let Some(episodes) = args.episodes {
        run.evaluation.episodes = episodes;
    }
    if let Some(workers) = args.workers {
        run.evaluation.workers = workers;
    }
    run.validate()?;

    let names = if args.policies.is_empty() {
        vec![PolicyName::Random, PolicyName::Frontier, PolicyName::Myopic]
    } else {
        args.policies.clone()
    };
    let policies: Vec<PolicyConfig> = names
        .into_iter()
        .map(|name| {
            let mut p = run.policy.clone();
            p.name = name;
            if args.greedy {
                p.greedy = true;
            }
            p
        })
        .collect();

    let report = compare(&run.environment, &policies, &run.evaluation)?;
    print_compare(&report);
    if let Some(path) = args.report.as_deref().or(run.output.report.as_deref()) {
        write_json(path, &report)?;
        println!("report -> {}", path.display());
    }
    Ok(())
}

fn run_trace(args: TraceArgs) -> Result<()> {
    let mut run = args.common.load()?;
    if let Some(seed) = args.common.seed {
        run.evaluation.seed = seed;
    }
    args.policy.apply(&mut run.policy);
    run.validate()?;

    let out = args
        .out
        .as_deref()
        .or(run.output.trace.as_deref())
        .context("no trace output path; pass --out or set output.trace")?;
    let opts = TraceOptions {
        seed: run.evaluation.seed,
        episode: args.episode,
        snapshot_stride: args.snapshot_stride,
    };
    let reward = trace_to_file(&run.environment, &run.policy, &opts, out)?;
    println!(
        "trace -> {}  ({} records, episode reward {:.2})",
        out.display(),
        run.environment.horizon + 1,
        reward
    );
    Ok(())
}

fn print_eval_rows(rows: &[EvalReport]) {
    println!(
        "{:<22} {:>9} {:>10} {:>9} {:>9} {:>9} {:>9}",
        "policy", "episodes", "mean", "std", "stderr", "min", "max"
    );
    for row in rows {
        println!(
            "{:<22} {:>9} {:>10.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            row.policy,
            row.episodes,
            row.mean_reward,
            row.std_dev,
            row.std_error,
            row.min_reward,
            row.max_reward
        );
    }
}

fn print_compare(report: &CompareReport) {
    println!(
        "paired evaluation: {} episodes, seed {}",
        report.episodes, report.seed
    );
    print_eval_rows(&report.rows);
    if !report.pairwise.is_empty() {
        println!();
        println!("paired differences (row - column):");
        for diff in &report.pairwise {
            println!(
                "{:<22} - {:<22} {:>10.2} +/- {:.2} (paired SE)",
                diff.a, diff.b, diff.mean_diff, diff.std_error
            );
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).context("serializing report")?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
