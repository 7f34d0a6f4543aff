use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pipeinv::datasets::View;
use pipeinv::evaluation::{all_layers, cka_matrix, linear_probe_transfer};
use pipeinv::experiment::{build_or_load, emit_report, run_experiment, ExperimentConfig, ResultsDir, RunOptions, CACHE_ENV};
use pipeinv::Error;

#[derive(Parser)]
#[command(name = "pipeinv", version, about = "Multi-view training and view-invariance analysis")]
struct Cli {
    /// Dataset cache root.
    #[arg(long, global = true, env = CACHE_ENV, default_value = ".pipeinv-cache")]
    cache: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset operations.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train and evaluate every variant, seed and fold of an experiment.
    Run(RunArgs),
    /// Rebuild summary tables from a results directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute a layer-by-layer CKA grid for one fold run.
    Cka(FoldArgs),
    /// Refit the cross-view linear probes for one fold run.
    Probe(FoldArgs),
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Build the dataset an experiment config names and cache it.
    Build {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output_dir` in the config, then `results/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the config's seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Replace the config's folds.
    #[arg(long, value_delimiter = ',')]
    folds: Vec<usize>,
    /// Continue a partially completed output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct FoldArgs {
    /// Results directory of a previous `run`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    variant: String,
    /// Defaults to the run's first seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Fold index; defaults to the run's first fold.
    #[arg(long)]
    folds: Option<usize>,
    /// Write the result here instead of stdout.
    #[arg(long)]
    dest: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let schema = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config { .. })));
            ExitCode::from(if schema { 2 } else { 1 })
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Dataset { command: DatasetCommand::Build { config } } => {
            let cfg = ExperimentConfig::load(&config)?;
            let cached = build_or_load(&cfg.dataset, &cli.cache).context("building dataset")?;
            let c = &cached.corpus;
            println!("{} {}", if cached.built { "built" } else { "cached" }, cached.dir.display());
            println!("fingerprint {}", cached.manifest.fingerprint());
            println!("pool {} pairs, hold-out {} pairs, {} folds", c.pool.len(), c.test.len(), c.folds.k);
        }
        Command::Run(args) => run(args, &cli.cache)?,
        Command::Report { out } => {
            let report = emit_report(&out)?;
            for f in &report.files {
                println!("{}", f.display());
            }
        }
        Command::Cka(args) => {
            let (dir, fold, seed) = open(&args)?;
            let corpus = dir.corpus(&cli.cache)?;
            let (a, b) = dir.models(&args.variant, seed, fold)?;
            let ev = &dir.config.evaluation.cka;
            let take = |v: View| {
                let s = corpus.test.single_view(v);
                match ev.max_samples {
                    Some(n) => s.head(n),
                    None => s,
                }
            };
            let grid = cka_matrix(&a, &b, &take(View::A), &take(View::B), &all_layers(&a), &all_layers(&b), &ev.config())
                .with_context(|| format!("CKA for {} seed {seed} fold {fold}", args.variant))?;
            match &args.dest {
                Some(p) => grid.write_csv(p)?,
                None => grid.write_to(std::io::stdout().lock())?,
            }
        }
        Command::Probe(args) => {
            let (dir, fold, seed) = open(&args)?;
            let corpus = dir.corpus(&cli.cache)?;
            let (train, _) = corpus.fold(fold)?;
            let (a, b) = dir.models(&args.variant, seed, fold)?;
            let solver = &dir.config.evaluation.probe.solver;
            let mut out = serde_json::Map::new();
            for (name, model, view) in [("probe_a_to_b", &a, View::B), ("probe_b_to_a", &b, View::A)] {
                let r = linear_probe_transfer(model, &train.distinct_view(view), &corpus.test.distinct_view(view), solver)
                    .with_context(|| format!("{name} for {} seed {seed} fold {fold}", args.variant))?;
                out.insert(name.into(), serde_json::to_value(r)?);
            }
            let text = serde_json::to_string_pretty(&out)?;
            match &args.dest {
                Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => println!("{text}"),
            }
        }
    }
    Ok(())
}

fn run(args: RunArgs, cache: &Path) -> anyhow::Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if !args.seed.is_empty() {
        cfg.seeds = args.seed;
    }
    if !args.folds.is_empty() {
        cfg.folds = args.folds;
    }
    cfg.validate()?;
    let out = args.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
    let outcome = run_experiment(&cfg, &RunOptions { out: out.clone(), cache_root: cache.to_path_buf(), resume: args.resume })
        .with_context(|| format!("experiment `{}` in {}", cfg.name, out.display()))?;
    if outcome.already_complete {
        println!("complete: {} already holds a finished run of this config; nothing to do", out.display());
        return Ok(());
    }
    for ((variant, seed), table) in &outcome.tables {
        for (metric, s) in table.summary() {
            if metric.starts_with("acc_") || metric == "agreement" || metric == "cka_final" {
                let std = s.std.map_or("n/a".to_string(), |x| format!("{x:.4}"));
                println!("{variant:<16} seed {seed:<3} {metric:<10} {:.4} ± {std} (n={})", s.mean, s.n);
            }
        }
    }
    println!("complete: results in {}", out.display());
    Ok(())
}

fn open(args: &FoldArgs) -> anyhow::Result<(ResultsDir, usize, u64)> {
    let dir = ResultsDir::open(&args.out)?;
    dir.variant(&args.variant)?;
    let fold = args.folds.or(dir.manifest.folds.first().copied()).context("run has no folds")?;
    let seed = args.seed.or(dir.manifest.seeds.first().copied()).context("run has no seeds")?;
    Ok((dir, fold, seed))
}
