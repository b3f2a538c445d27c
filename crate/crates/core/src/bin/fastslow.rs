use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use fastslow::harness::{self, ExperimentConfig, SweepGrid};
use fastslow::prediction::{self, PredictionConfig, PredictionTask};

#[derive(Parser)]
#[command(name = "fastslow", about = "Online grid-world navigation with a fast policy and a slow planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment over several seeds.
    Run(RunArgs),
    /// Run an experiment at every point of a parameter grid.
    Sweep {
        /// File of `key=v1,v2,...` lines.
        #[arg(long)]
        grid: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Supervised action / next-state prediction benchmark.
    Predict {
        #[arg(long, default_value = "action")]
        task: PredictionTask,
        #[arg(long, default_value_t = 10)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training epochs per labelling phase.
        #[arg(long)]
        epochs: Option<usize>,
        /// CSV output path; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags override the config file, which overrides the defaults.
#[derive(Args)]
struct RunArgs {
    /// File of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    size: Option<String>,
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    episodes: Option<String>,
    /// Number of seeds, starting at `--seed-base`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    seed_base: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    branches: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    /// `step` or `episode`.
    #[arg(long)]
    train_timing: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    /// Random-exploration episodes for Q-learning.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    switch_episode: Option<String>,
    #[arg(long)]
    max_steps: Option<String>,
    /// Output directory (run) or CSV file (sweep).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        let flags = [
            ("env", &self.env),
            ("size", &self.size),
            ("agent", &self.agent),
            ("episodes", &self.episodes),
            ("seeds", &self.seeds),
            ("seed_base", &self.seed_base),
            ("alpha", &self.alpha),
            ("branches", &self.branches),
            ("depth", &self.depth),
            ("train_timing", &self.train_timing),
            ("learning_rate", &self.learning_rate),
            ("k", &self.k),
            ("switch_episode", &self.switch_episode),
            ("max_steps", &self.max_steps),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.out = None;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(label: &str, summary: &harness::MetricsSummary) {
    let (s, a) = (summary.solve_rate, summary.steps_above_minimum);
    println!(
        "{label}: solve {:.1}/{:.1}/{:.1}%  above-min {:.1}/{:.1}/{:.1}  (first/last/total)",
        s.first, s.last, s.total, a.first, a.last, a.total
    );
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = args.config()?;
            cfg.out = args.out.clone();
            let report = harness::run_experiment(&cfg)?;
            for run in &report.runs {
                print_summary(&format!("seed {}", run.seed), &run.summary);
            }
            print_summary("mean", &report.mean);
            if let Some(dir) = &cfg.out {
                println!("wrote {}", dir.display());
            }
        }
        Command::Sweep { grid, run } => {
            let template = run.config()?;
            let text = fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let grid = SweepGrid::parse(&text)?;
            let rows = harness::sweep(&template, &grid)?;
            match &run.out {
                Some(path) => {
                    let mut buf = Vec::new();
                    harness::write_sweep_csv(&grid, &rows, &mut buf)?;
                    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
                    println!("wrote {}", path.display());
                }
                None => harness::write_sweep_csv(&grid, &rows, std::io::stdout())?,
            }
        }
        Command::Predict { task, size, seed, epochs, out } => {
            let mut cfg = PredictionConfig::new(task, size, seed);
            if let Some(e) = epochs {
                cfg.phase_epochs = e;
            }
            let result = prediction::run_prediction(&cfg)?;
            match &out {
                Some(path) => {
                    let mut buf = Vec::new();
                    result.write_csv(&mut buf)?;
                    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
                    println!("wrote {}", path.display());
                }
                None => result.write_csv(std::io::stdout())?,
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
