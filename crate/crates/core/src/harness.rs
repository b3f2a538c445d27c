//! Experiment runner: wires agents to the environment, runs every episode
//! online (no train/test split), and reports solve rates and steps above the
//! BFS minimum for the first half, the second half and the whole run.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::agent::{Agent, FastSlowAgent, FastSlowConfig, TrainTiming};
use crate::baselines::{Ablation, QLearningAgent, QLearningConfig};
use crate::error::{Error, Result};
use crate::gridworld::{EnvMode, EpisodeLayout, GridPos, GridWorld, GridWorldConfig};
use crate::oracle;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeResult {
    pub episode: usize,
    pub steps: usize,
    pub solved: bool,
    pub min_steps: usize,
    pub start: GridPos,
    pub goal: GridPos,
}

impl EpisodeResult {
    pub fn from_layout(layout: &EpisodeLayout, steps: usize, solved: bool) -> Self {
        let min_steps = oracle::bfs_min_steps(&layout.obstacles, layout.start, layout.goal)
            .expect("episode layouts are always solvable") as usize;
        Self { episode: layout.episode, steps, solved, min_steps, start: layout.start, goal: layout.goal }
    }

    pub fn steps_above_minimum(&self) -> usize {
        self.steps.saturating_sub(self.min_steps)
    }
}

#[derive(Serialize)]
struct EpisodeRow {
    seed: u64,
    episode: usize,
    steps: usize,
    min_steps: usize,
    solved: u8,
    start_x: i32,
    start_y: i32,
    goal_x: i32,
    goal_y: i32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AgentKind {
    FastSlow,
    QLearn,
    Ablated(Ablation),
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fastslow" => Ok(AgentKind::FastSlow),
            "qlearn" => Ok(AgentKind::QLearn),
            other => other.parse().map(AgentKind::Ablated).map_err(|_| {
                Error::Config(format!("unknown agent `{other}` (fastslow|qlearn|nofast|noslow|neither)"))
            }),
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentKind::FastSlow => f.write_str("fastslow"),
            AgentKind::QLearn => f.write_str("qlearn"),
            AgentKind::Ablated(a) => a.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvMode,
    pub size: usize,
    pub episodes: usize,
    pub switch_episode: usize,
    /// Step budget per episode; `None` means `size * size`.
    pub max_steps: Option<usize>,
    pub agent: AgentKind,
    pub alpha: f64,
    pub branches: usize,
    pub depth: usize,
    pub train_timing: TrainTiming,
    pub learning_rate: f64,
    /// Random-exploration episodes for Q-learning.
    pub k: usize,
    pub seeds: usize,
    pub seed_base: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let agent = FastSlowConfig::default();
        Self {
            env: EnvMode::Dynamic,
            size: 10,
            episodes: 100,
            switch_episode: 50,
            max_steps: None,
            agent: AgentKind::FastSlow,
            alpha: agent.alpha,
            branches: agent.branches,
            depth: agent.depth,
            train_timing: agent.train_timing,
            learning_rate: agent.learning_rate,
            k: QLearningConfig::default().random_episodes,
            seeds: 5,
            seed_base: 0,
            out: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    /// Sets one field by its key (`env`, `size`, `episodes`, `switch_episode`,
    /// `max_steps`, `agent`, `alpha`, `branches`, `depth`, `train_timing`,
    /// `learning_rate`, `k`, `seeds`, `seed_base`, `out`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "env" => self.env = value.trim().parse()?,
            "size" => self.size = parse_value(&key, value)?,
            "episodes" => self.episodes = parse_value(&key, value)?,
            "switch_episode" => self.switch_episode = parse_value(&key, value)?,
            "max_steps" => self.max_steps = Some(parse_value(&key, value)?),
            "agent" => self.agent = value.trim().parse()?,
            "alpha" => self.alpha = parse_value(&key, value)?,
            "branches" => self.branches = parse_value(&key, value)?,
            "depth" => self.depth = parse_value(&key, value)?,
            "train_timing" => self.train_timing = value.trim().parse()?,
            "learning_rate" | "lr" => self.learning_rate = parse_value(&key, value)?,
            "k" => self.k = parse_value(&key, value)?,
            "seeds" => self.seeds = parse_value(&key, value)?,
            "seed_base" => self.seed_base = parse_value(&key, value)?,
            "out" => self.out = Some(PathBuf::from(value.trim())),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected key=value, got `{line}`") })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.seeds == 0 {
            return Err(Error::Config("need at least one seed".into()));
        }
        self.world_config(0).validate()?;
        self.fast_slow_config(0).validate()?;
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed_base + i).collect()
    }

    pub fn world_config(&self, seed: u64) -> GridWorldConfig {
        GridWorldConfig {
            size: self.size,
            mode: self.env,
            switch_episode: self.switch_episode,
            max_steps: self.max_steps.unwrap_or(self.size * self.size),
            seed,
        }
    }

    pub fn fast_slow_config(&self, agent_seed: u64) -> FastSlowConfig {
        let base = FastSlowConfig {
            alpha: self.alpha,
            branches: self.branches,
            depth: self.depth,
            train_timing: self.train_timing,
            use_fast: true,
            use_slow: true,
            learning_rate: self.learning_rate,
            seed: agent_seed,
        };
        match self.agent {
            AgentKind::Ablated(variant) => variant.apply(base),
            _ => base,
        }
    }

    pub fn build_agent(&self, agent_seed: u64) -> Result<Box<dyn Agent + Send>> {
        Ok(match self.agent {
            AgentKind::QLearn => Box::new(QLearningAgent::new(QLearningConfig {
                random_episodes: self.k,
                seed: agent_seed,
                ..QLearningConfig::default()
            })?),
            _ => Box::new(FastSlowAgent::new(self.size, self.fast_slow_config(agent_seed))?),
        })
    }
}

/// Which episodes a metric covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeRange {
    FirstHalf,
    LastHalf,
    Total,
}

/// The slice of `results` covered by `range`. A single episode forms both halves.
pub fn select(results: &[EpisodeResult], range: EpisodeRange) -> &[EpisodeResult] {
    if results.len() <= 1 {
        return results;
    }
    let mid = results.len() / 2;
    match range {
        EpisodeRange::FirstHalf => &results[..mid],
        EpisodeRange::LastHalf => &results[mid..],
        EpisodeRange::Total => results,
    }
}

/// Percentage of solved episodes in `range`.
pub fn solve_rate(results: &[EpisodeResult], range: EpisodeRange) -> f64 {
    let slice = select(results, range);
    if slice.is_empty() {
        return 0.0;
    }
    100.0 * slice.iter().filter(|r| r.solved).count() as f64 / slice.len() as f64
}

/// Sum of steps taken beyond the BFS minimum; failures count the full budget.
pub fn steps_above_minimum(results: &[EpisodeResult], range: EpisodeRange) -> u64 {
    select(results, range).iter().map(|r| r.steps_above_minimum() as u64).sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Split {
    pub first: f64,
    pub last: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsSummary {
    pub solve_rate: Split,
    pub steps_above_minimum: Split,
}

impl MetricsSummary {
    pub fn from_results(results: &[EpisodeResult]) -> Self {
        let rate = |r| solve_rate(results, r);
        let above = |r| steps_above_minimum(results, r) as f64;
        Self {
            solve_rate: Split {
                first: rate(EpisodeRange::FirstHalf),
                last: rate(EpisodeRange::LastHalf),
                total: rate(EpisodeRange::Total),
            },
            steps_above_minimum: Split {
                first: above(EpisodeRange::FirstHalf),
                last: above(EpisodeRange::LastHalf),
                total: above(EpisodeRange::Total),
            },
        }
    }

    /// Field-wise mean.
    pub fn mean(summaries: &[MetricsSummary]) -> Self {
        let n = summaries.len().max(1) as f64;
        let avg = |f: fn(&MetricsSummary) -> Split| {
            let sum = summaries.iter().map(f).fold(Split::default(), |a, b| Split {
                first: a.first + b.first,
                last: a.last + b.last,
                total: a.total + b.total,
            });
            Split { first: sum.first / n, last: sum.last / n, total: sum.total / n }
        };
        Self { solve_rate: avg(|s| s.solve_rate), steps_above_minimum: avg(|s| s.steps_above_minimum) }
    }

    /// `metric,first50,last50,total` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["metric", "first50", "last50", "total"])?;
        for (name, split) in [("solve_rate", self.solve_rate), ("steps_above_minimum", self.steps_above_minimum)] {
            writer.write_record([name.to_string(), fmt_num(split.first), fmt_num(split.last), fmt_num(split.total)])?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub results: Vec<EpisodeResult>,
    pub summary: MetricsSummary,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub mean: MetricsSummary,
}

/// One seed: a fresh agent plays every episode in order, keeping what it
/// learned between episodes.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let world = GridWorld::new(cfg.world_config(seed))?;
    let mut env_rng = seed::rng_for(&[seed, 10]);
    let mut agent = cfg.build_agent(seed::derive(&[seed, 11]))?;
    let mut results = Vec::with_capacity(cfg.episodes);
    for episode in 1..=cfg.episodes {
        let layout = world.reset(episode, &mut env_rng)?;
        let started = Instant::now();
        let result = agent.run_episode(&layout);
        log::debug!(
            "agent={} seed={seed} episode={episode} steps={} min={} solved={} wall_ms={:.1}",
            cfg.agent,
            result.steps,
            result.min_steps,
            result.solved,
            started.elapsed().as_secs_f64() * 1e3
        );
        results.push(result);
    }
    let summary = MetricsSummary::from_results(&results);
    Ok(SeedRun { seed, results, summary })
}

/// Runs every seed (in parallel) and, if `cfg.out` is set, writes the CSVs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let runs = cfg.seed_list().into_par_iter().map(|seed| run_seed(cfg, seed)).collect::<Result<Vec<_>>>()?;
    let mean = MetricsSummary::mean(&runs.iter().map(|r| r.summary).collect::<Vec<_>>());
    let report = ExperimentReport { config: cfg.clone(), runs, mean };
    if let Some(dir) = &cfg.out {
        write_report(&report, dir)?;
    }
    Ok(report)
}

/// `seed,episode,steps,min_steps,solved,start_x,start_y,goal_x,goal_y` rows.
pub fn write_episodes_csv<W: std::io::Write>(runs: &[SeedRun], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for run in runs {
        for r in &run.results {
            writer.serialize(EpisodeRow {
                seed: run.seed,
                episode: r.episode,
                steps: r.steps,
                min_steps: r.min_steps,
                solved: u8::from(r.solved),
                start_x: r.start.x,
                start_y: r.start.y,
                goal_x: r.goal.x,
                goal_y: r.goal.y,
            })?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Writes `episodes.csv`, `summary.csv` (mean over seeds) and one
/// `summary_seed_<seed>.csv` per seed. Nothing is left behind on failure.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let mut outputs: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    let mut buf = Vec::new();
    write_episodes_csv(&report.runs, &mut buf)?;
    outputs.push((dir.join("episodes.csv"), buf));
    let mut buf = Vec::new();
    report.mean.write_csv(&mut buf)?;
    outputs.push((dir.join("summary.csv"), buf));
    for run in &report.runs {
        let mut buf = Vec::new();
        run.summary.write_csv(&mut buf)?;
        outputs.push((dir.join(format!("summary_seed_{}.csv", run.seed)), buf));
    }
    write_all_or_nothing(dir, &outputs)
}

fn write_all_or_nothing(dir: &Path, outputs: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (path, bytes) in outputs {
        if let Err(e) = fs::write(path, bytes) {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(e.into());
        }
        written.push(path.clone());
    }
    Ok(())
}

/// Cross-product of parameter values, read from `key=v1,v2,...` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepGrid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl SweepGrid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, values) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected key=v1,v2,..., got `{line}`") })?;
            let values: Vec<String> = expand_values(values)
                .map_err(|message| Error::Parse { line: i + 1, message })?;
            if values.is_empty() {
                return Err(Error::Parse { line: i + 1, message: format!("no values for `{key}`") });
            }
            axes.push((key.trim().to_string(), values));
        }
        Ok(Self { axes })
    }

    /// Every assignment, first axis varying slowest.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        self.axes.iter().fold(vec![Vec::new()], |acc, (key, values)| {
            acc.into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut point = prefix.clone();
                        point.push((key.clone(), v.clone()));
                        point
                    })
                })
                .collect()
        })
    }
}

/// Splits `a,b,c`, expanding integer ranges written `lo..hi` (inclusive).
fn expand_values(values: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    for item in values.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: i64 = lo.trim().parse().map_err(|_| format!("bad range start in `{item}`"))?;
            let hi: i64 = hi.trim().parse().map_err(|_| format!("bad range end in `{item}`"))?;
            out.extend((lo..=hi).map(|v| v.to_string()));
        } else {
            out.push(item.to_string());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub point: Vec<(String, String)>,
    pub summary: MetricsSummary,
}

/// Runs `template` at every grid point with the template's seeds.
pub fn sweep(template: &ExperimentConfig, grid: &SweepGrid) -> Result<Vec<SweepRow>> {
    let configs = grid
        .points()
        .into_iter()
        .map(|point| {
            let mut cfg = template.clone();
            cfg.out = None;
            for (k, v) in &point {
                cfg.set(k, v)?;
            }
            cfg.validate()?;
            Ok((point, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    configs
        .into_par_iter()
        .map(|(point, cfg)| Ok(SweepRow { point, summary: run_experiment(&cfg)?.mean }))
        .collect()
}

/// One row per grid point: the point's values followed by the six mean metrics.
pub fn write_sweep_csv<W: std::io::Write>(grid: &SweepGrid, rows: &[SweepRow], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<String> = grid.axes.iter().map(|(k, _)| k.clone()).collect();
    header.extend(
        ["solve_first50", "solve_last50", "solve_total", "above_first50", "above_last50", "above_total"]
            .map(String::from),
    );
    writer.write_record(&header)?;
    for row in rows {
        let mut record: Vec<String> = row.point.iter().map(|(_, v)| v.clone()).collect();
        let s = &row.summary;
        for v in [
            s.solve_rate.first,
            s.solve_rate.last,
            s.solve_rate.total,
            s.steps_above_minimum.first,
            s.steps_above_minimum.last,
            s.steps_above_minimum.total,
        ] {
            record.push(fmt_num(v));
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
