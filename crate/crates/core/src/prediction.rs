//! Next-action vs next-state prediction benchmark.
//!
//! Both networks see `(start, goal)` and learn the greedy move toward the goal
//! under an x-first bias; halfway through training the labels switch to a
//! y-first bias. Accuracy is recorded on the training set after every epoch.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gridworld::GridPos;
use crate::neural::{Adam, Mlp, Target, TrainingPair};
use crate::oracle::{greedy_label, greedy_next_state, AxisBias};
use crate::seed;

/// Moves in the benchmark, which unlike the environment includes staying put.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchAction {
    Up,
    Down,
    Left,
    Right,
    DontMove,
}

impl BenchAction {
    pub const COUNT: usize = 5;
    pub const ALL: [BenchAction; 5] =
        [BenchAction::Up, BenchAction::Down, BenchAction::Left, BenchAction::Right, BenchAction::DontMove];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn apply(self, pos: GridPos) -> GridPos {
        let (dx, dy) = match self {
            BenchAction::Up => (0, -1),
            BenchAction::Down => (0, 1),
            BenchAction::Left => (-1, 0),
            BenchAction::Right => (1, 0),
            BenchAction::DontMove => (0, 0),
        };
        GridPos::new(pos.x + dx, pos.y + dy)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BenchDataset {
    pub size: usize,
    pub pairs: Vec<(GridPos, GridPos)>,
}

impl BenchDataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn action_labels(&self, bias: AxisBias) -> Vec<BenchAction> {
        self.pairs.iter().map(|(s, g)| greedy_label(*s, *g, bias)).collect()
    }

    pub fn next_state_labels(&self, bias: AxisBias) -> Vec<GridPos> {
        self.pairs.iter().map(|(s, g)| greedy_next_state(*s, *g, bias)).collect()
    }

    pub fn action_examples(&self, bias: AxisBias) -> Vec<TrainingPair> {
        self.pairs
            .iter()
            .zip(self.action_labels(bias))
            .map(|((s, g), a)| TrainingPair::action(*s, *g, a.index()))
            .collect()
    }

    pub fn next_state_examples(&self, bias: AxisBias) -> Vec<TrainingPair> {
        self.pairs
            .iter()
            .zip(self.next_state_labels(bias))
            .map(|((s, g), next)| TrainingPair {
                start: *s,
                goal: *g,
                target: Target::NextState { x: next.x as usize, y: next.y as usize },
            })
            .collect()
    }
}

/// `count` start/goal pairs drawn independently and uniformly; start may equal goal.
pub fn generate_dataset<R: Rng + ?Sized>(n: usize, count: usize, rng: &mut R) -> BenchDataset {
    let mut cell = || GridPos::new(rng.gen_range(0..n as i32), rng.gen_range(0..n as i32));
    let pairs = (0..count).map(|_| (cell(), cell())).collect();
    BenchDataset { size: n, pairs }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PredictionTask {
    Action,
    State,
}

impl FromStr for PredictionTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "action" => Ok(PredictionTask::Action),
            "state" => Ok(PredictionTask::State),
            other => Err(Error::Config(format!("unknown prediction task `{other}`"))),
        }
    }
}

impl fmt::Display for PredictionTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredictionTask::Action => "action",
            PredictionTask::State => "state",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionConfig {
    pub task: PredictionTask,
    pub size: usize,
    pub samples: usize,
    /// Epochs per labelling phase.
    pub phase_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl PredictionConfig {
    /// 50 + 50 epochs for actions, 200 + 200 for next states.
    pub fn new(task: PredictionTask, size: usize, seed: u64) -> Self {
        let phase_epochs = match task {
            PredictionTask::Action => 50,
            PredictionTask::State => 200,
        };
        Self { task, size, samples: 1000, phase_epochs, batch_size: 32, learning_rate: 1e-3, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::Config(format!("grid size must be at least 2, got {}", self.size)));
        }
        if self.samples == 0 || self.batch_size == 0 || self.phase_epochs == 0 {
            return Err(Error::Config("samples, batch size and epochs must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 0 is the untrained network; training epochs count from 1.
    pub epoch: usize,
    pub accuracy: f64,
    /// 1 for x-first labels, 2 after the switch to y-first.
    pub phase: u8,
    #[serde(skip)]
    pub mean_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRun {
    pub config: PredictionConfig,
    pub records: Vec<EpochRecord>,
}

impl PredictionRun {
    /// Epochs into `phase` until accuracy first reaches `threshold`.
    pub fn epochs_to_accuracy(&self, phase: u8, threshold: f64) -> Option<usize> {
        let offset = if phase == 1 { 0 } else { self.config.phase_epochs };
        self.records
            .iter()
            .filter(|r| r.phase == phase && r.epoch > 0)
            .find(|r| r.accuracy >= threshold)
            .map(|r| r.epoch - offset)
    }

    pub fn untrained_accuracy(&self) -> f64 {
        self.records[0].accuracy
    }

    /// Writes `epoch,accuracy,phase` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for record in &self.records {
            writer.serialize(record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub fn run_prediction(config: &PredictionConfig) -> Result<PredictionRun> {
    config.validate()?;
    let mut rng = seed::rng_for(&[config.seed, 5]);
    let dataset = generate_dataset(config.size, config.samples, &mut rng);
    let (mut net, phases) = match config.task {
        PredictionTask::Action => (
            Mlp::policy(config.size, BenchAction::COUNT, &mut rng),
            [dataset.action_examples(AxisBias::XFirst), dataset.action_examples(AxisBias::YFirst)],
        ),
        PredictionTask::State => (
            Mlp::next_state_predictor(config.size, &mut rng),
            [dataset.next_state_examples(AxisBias::XFirst), dataset.next_state_examples(AxisBias::YFirst)],
        ),
    };
    let mut adam = Adam::new(&net, config.learning_rate);
    let mut records = vec![EpochRecord {
        epoch: 0,
        accuracy: net.accuracy(&phases[0]),
        phase: 1,
        mean_loss: net.loss(&phases[0]),
    }];
    let mut order: Vec<usize> = (0..config.samples).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    for (phase, examples) in phases.iter().enumerate() {
        for _ in 0..config.phase_epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(config.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| examples[i]));
                loss_sum += net.train_step(&mut adam, &batch);
                batches += 1;
            }
            records.push(EpochRecord {
                epoch: records.len(),
                accuracy: net.accuracy(examples),
                phase: phase as u8 + 1,
                mean_loss: loss_sum / batches as f64,
            });
        }
    }
    Ok(PredictionRun { config: config.clone(), records })
}

/// 50 epochs on x-first action labels, then 50 on y-first.
pub fn run_action_experiment(n: usize, seed: u64) -> Result<PredictionRun> {
    run_prediction(&PredictionConfig::new(PredictionTask::Action, n, seed))
}

/// 200 epochs on x-first next-cell labels, then 200 on y-first.
pub fn run_state_experiment(n: usize, seed: u64) -> Result<PredictionRun> {
    run_prediction(&PredictionConfig::new(PredictionTask::State, n, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dataset_is_reproducible() {
        let a = generate_dataset(10, 1000, &mut ChaCha8Rng::seed_from_u64(1));
        let b = generate_dataset(10, 1000, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(a.len(), 1000);
    }

    #[test]
    fn labels_follow_the_greedy_rule() {
        let data = generate_dataset(10, 1000, &mut ChaCha8Rng::seed_from_u64(2));
        for bias in [AxisBias::XFirst, AxisBias::YFirst] {
            for ((s, g), label) in data.pairs.iter().zip(data.action_labels(bias)) {
                // Independent restatement of the labelling rule.
                let (dx, dy) = (g.x - s.x, g.y - s.y);
                let expected = match (bias, dx.signum(), dy.signum()) {
                    (_, 0, 0) => BenchAction::DontMove,
                    (AxisBias::XFirst, 1, _) | (AxisBias::YFirst, 1, 0) => BenchAction::Right,
                    (AxisBias::XFirst, -1, _) | (AxisBias::YFirst, -1, 0) => BenchAction::Left,
                    (_, _, 1) => BenchAction::Down,
                    (_, _, -1) => BenchAction::Up,
                    _ => unreachable!(),
                };
                assert_eq!(label, expected);
            }
            for ((s, _), (label, next)) in
                data.pairs.iter().zip(data.action_labels(bias).into_iter().zip(data.next_state_labels(bias)))
            {
                assert_eq!(label.apply(*s), next);
            }
        }
    }

    #[test]
    fn coincident_pairs_appear() {
        // P(no start == goal in 1000 draws) = 0.99^1000 ≈ 4.3e-5.
        let hits = (0..20u64)
            .filter(|seed| {
                let data = generate_dataset(10, 1000, &mut ChaCha8Rng::seed_from_u64(*seed));
                data.pairs.iter().any(|(s, g)| s == g)
            })
            .count();
        assert_eq!(hits, 20);
    }

    #[test]
    fn bias_switch_only_touches_diagonal_pairs() {
        let data = generate_dataset(10, 1000, &mut ChaCha8Rng::seed_from_u64(3));
        let x = data.action_labels(AxisBias::XFirst);
        let y = data.action_labels(AxisBias::YFirst);
        for (((s, g), a), b) in data.pairs.iter().zip(&x).zip(&y) {
            let both_differ = s.x != g.x && s.y != g.y;
            assert_eq!(a != b, both_differ);
        }
    }

    #[test]
    fn record_layout() {
        let cfg = PredictionConfig { phase_epochs: 3, samples: 64, ..PredictionConfig::new(PredictionTask::Action, 5, 0) };
        let run = run_prediction(&cfg).unwrap();
        let phases: Vec<(usize, u8)> = run.records.iter().map(|r| (r.epoch, r.phase)).collect();
        assert_eq!(phases, vec![(0, 1), (1, 1), (2, 1), (3, 1), (4, 2), (5, 2), (6, 2)]);
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,accuracy,phase\n0,"));
        assert_eq!(text.lines().count(), 8);
    }

    #[test]
    fn epochs_to_accuracy_is_phase_relative() {
        let cfg = PredictionConfig::new(PredictionTask::Action, 5, 0);
        let rec = |epoch, accuracy, phase| EpochRecord { epoch, accuracy, phase, mean_loss: 0.0 };
        let mut records = vec![rec(0, 0.2, 1)];
        records.extend((1..=50).map(|e| rec(e, if e >= 7 { 0.995 } else { 0.5 }, 1)));
        records.extend((51..=100).map(|e| rec(e, if e >= 53 { 0.995 } else { 0.5 }, 2)));
        let run = PredictionRun { config: cfg, records };
        assert_eq!(run.epochs_to_accuracy(1, 0.99), Some(7));
        assert_eq!(run.epochs_to_accuracy(2, 0.99), Some(3));
        assert_eq!(run.epochs_to_accuracy(2, 0.999), None);
    }

    #[test]
    fn untrained_accuracy_near_chance() {
        let mut accs = Vec::new();
        for seed in 0..5 {
            let cfg = PredictionConfig { phase_epochs: 1, ..PredictionConfig::new(PredictionTask::Action, 10, seed) };
            accs.push(run_prediction(&cfg).unwrap().untrained_accuracy());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.2).abs() <= 0.1, "mean untrained accuracy {mean}");
    }

    #[test]
    fn untrained_state_accuracy_near_chance() {
        let mut accs = Vec::new();
        for seed in 0..5 {
            let cfg = PredictionConfig { phase_epochs: 1, ..PredictionConfig::new(PredictionTask::State, 10, seed) };
            accs.push(run_prediction(&cfg).unwrap().untrained_accuracy());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.1).abs() <= 0.1, "mean untrained accuracy {mean}");
    }
}
