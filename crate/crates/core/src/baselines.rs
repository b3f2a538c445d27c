//! Tabular Q-learning and the ablated fast/slow variants.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{Agent, FastSlowAgent, FastSlowConfig};
use crate::error::{Error, Result};
use crate::gridworld::{EnvAction, EpisodeLayout, GridPos};
use crate::harness::EpisodeResult;
use crate::seed;

/// Action values keyed by state; unvisited entries read as zero.
#[derive(Clone, Debug)]
pub struct QTable<S> {
    values: HashMap<S, [f64; EnvAction::COUNT]>,
    pub discount: f64,
    pub learning_rate: f64,
}

impl<S: Copy + Eq + Hash> QTable<S> {
    pub fn new(discount: f64, learning_rate: f64) -> Self {
        Self { values: HashMap::new(), discount, learning_rate }
    }

    pub fn get(&self, s: S, a: EnvAction) -> f64 {
        self.values.get(&s).map_or(0.0, |q| q[a.index()])
    }

    pub fn row(&self, s: S) -> [f64; EnvAction::COUNT] {
        self.values.get(&s).copied().unwrap_or_default()
    }

    pub fn set(&mut self, s: S, a: EnvAction, value: f64) {
        self.values.entry(s).or_default()[a.index()] = value;
    }

    pub fn max_value(&self, s: S) -> f64 {
        self.row(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// One-step TD update: `Q(s,a) += lr * (r + discount * max Q(s2,.) - Q(s,a))`.
    pub fn td_update(&mut self, s: S, a: EnvAction, r: f64, s2: S) {
        let target = r + self.discount * self.max_value(s2);
        let current = self.get(s, a);
        let updated = if self.learning_rate == 1.0 {
            target
        } else {
            current + self.learning_rate * (target - current)
        };
        self.set(s, a, updated);
    }

    /// Uniformly random for the first `k` episodes, greedy afterwards.
    pub fn select<R: Rng + ?Sized>(&self, s: S, episode: usize, k: usize, rng: &mut R) -> EnvAction {
        if episode <= k {
            return *EnvAction::ALL.choose(rng).expect("non-empty");
        }
        let row = self.row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<EnvAction> = EnvAction::ALL.into_iter().filter(|a| row[a.index()] == best).collect();
        *tied.choose(rng).expect("at least one maximal value")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QLearningConfig {
    pub discount: f64,
    pub learning_rate: f64,
    /// Episodes of purely random exploration before acting greedily.
    pub random_episodes: usize,
    pub seed: u64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self { discount: 0.99, learning_rate: 1.0, random_episodes: 75, seed: 0 }
    }
}

/// Q-learning over `(position, goal)` states.
pub struct QLearningAgent {
    cfg: QLearningConfig,
    table: QTable<(GridPos, GridPos)>,
    rng: ChaCha8Rng,
}

impl QLearningAgent {
    pub fn new(cfg: QLearningConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.discount) {
            return Err(Error::Config(format!("discount must lie in [0, 1], got {}", cfg.discount)));
        }
        if !(cfg.learning_rate > 0.0 && cfg.learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning rate must lie in (0, 1], got {}", cfg.learning_rate)));
        }
        Ok(Self {
            table: QTable::new(cfg.discount, cfg.learning_rate),
            rng: seed::rng_for(&[cfg.seed, 4]),
            cfg,
        })
    }

    pub fn table(&self) -> &QTable<(GridPos, GridPos)> {
        &self.table
    }
}

impl Agent for QLearningAgent {
    fn run_episode(&mut self, layout: &EpisodeLayout) -> EpisodeResult {
        let goal = layout.goal;
        let mut state = layout.start;
        let mut steps = 0;
        let mut solved = false;
        while steps < layout.max_steps {
            let action = self.table.select((state, goal), layout.episode, self.cfg.random_episodes, &mut self.rng);
            let outcome = layout.step(state, action, steps);
            steps += 1;
            self.table.td_update((state, goal), action, f64::from(outcome.reward), (outcome.next_state, goal));
            state = outcome.next_state;
            if outcome.done {
                solved = true;
                break;
            }
        }
        EpisodeResult::from_layout(layout, steps, solved)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ablation {
    NoFast,
    NoSlow,
    Neither,
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nofast" | "no_fast" => Ok(Ablation::NoFast),
            "noslow" | "no_slow" => Ok(Ablation::NoSlow),
            "neither" => Ok(Ablation::Neither),
            other => Err(Error::Config(format!("unknown ablation `{other}`"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::NoFast => "nofast",
            Ablation::NoSlow => "noslow",
            Ablation::Neither => "neither",
        })
    }
}

impl Ablation {
    pub fn apply(self, cfg: FastSlowConfig) -> FastSlowConfig {
        let (use_fast, use_slow) = match self {
            Ablation::NoFast => (false, true),
            Ablation::NoSlow => (true, false),
            Ablation::Neither => (false, false),
        };
        FastSlowConfig { use_fast, use_slow, ..cfg }
    }
}

/// A fast/slow agent with one or both mechanisms removed.
pub fn ablation_agent(variant: Ablation, grid_size: usize, cfg: FastSlowConfig) -> Result<FastSlowAgent> {
    FastSlowAgent::new(grid_size, variant.apply(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{EnvMode, GridWorld, GridWorldConfig};
    use rand::SeedableRng;

    fn table() -> QTable<u32> {
        QTable::new(0.99, 1.0)
    }

    #[test]
    fn reward_into_terminal() {
        let mut q = table();
        q.td_update(0, EnvAction::Right, 1.0, 1);
        assert_eq!(q.get(0, EnvAction::Right), 1.0);
    }

    #[test]
    fn zero_reward_zero_successor() {
        let mut q = table();
        q.td_update(0, EnvAction::Up, 0.0, 1);
        assert_eq!(q.get(0, EnvAction::Up), 0.0);
    }

    #[test]
    fn discounted_bootstrap() {
        let mut q = table();
        q.set(1, EnvAction::Down, 1.0);
        q.td_update(0, EnvAction::Left, 0.0, 1);
        assert_eq!(q.get(0, EnvAction::Left), 0.99);
    }

    #[test]
    fn partial_learning_rate() {
        let mut q: QTable<u32> = QTable::new(0.5, 0.5);
        q.set(1, EnvAction::Up, 2.0);
        q.td_update(0, EnvAction::Up, 1.0, 1);
        // 0 + 0.5 * (1 + 0.5 * 2 - 0)
        assert_eq!(q.get(0, EnvAction::Up), 1.0);
    }

    #[test]
    fn chain_converges_to_discount_powers() {
        // States 0..5 on a line; action Right moves toward the terminal state 5.
        let mut q = table();
        let last = 5u32;
        for _ in 0..last {
            for s in 0..last {
                let r = if s + 1 == last { 1.0 } else { 0.0 };
                q.td_update(s, EnvAction::Right, r, s + 1);
            }
        }
        for s in 0..last {
            let d = (last - s - 1) as i32;
            assert!((q.get(s, EnvAction::Right) - 0.99f64.powi(d)).abs() < 1e-9);
        }
    }

    #[test]
    fn random_phase_is_uniform() {
        let q = table();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hist = [0f64; 4];
        for _ in 0..10_000 {
            hist[q.select(0, 3, 75, &mut rng).index()] += 1.0;
        }
        let chi2: f64 = hist.iter().map(|o| (o - 2500.0).powi(2) / 2500.0).sum();
        // 3 degrees of freedom, p = 0.001.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn greedy_phase_takes_argmax() {
        let mut q = table();
        q.set(0, EnvAction::Left, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            assert_eq!(q.select(0, 76, 75, &mut rng), EnvAction::Left);
        }
    }

    #[test]
    fn greedy_ties_are_random() {
        let q = table();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut seen = [false; 4];
        for _ in 0..200 {
            seen[q.select(7, 100, 75, &mut rng).index()] = true;
        }
        assert_eq!(seen, [true; 4]);
    }

    #[test]
    fn greedy_phase_is_deterministic_given_seed() {
        let mut q = table();
        q.set(0, EnvAction::Down, 0.5);
        q.set(0, EnvAction::Up, 0.5);
        let picks = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| q.select(0, 90, 75, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(picks(9), picks(9));
    }

    #[test]
    fn ablation_flags() {
        let base = FastSlowConfig::default();
        let cases = [(Ablation::NoFast, false, true), (Ablation::NoSlow, true, false), (Ablation::Neither, false, false)];
        for (variant, fast, slow) in cases {
            let agent = ablation_agent(variant, 10, base.clone()).unwrap();
            assert_eq!((agent.config().use_fast, agent.config().use_slow), (fast, slow));
            assert_eq!(variant.to_string().parse::<Ablation>().unwrap(), variant);
        }
    }

    #[test]
    fn no_slow_never_plans() {
        let world = GridWorld::new(GridWorldConfig::new(6, EnvMode::Static)).unwrap();
        let mut agent = ablation_agent(Ablation::NoSlow, 6, FastSlowConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for episode in 1..=3 {
            agent.run_episode(&world.reset(episode, &mut rng).unwrap());
        }
        assert_eq!(agent.lookahead_calls(), 0);
    }

    #[test]
    fn q_agent_respects_budget() {
        let world = GridWorld::new(GridWorldConfig::new(10, EnvMode::Static)).unwrap();
        let mut agent = QLearningAgent::new(QLearningConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for episode in 1..=20 {
            let result = agent.run_episode(&world.reset(episode, &mut rng).unwrap());
            assert!(result.steps <= 100);
            if !result.solved {
                assert_eq!(result.steps, 100);
            }
        }
    }
}
