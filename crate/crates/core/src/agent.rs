//! The combined fast/slow agent.
//!
//! Every step the agent
//! 1. scores actions with the goal-conditioned policy, penalised by
//!    `alpha * sqrt(visits)` for the current state ([`select_action`]),
//! 2. plans over the overall memory bank and, if a path to the goal exists,
//!    takes its first action instead,
//! 3. acts, stores the transition in both banks (evicting contradictions),
//! 4. replays the visited and the imagined trajectories as
//!    `(state, goal) -> action` examples and takes one Adam step.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gridworld::{EnvAction, EpisodeLayout, GridPos};
use crate::harness::EpisodeResult;
use crate::memory::{self, EpisodicMemory, LookaheadParams, LookaheadResult, MemoryBank};
use crate::neural::{Adam, Mlp, TrainingPair};
use crate::seed;

/// Anything the harness can drive through a sequence of episodes.
pub trait Agent {
    fn run_episode(&mut self, layout: &EpisodeLayout) -> EpisodeResult;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainTiming {
    /// Replay and update after every environment step.
    EveryStep,
    /// A single replay update once the episode has finished.
    EpisodeEnd,
}

impl FromStr for TrainTiming {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" | "every_step" => Ok(TrainTiming::EveryStep),
            "episode" | "episode_end" => Ok(TrainTiming::EpisodeEnd),
            other => Err(Error::Config(format!("unknown train timing `{other}`"))),
        }
    }
}

impl fmt::Display for TrainTiming {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainTiming::EveryStep => "step",
            TrainTiming::EpisodeEnd => "episode",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FastSlowConfig {
    /// Weight of the count penalty in action selection.
    pub alpha: f64,
    pub branches: usize,
    pub depth: usize,
    pub train_timing: TrainTiming,
    pub use_fast: bool,
    pub use_slow: bool,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for FastSlowConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            branches: 100,
            depth: 20,
            train_timing: TrainTiming::EveryStep,
            use_fast: true,
            use_slow: true,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl FastSlowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.branches == 0 {
            return Err(Error::Config("branches must be at least 1".into()));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be finite and non-negative, got {}", self.alpha)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Actually visited, from the episode start to the current state.
    Past,
    /// Imagined by lookahead, from the current state to the goal.
    Future,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub steps: Vec<(GridPos, EnvAction)>,
}

impl Trajectory {
    pub fn past() -> Self {
        Self { kind: TrajectoryKind::Past, steps: Vec::new() }
    }

    pub fn future(steps: Vec<(GridPos, EnvAction)>) -> Self {
        Self { kind: TrajectoryKind::Future, steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// `p(a) - alpha * sqrt(counts(a))` for every action.
pub fn action_scores(p: &[f64], counts: &[u32; EnvAction::COUNT], alpha: f64) -> [f64; EnvAction::COUNT] {
    debug_assert_eq!(p.len(), EnvAction::COUNT);
    std::array::from_fn(|a| p[a] - alpha * f64::from(counts[a]).sqrt())
}

/// Argmax of [`action_scores`], ties broken uniformly at random.
pub fn select_action<R: Rng + ?Sized>(
    p: &[f64],
    counts: &[u32; EnvAction::COUNT],
    alpha: f64,
    rng: &mut R,
) -> EnvAction {
    let scores = action_scores(p, counts, alpha);
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<EnvAction> = EnvAction::ALL
        .into_iter()
        .filter(|a| scores[a.index()] >= best - 1e-12)
        .collect();
    *tied.choose(rng).expect("at least one maximal score")
}

/// Replay examples: every visited state paired with `current` as its goal,
/// then every imagined state paired with the true `goal`.
pub fn build_replay_pairs(
    past: &Trajectory,
    future: Option<&Trajectory>,
    current: GridPos,
    goal: GridPos,
) -> Vec<TrainingPair> {
    let imagined = future.map_or(&[][..], |f| f.steps.as_slice());
    past.steps
        .iter()
        .map(|(s, a)| TrainingPair::action(*s, current, a.index()))
        .chain(imagined.iter().map(|(s, a)| TrainingPair::action(*s, goal, a.index())))
        .collect()
}

/// What the agent decided for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDecision {
    pub action: EnvAction,
    /// The count-penalised choice before any memory override.
    pub proposed: EnvAction,
    pub lookahead: LookaheadResult,
}

pub struct FastSlowAgent {
    cfg: FastSlowConfig,
    policy: Mlp,
    adam: Adam,
    overall: MemoryBank,
    episodic: EpisodicMemory,
    rng: ChaCha8Rng,
    planning_seed: u64,
    step_index: u64,
    lookahead_calls: u64,
}

impl FastSlowAgent {
    pub fn new(grid_size: usize, cfg: FastSlowConfig) -> Result<Self> {
        cfg.validate()?;
        if grid_size < 2 {
            return Err(Error::Config(format!("grid size must be at least 2, got {grid_size}")));
        }
        let mut init_rng = seed::rng_for(&[cfg.seed, 1]);
        let policy = Mlp::policy(grid_size, EnvAction::COUNT, &mut init_rng);
        let adam = Adam::new(&policy, cfg.learning_rate);
        Ok(Self {
            rng: seed::rng_for(&[cfg.seed, 2]),
            planning_seed: seed::derive(&[cfg.seed, 3]),
            policy,
            adam,
            overall: MemoryBank::new(),
            episodic: EpisodicMemory::default(),
            step_index: 0,
            lookahead_calls: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &FastSlowConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &Mlp {
        &self.policy
    }

    pub fn overall_memory(&self) -> &MemoryBank {
        &self.overall
    }

    pub fn episodic_memory(&self) -> &EpisodicMemory {
        &self.episodic
    }

    /// Number of planning calls made so far.
    pub fn lookahead_calls(&self) -> u64 {
        self.lookahead_calls
    }

    /// Clears the episodic bank and visit counts; the overall bank persists.
    pub fn begin_episode(&mut self) {
        self.episodic.reset();
    }

    /// Action probabilities: the policy's if the fast mechanism is on, else uniform.
    pub fn action_probs(&self, state: GridPos, goal: GridPos) -> Vec<f64> {
        if self.cfg.use_fast {
            self.policy.action_probs(state, goal)
        } else {
            vec![1.0 / EnvAction::COUNT as f64; EnvAction::COUNT]
        }
    }

    /// Chooses the action for `state`, overriding with planned memory when it
    /// reaches `goal`. Does not touch the environment or any memory.
    pub fn agent_step(&mut self, state: GridPos, goal: GridPos) -> StepDecision {
        let p = self.action_probs(state, goal);
        let counts = self.episodic.counts.numvisits(state);
        let proposed = select_action(&p, &counts, self.cfg.alpha, &mut self.rng);
        let lookahead = if self.cfg.use_slow {
            self.lookahead_calls += 1;
            let params = LookaheadParams {
                branches: self.cfg.branches,
                depth: self.cfg.depth,
                seed: self.planning_seed,
                step: self.step_index,
            };
            memory::lookahead(&self.overall, state, goal, params)
        } else {
            LookaheadResult::not_found()
        };
        self.step_index += 1;
        let action = lookahead.first_action().unwrap_or(proposed);
        StepDecision { action, proposed, lookahead }
    }

    /// Stores an observed transition in both banks and counts the visit.
    pub fn observe(&mut self, state: GridPos, action: EnvAction, next_state: GridPos) {
        self.overall.store(state, action, next_state);
        self.episodic.bank.store(state, action, next_state);
        self.episodic.counts.record_visit(state, action);
    }

    /// One optimiser step on the replay pairs; no-op without the fast mechanism.
    pub fn replay(&mut self, past: &Trajectory, future: Option<&Trajectory>, current: GridPos, goal: GridPos) {
        if !self.cfg.use_fast || past.is_empty() {
            return;
        }
        let pairs = build_replay_pairs(past, future, current, goal);
        self.policy.train_step(&mut self.adam, &pairs);
    }
}

impl Agent for FastSlowAgent {
    fn run_episode(&mut self, layout: &EpisodeLayout) -> EpisodeResult {
        self.begin_episode();
        let goal = layout.goal;
        let mut state = layout.start;
        let mut past = Trajectory::past();
        let mut last_future: Option<Trajectory> = None;
        let mut steps = 0;
        let mut solved = false;

        while steps < layout.max_steps {
            let decision = self.agent_step(state, goal);
            let outcome = layout.step(state, decision.action, steps);
            steps += 1;
            self.observe(state, decision.action, outcome.next_state);
            past.steps.push((state, decision.action));
            let future = decision.lookahead.found.then(|| Trajectory::future(decision.lookahead.trajectory));
            state = outcome.next_state;

            if self.cfg.train_timing == TrainTiming::EveryStep {
                self.replay(&past, future.as_ref(), state, goal);
            }
            if future.is_some() {
                last_future = future;
            }
            if outcome.done {
                solved = true;
                break;
            }
        }

        if self.cfg.train_timing == TrainTiming::EpisodeEnd {
            self.replay(&past, last_future.as_ref(), state, goal);
        }
        EpisodeResult::from_layout(layout, steps, solved)
    }
}
