//! Transition memory: the slow mechanism.
//!
//! A [`MemoryBank`] maps a state to the transitions observed from it. Each
//! (state, action) slot holds at most one next state; storing a new
//! observation for the slot evicts whatever contradicted it. [`lookahead`]
//! runs independent random walks over a bank and keeps the shortest walk
//! that reaches the goal.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gridworld::{EnvAction, GridPos};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TransitionRecord {
    pub state: GridPos,
    pub action: EnvAction,
    pub next_state: GridPos,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemoryBank {
    entries: HashMap<GridPos, [Option<GridPos>; EnvAction::COUNT]>,
}

impl MemoryBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records `s --a--> s2`, evicting any stored `s --a--> s2'` with `s2' != s2`.
    pub fn store(&mut self, s: GridPos, a: EnvAction, s2: GridPos) {
        self.entries.entry(s).or_insert([None; EnvAction::COUNT])[a.index()] = Some(s2);
    }

    /// Stored `(action, next_state)` pairs for `s`, in action order.
    pub fn lookup(&self, s: GridPos) -> Vec<(EnvAction, GridPos)> {
        self.entries.get(&s).map_or_else(Vec::new, collect_slots)
    }

    pub fn next_state(&self, s: GridPos, a: EnvAction) -> Option<GridPos> {
        self.entries.get(&s).and_then(|slots| slots[a.index()])
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of stored transitions.
    pub fn len(&self) -> usize {
        self.entries.values().map(|slots| slots.iter().flatten().count()).sum()
    }

    /// All transitions, sorted by state then action.
    pub fn records(&self) -> Vec<TransitionRecord> {
        let mut keys: Vec<_> = self.entries.keys().copied().collect();
        keys.sort();
        keys.into_iter()
            .flat_map(|state| {
                self.lookup(state).into_iter().map(move |(action, next_state)| TransitionRecord {
                    state,
                    action,
                    next_state,
                })
            })
            .collect()
    }

    /// Line-oriented dump, one `sx,sy,action,nx,ny` per transition.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            let _ = writeln!(out, "{},{},{},{},{}", r.state.x, r.state.y, r.action, r.next_state.x, r.next_state.y);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut bank = MemoryBank::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
            }
            let coord = |s: &str| s.trim().parse::<i32>().map_err(|e| parse_err(e.to_string()));
            let action = EnvAction::from_name(fields[2].trim())
                .ok_or_else(|| parse_err(format!("unknown action `{}`", fields[2])))?;
            bank.store(
                GridPos::new(coord(fields[0])?, coord(fields[1])?),
                action,
                GridPos::new(coord(fields[3])?, coord(fields[4])?),
            );
        }
        Ok(bank)
    }
}

fn collect_slots(slots: &[Option<GridPos>; EnvAction::COUNT]) -> Vec<(EnvAction, GridPos)> {
    EnvAction::ALL
        .into_iter()
        .zip(slots.iter())
        .filter_map(|(a, s)| s.map(|s| (a, s)))
        .collect()
}

/// Per-episode (state, action) visit counters.
#[derive(Clone, Debug, Default)]
pub struct VisitCounts {
    counts: HashMap<GridPos, [u32; EnvAction::COUNT]>,
}

impl VisitCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_visit(&mut self, s: GridPos, a: EnvAction) {
        self.counts.entry(s).or_default()[a.index()] += 1;
    }

    /// Counts for every action from `s`, zero where unseen.
    pub fn numvisits(&self, s: GridPos) -> [u32; EnvAction::COUNT] {
        self.counts.get(&s).copied().unwrap_or_default()
    }

    pub fn clear(&mut self) {
        self.counts.clear();
    }
}

/// Episodic transitions plus the visit counts that feed action selection.
/// Both are cleared together at the start of every episode.
#[derive(Clone, Debug, Default)]
pub struct EpisodicMemory {
    pub bank: MemoryBank,
    pub counts: VisitCounts,
}

impl EpisodicMemory {
    pub fn reset(&mut self) {
        self.bank.clear();
        self.counts.clear();
    }
}

/// An ordered `(state, action)` path produced by planning.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LookaheadResult {
    pub trajectory: Vec<(GridPos, EnvAction)>,
    pub found: bool,
}

impl LookaheadResult {
    pub fn not_found() -> Self {
        Self::default()
    }

    pub fn first_action(&self) -> Option<EnvAction> {
        if self.found {
            self.trajectory.first().map(|(_, a)| *a)
        } else {
            None
        }
    }
}

/// Parameters for one planning call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LookaheadParams {
    pub branches: usize,
    pub depth: usize,
    /// Root seed; branch `i` of call `step` draws from its own stream.
    pub seed: u64,
    pub step: u64,
}

/// Runs `branches` random walks of at most `depth` transitions from `start`
/// over `bank` and returns the shortest walk that lands on `goal`.
///
/// A walk samples uniformly among the stored transitions of its current state
/// and stops at the goal, at a state with nothing stored, or at the depth
/// bound. The goal test happens after each transition. Ties between equally
/// short walks go to the lowest branch index, so the result does not depend
/// on thread scheduling.
pub fn lookahead(bank: &MemoryBank, start: GridPos, goal: GridPos, params: LookaheadParams) -> LookaheadResult {
    if bank.is_empty() || params.branches == 0 || params.depth == 0 {
        return LookaheadResult::not_found();
    }
    let walk = |branch: usize| {
        let mut rng = seed::rng_for(&[params.seed, params.step, branch as u64]);
        random_walk(bank, start, goal, params.depth, &mut rng)
    };
    // Small planning calls are cheaper on one thread than on the pool.
    let walks: Vec<Option<Vec<(GridPos, EnvAction)>>> = if params.branches * params.depth >= 4096 {
        (0..params.branches).into_par_iter().map(walk).collect()
    } else {
        (0..params.branches).map(walk).collect()
    };
    walks
        .into_iter()
        .flatten()
        .min_by_key(Vec::len)
        .map_or_else(LookaheadResult::not_found, |trajectory| LookaheadResult { trajectory, found: true })
}

/// One lookahead branch; `Some(path)` iff the walk reached `goal`.
pub fn random_walk<R: Rng + ?Sized>(
    bank: &MemoryBank,
    start: GridPos,
    goal: GridPos,
    depth: usize,
    rng: &mut R,
) -> Option<Vec<(GridPos, EnvAction)>> {
    let mut path = Vec::with_capacity(depth);
    let mut state = start;
    for _ in 0..depth {
        let slots = bank.entries.get(&state)?;
        let present = slots.iter().filter(|s| s.is_some()).count();
        if present == 0 {
            return None;
        }
        let pick = rng.gen_range(0..present);
        let (action, next) = EnvAction::ALL
            .into_iter()
            .zip(slots.iter())
            .filter_map(|(a, s)| s.map(|s| (a, s)))
            .nth(pick)
            .expect("pick < present");
        path.push((state, action));
        state = next;
        if state == goal {
            return Some(path);
        }
    }
    None
}
