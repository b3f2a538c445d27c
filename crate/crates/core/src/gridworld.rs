//! The n×n navigation environment.
//!
//! Coordinates use `x` for the column and `y` for the row with the origin at
//! the top-left cell, so `Up` decreases `y`. The agent only ever observes its
//! own cell and the goal cell; obstacles are part of the world, never of the
//! observation.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle;

/// A cell on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl GridPos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn in_bounds(self, n: usize) -> bool {
        self.x >= 0 && self.y >= 0 && (self.x as usize) < n && (self.y as usize) < n
    }

    pub fn manhattan(self, other: GridPos) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// The neighbouring cell in `action`'s direction, which may lie off the grid.
    pub fn offset(self, action: EnvAction) -> GridPos {
        let (dx, dy) = action.delta();
        GridPos::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Movement actions available in the environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvAction {
    Up,
    Down,
    Left,
    Right,
}

impl EnvAction {
    pub const COUNT: usize = 4;
    pub const ALL: [EnvAction; 4] = [EnvAction::Up, EnvAction::Down, EnvAction::Left, EnvAction::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            EnvAction::Up => (0, -1),
            EnvAction::Down => (0, 1),
            EnvAction::Left => (-1, 0),
            EnvAction::Right => (1, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EnvAction::Up => "up",
            EnvAction::Down => "down",
            EnvAction::Left => "left",
            EnvAction::Right => "right",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

impl fmt::Display for EnvAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvMode {
    Static,
    Dynamic,
}

impl std::str::FromStr for EnvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(EnvMode::Static),
            "dynamic" => Ok(EnvMode::Dynamic),
            other => Err(Error::Config(format!("unknown env mode `{other}`"))),
        }
    }
}

impl fmt::Display for EnvMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvMode::Static => "static",
            EnvMode::Dynamic => "dynamic",
        })
    }
}

/// Which of the two dynamic obstacle layouts is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WallPhase {
    /// Vertical wall, active up to and including the switch episode.
    Pre,
    /// Horizontal wall, active after the switch episode.
    Post,
}

/// Obstacle cells of an n×n grid, stored as a dense occupancy mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Obstacles {
    size: usize,
    blocked: Vec<bool>,
}

impl Obstacles {
    pub fn empty(size: usize) -> Self {
        Self { size, blocked: vec![false; size * size] }
    }

    /// Builds a mask from cells; out-of-bounds cells are ignored.
    pub fn from_cells(size: usize, cells: impl IntoIterator<Item = GridPos>) -> Self {
        let mut obstacles = Self::empty(size);
        for cell in cells {
            obstacles.insert(cell);
        }
        obstacles
    }

    pub fn insert(&mut self, cell: GridPos) {
        if cell.in_bounds(self.size) {
            let idx = self.index(cell);
            self.blocked[idx] = true;
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, cell: GridPos) -> bool {
        cell.in_bounds(self.size) && self.blocked[self.index(cell)]
    }

    /// True when `cell` is on the grid and not an obstacle.
    pub fn is_free(&self, cell: GridPos) -> bool {
        cell.in_bounds(self.size) && !self.blocked[self.index(cell)]
    }

    pub fn len(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.blocked.iter().any(|b| *b)
    }

    /// Blocked cells in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = GridPos> + '_ {
        self.cells().filter(|c| self.contains(*c))
    }

    /// Free cells in row-major order.
    pub fn free_cells(&self) -> impl Iterator<Item = GridPos> + '_ {
        self.cells().filter(|c| !self.contains(*c))
    }

    fn cells(&self) -> impl Iterator<Item = GridPos> {
        let n = self.size as i32;
        (0..n).flat_map(move |y| (0..n).map(move |x| GridPos::new(x, y)))
    }

    fn index(&self, cell: GridPos) -> usize {
        cell.y as usize * self.size + cell.x as usize
    }
}

/// The dynamic-mode wall: a vertical wall in column ⌊n/2⌋ before the switch and a
/// horizontal wall in row ⌊n/2⌋ after it, each leaving the centre cell open.
pub fn wall_layout(n: usize, phase: WallPhase) -> Obstacles {
    let mid = (n / 2) as i32;
    let cells = (0..n as i32).filter(|&i| i != mid).map(|i| match phase {
        WallPhase::Pre => GridPos::new(mid, i),
        WallPhase::Post => GridPos::new(i, mid),
    });
    Obstacles::from_cells(n, cells)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridWorldConfig {
    pub size: usize,
    pub mode: EnvMode,
    /// Last episode (1-based) that uses the pre-switch layout.
    pub switch_episode: usize,
    pub max_steps: usize,
    pub seed: u64,
}

impl GridWorldConfig {
    pub fn new(size: usize, mode: EnvMode) -> Self {
        Self { size, mode, switch_episode: 50, max_steps: size * size, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 2 {
            return Err(Error::Config(format!("grid size must be at least 2, got {}", self.size)));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Start, goal and obstacles for one episode.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpisodeLayout {
    pub episode: usize,
    pub start: GridPos,
    pub goal: GridPos,
    pub obstacles: Obstacles,
    pub max_steps: usize,
}

impl EpisodeLayout {
    pub fn size(&self) -> usize {
        self.obstacles.size()
    }

    pub fn step(&self, state: GridPos, action: EnvAction, steps_taken: usize) -> StepOutcome {
        step(state, action, self.goal, &self.obstacles, steps_taken, self.max_steps)
    }

    /// Text rendering, one row per line: `#` obstacle, `S` start, `G` goal, `.` free.
    pub fn render(&self) -> String {
        let n = self.size() as i32;
        let mut out = String::with_capacity((n * (n + 1)) as usize);
        for y in 0..n {
            for x in 0..n {
                let cell = GridPos::new(x, y);
                out.push(if cell == self.start {
                    'S'
                } else if cell == self.goal {
                    'G'
                } else if self.obstacles.contains(cell) {
                    '#'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub next_state: GridPos,
    pub reward: u8,
    pub done: bool,
    pub truncated: bool,
}

/// Moves one cell in `action`'s direction. Moving off the grid or into an
/// obstacle leaves the agent where it is.
pub fn step(
    state: GridPos,
    action: EnvAction,
    goal: GridPos,
    obstacles: &Obstacles,
    steps_taken: usize,
    max_steps: usize,
) -> StepOutcome {
    let target = state.offset(action);
    let next_state = if obstacles.is_free(target) { target } else { state };
    let done = next_state == goal;
    StepOutcome {
        next_state,
        reward: u8::from(done),
        done,
        truncated: !done && steps_taken + 1 >= max_steps,
    }
}

#[derive(Clone, Debug)]
pub struct GridWorld {
    config: GridWorldConfig,
    pre: Obstacles,
    post: Obstacles,
}

impl GridWorld {
    pub fn new(config: GridWorldConfig) -> Result<Self> {
        config.validate()?;
        let (pre, post) = match config.mode {
            EnvMode::Static => (Obstacles::empty(config.size), Obstacles::empty(config.size)),
            EnvMode::Dynamic => {
                (wall_layout(config.size, WallPhase::Pre), wall_layout(config.size, WallPhase::Post))
            }
        };
        for obstacles in [&pre, &post] {
            if !has_reachable_pair(obstacles) {
                return Err(Error::Unreachable(
                    "no pair of distinct mutually reachable free cells".into(),
                ));
            }
        }
        Ok(Self { config, pre, post })
    }

    pub fn config(&self) -> &GridWorldConfig {
        &self.config
    }

    pub fn size(&self) -> usize {
        self.config.size
    }

    pub fn obstacles_for(&self, episode: usize) -> &Obstacles {
        if episode <= self.config.switch_episode {
            &self.pre
        } else {
            &self.post
        }
    }

    /// Lays out episode `episode` (1-based). Static worlds ignore `rng`.
    pub fn reset<R: Rng + ?Sized>(&self, episode: usize, rng: &mut R) -> Result<EpisodeLayout> {
        if episode == 0 {
            return Err(Error::Config("episodes are numbered from 1".into()));
        }
        let n = self.config.size as i32;
        let (start, goal, obstacles) = match self.config.mode {
            EnvMode::Static => {
                (GridPos::new(0, 0), GridPos::new(n - 1, n - 1), Obstacles::empty(self.config.size))
            }
            EnvMode::Dynamic => {
                let obstacles = self.obstacles_for(episode).clone();
                let free: Vec<GridPos> = obstacles.free_cells().collect();
                let (start, goal) = loop {
                    let start = *free.choose(rng).expect("validated non-empty");
                    let goal = *free.choose(rng).expect("validated non-empty");
                    if start != goal && oracle::bfs_min_steps(&obstacles, start, goal).is_some() {
                        break (start, goal);
                    }
                };
                (start, goal, obstacles)
            }
        };
        Ok(EpisodeLayout { episode, start, goal, obstacles, max_steps: self.config.max_steps })
    }
}

fn has_reachable_pair(obstacles: &Obstacles) -> bool {
    obstacles.free_cells().any(|cell| {
        EnvAction::ALL.iter().any(|a| obstacles.is_free(cell.offset(*a)))
    })
}
