//! Ground truth: shortest obstacle-avoiding paths and the greedy axis-biased
//! moves used to label the prediction benchmark.

use std::collections::VecDeque;

use crate::gridworld::{EnvAction, GridPos, Obstacles};
use crate::prediction::BenchAction;

/// Which axis a greedy move closes first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AxisBias {
    XFirst,
    YFirst,
}

// Fixed expansion order; it affects which shortest path is found, never its length.
const BFS_ORDER: [EnvAction; 4] = [EnvAction::Up, EnvAction::Down, EnvAction::Left, EnvAction::Right];

/// Length of the shortest 4-connected path from `start` to `goal`, or `None`
/// if the goal cannot be reached. Both endpoints must be free cells.
pub fn bfs_min_steps(obstacles: &Obstacles, start: GridPos, goal: GridPos) -> Option<u32> {
    let n = obstacles.size();
    if !obstacles.is_free(start) || !obstacles.is_free(goal) {
        return None;
    }
    if start == goal {
        return Some(0);
    }
    let idx = |p: GridPos| p.y as usize * n + p.x as usize;
    let mut dist = vec![u32::MAX; n * n];
    let mut queue = VecDeque::new();
    dist[idx(start)] = 0;
    queue.push_back(start);
    while let Some(cell) = queue.pop_front() {
        let d = dist[idx(cell)];
        for action in BFS_ORDER {
            let next = cell.offset(action);
            if obstacles.is_free(next) && dist[idx(next)] == u32::MAX {
                if next == goal {
                    return Some(d + 1);
                }
                dist[idx(next)] = d + 1;
                queue.push_back(next);
            }
        }
    }
    None
}

/// The greedy move toward `goal`, closing the preferred axis first.
pub fn greedy_label(start: GridPos, goal: GridPos, bias: AxisBias) -> BenchAction {
    let horizontal = || {
        (start.x != goal.x).then_some(if goal.x > start.x { BenchAction::Right } else { BenchAction::Left })
    };
    let vertical = || {
        (start.y != goal.y).then_some(if goal.y > start.y { BenchAction::Down } else { BenchAction::Up })
    };
    let first = match bias {
        AxisBias::XFirst => horizontal().or_else(vertical),
        AxisBias::YFirst => vertical().or_else(horizontal),
    };
    first.unwrap_or(BenchAction::DontMove)
}

/// The cell reached by taking [`greedy_label`]'s move from `start`.
pub fn greedy_next_state(start: GridPos, goal: GridPos, bias: AxisBias) -> GridPos {
    greedy_label(start, goal, bias).apply(start)
}
