use std::collections::{HashMap, VecDeque};

use fastslow::agent::{Agent, FastSlowAgent, FastSlowConfig};
use fastslow::harness::{self, AgentKind, ExperimentConfig};
use fastslow::memory::MemoryBank;
use fastslow::{EnvMode, GridPos, GridWorld, GridWorldConfig};

const MOVES: [(i32, i32); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// Largest number of steps a fresh agent can need on an empty 2x2 grid from
/// (0,0) to (1,1), over every action the count-penalised argmax can pick for
/// some probability vector. An action with count c beats one with count c'
/// only if sqrt(c) - sqrt(c') < 1, since probabilities differ by less than 1.
fn worst_case_2x2() -> u32 {
    fn cell(x: i32, y: i32) -> usize {
        (y * 2 + x) as usize
    }
    fn go(x: i32, y: i32, counts: [[u32; 4]; 4], memo: &mut HashMap<(i32, i32, [[u32; 4]; 4]), u32>) -> u32 {
        if let Some(&v) = memo.get(&(x, y, counts)) {
            return v;
        }
        let here = counts[cell(x, y)];
        let mut worst = 0;
        for a in 0..4 {
            let feasible = (0..4).all(|b| b == a || (here[a] as f64).sqrt() - (here[b] as f64).sqrt() < 1.0);
            if !feasible {
                continue;
            }
            let (nx, ny) = (x + MOVES[a].0, y + MOVES[a].1);
            let (nx, ny) = if (0..2).contains(&nx) && (0..2).contains(&ny) { (nx, ny) } else { (x, y) };
            let steps = if (nx, ny) == (1, 1) {
                1
            } else {
                let mut next = counts;
                next[cell(x, y)][a] += 1;
                1 + go(nx, ny, next, memo)
            };
            worst = worst.max(steps);
        }
        memo.insert((x, y, counts), worst);
        worst
    }
    go(0, 0, [[0; 4]; 4], &mut HashMap::new())
}

#[test]
fn two_by_two_is_solved_within_the_enumerated_bound() {
    let bound = worst_case_2x2();
    // Up and Left bump, Right reaches (1,0), Up bumps again: four steps
    // without reaching the goal are possible.
    assert!(bound > 4, "bound {bound}");
    for agent in ["fastslow", "nofast", "noslow", "neither"] {
        for seed in 0..40 {
            let cfg = ExperimentConfig {
                env: EnvMode::Static,
                size: 2,
                episodes: 1,
                max_steps: Some(1000),
                agent: agent.parse::<AgentKind>().unwrap(),
                seeds: 1,
                seed_base: seed,
                ..ExperimentConfig::default()
            };
            let r = harness::run_experiment(&cfg).unwrap().runs[0].results[0];
            assert!(r.solved && r.steps as u32 <= bound, "{agent} seed {seed}: {} steps, bound {bound}", r.steps);
        }
    }
}

/// Shortest path through the bank's stored transitions.
fn bank_distance(bank: &MemoryBank, start: GridPos, goal: GridPos) -> Option<usize> {
    let mut dist = HashMap::from([(start, 0usize)]);
    let mut queue = VecDeque::from([start]);
    while let Some(s) = queue.pop_front() {
        if s == goal {
            return Some(dist[&s]);
        }
        for (_, next) in bank.lookup(s) {
            if !dist.contains_key(&next) {
                dist.insert(next, dist[&s] + 1);
                queue.push_back(next);
            }
        }
    }
    None
}

#[test]
fn solved_static_episodes_repeat_the_bank_shortest_path() {
    for (n, branches) in [(3usize, 2000usize), (4, 5000)] {
        for seed in 0..4 {
            let config = GridWorldConfig { max_steps: 60, ..GridWorldConfig::new(n, EnvMode::Static) };
            let world = GridWorld::new(config).unwrap();
            let depth = n * n;
            let cfg = FastSlowConfig { branches, depth, seed, ..FastSlowConfig::default() };
            let mut agent = FastSlowAgent::new(n, cfg).unwrap();
            let mut rng = fastslow::seed::rng_for(&[seed]);
            let mut solved_once = false;
            for episode in 1..=12 {
                let layout = world.reset(episode, &mut rng).unwrap();
                let expected = bank_distance(agent.overall_memory(), layout.start, layout.goal);
                let result = agent.run_episode(&layout);
                if solved_once {
                    let expected = expected.expect("a solved static episode leaves a path in the bank");
                    assert!(expected <= depth);
                    assert!(result.solved);
                    assert_eq!(result.steps, expected, "n={n} seed={seed} episode={episode}");
                }
                solved_once |= result.solved;
            }
            assert!(solved_once);
        }
    }
}

#[test]
fn dynamic_layouts_respect_the_wall_switch() {
    let world = GridWorld::new(GridWorldConfig::new(10, EnvMode::Dynamic)).unwrap();
    let mut rng = fastslow::seed::rng_for(&[7]);
    for episode in [1, 50, 51, 100] {
        let layout = world.reset(episode, &mut rng).unwrap();
        let rendered = layout.render();
        let rows: Vec<&str> = rendered.lines().collect();
        assert_eq!(rows.len(), 10);
        let walls: Vec<(usize, usize)> = rows
            .iter()
            .enumerate()
            .flat_map(|(y, row)| row.chars().enumerate().filter(|(_, c)| *c == '#').map(move |(x, _)| (x, y)))
            .collect();
        assert_eq!(walls.len(), 9);
        if episode <= 50 {
            assert!(walls.iter().all(|&(x, y)| x == 5 && y != 5), "{rendered}");
        } else {
            assert!(walls.iter().all(|&(x, y)| y == 5 && x != 5), "{rendered}");
        }
    }
}
