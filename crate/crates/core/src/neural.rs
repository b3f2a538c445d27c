//! A small multilayer perceptron with one or more softmax heads, trained with
//! categorical cross-entropy and Adam.
//!
//! Inputs are always a `(start, goal)` pair of grid cells, fed in as the four
//! raw integer coordinates. Hidden layers use ReLU. With one head the
//! network is a goal-conditioned policy; with two `n`-wide heads it predicts
//! the next cell's x and y coordinates.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gridworld::GridPos;

pub const INPUT_WIDTH: usize = 4;
pub const HIDDEN_WIDTH: usize = 128;
const LOG_FLOOR: f64 = 1e-12;

/// Classification target for one training example.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Index into a single action head.
    Action(usize),
    /// Column and row classes for a two-head next-cell predictor.
    NextState { x: usize, y: usize },
}

impl Target {
    fn class(self, head: usize) -> usize {
        match (self, head) {
            (Target::Action(a), 0) => a,
            (Target::NextState { x, .. }, 0) => x,
            (Target::NextState { y, .. }, 1) => y,
            _ => panic!("target {self:?} has no head {head}"),
        }
    }

    fn heads(self) -> usize {
        match self {
            Target::Action(_) => 1,
            Target::NextState { .. } => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrainingPair {
    pub start: GridPos,
    pub goal: GridPos,
    pub target: Target,
}

impl TrainingPair {
    pub fn action(start: GridPos, goal: GridPos, action: usize) -> Self {
        Self { start, goal, target: Target::Action(action) }
    }
}

/// A fully connected layer, `y = x · weights + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (1.0 / fan_in as f64).sqrt();
        Self {
            weights: Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound)),
            bias: Array1::from_shape_fn(fan_out, |_| rng.gen_range(-bound..bound)),
        }
    }

    fn zeros_like(other: &Dense) -> Self {
        Self { weights: Array2::zeros(other.weights.raw_dim()), bias: Array1::zeros(other.bias.raw_dim()) }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }

    fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Network parameters. Gradients and Adam moments reuse the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    grid_size: usize,
    hidden: Vec<Dense>,
    heads: Vec<Dense>,
}

struct Activations {
    /// Layer inputs: the encoded batch followed by each hidden output.
    inputs: Vec<Array2<f64>>,
    probs: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(grid_size: usize, hidden: &[usize], heads: &[usize], rng: &mut R) -> Self {
        assert!(grid_size >= 2, "grid size must be at least 2");
        assert!(!heads.is_empty(), "need at least one head");
        let mut fan_in = INPUT_WIDTH;
        let mut layers = Vec::with_capacity(hidden.len());
        for &width in hidden {
            layers.push(Dense::init(fan_in, width, rng));
            fan_in = width;
        }
        let heads = heads.iter().map(|&w| Dense::init(fan_in, w, rng)).collect();
        Self { grid_size, hidden: layers, heads }
    }

    /// Two 128-unit hidden layers and a single `actions`-way softmax head.
    pub fn policy<R: Rng + ?Sized>(grid_size: usize, actions: usize, rng: &mut R) -> Self {
        Self::new(grid_size, &[HIDDEN_WIDTH, HIDDEN_WIDTH], &[actions], rng)
    }

    /// Two 128-unit hidden layers and two `grid_size`-way heads (x, y).
    pub fn next_state_predictor<R: Rng + ?Sized>(grid_size: usize, rng: &mut R) -> Self {
        Self::new(grid_size, &[HIDDEN_WIDTH, HIDDEN_WIDTH], &[grid_size, grid_size], rng)
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn head_widths(&self) -> Vec<usize> {
        self.heads.iter().map(|h| h.bias.len()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(Dense::is_finite)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.hidden.iter().chain(self.heads.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.hidden.iter_mut().chain(self.heads.iter_mut())
    }

    fn zeros_like(&self) -> Self {
        Self {
            grid_size: self.grid_size,
            hidden: self.hidden.iter().map(Dense::zeros_like).collect(),
            heads: self.heads.iter().map(Dense::zeros_like).collect(),
        }
    }

    pub fn encode(&self, start: GridPos, goal: GridPos) -> [f64; INPUT_WIDTH] {
        [start.x, start.y, goal.x, goal.y].map(f64::from)
    }

    fn encode_batch(&self, batch: &[TrainingPair]) -> Array2<f64> {
        let mut x = Array2::zeros((batch.len(), INPUT_WIDTH));
        for (mut row, pair) in x.rows_mut().into_iter().zip(batch) {
            row.assign(&Array1::from(self.encode(pair.start, pair.goal).to_vec()));
        }
        x
    }

    fn activations(&self, x: Array2<f64>) -> Activations {
        let mut inputs = Vec::with_capacity(self.hidden.len() + 1);
        inputs.push(x);
        for layer in &self.hidden {
            let out = layer.forward(inputs.last().expect("non-empty")).mapv_into(|v| v.max(0.0));
            inputs.push(out);
        }
        let top = inputs.last().expect("non-empty");
        let probs = self.heads.iter().map(|h| softmax_rows(h.forward(top))).collect();
        Activations { inputs, probs }
    }

    /// Probability vector for each head.
    pub fn forward(&self, start: GridPos, goal: GridPos) -> Vec<Vec<f64>> {
        let x = Array2::from_shape_vec((1, INPUT_WIDTH), self.encode(start, goal).to_vec()).expect("shape");
        self.activations(x).probs.into_iter().map(|p| p.row(0).to_vec()).collect()
    }

    /// First-head probabilities; the policy's action distribution.
    pub fn action_probs(&self, start: GridPos, goal: GridPos) -> Vec<f64> {
        self.forward(start, goal).swap_remove(0)
    }

    /// Argmax class per head for every example in `batch`.
    pub fn predict(&self, batch: &[TrainingPair]) -> Vec<Vec<usize>> {
        let acts = self.activations(self.encode_batch(batch));
        (0..batch.len())
            .map(|i| acts.probs.iter().map(|p| argmax(p.row(i).iter().copied())).collect())
            .collect()
    }

    /// Fraction of correctly classified examples, averaged over heads.
    pub fn accuracy(&self, batch: &[TrainingPair]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let heads = self.heads.len();
        let correct: usize = self
            .predict(batch)
            .iter()
            .zip(batch)
            .map(|(pred, pair)| (0..heads).filter(|&h| pred[h] == pair.target.class(h)).count())
            .sum();
        correct as f64 / (batch.len() * heads) as f64
    }

    /// Mean over examples and heads of `-ln p(target)`.
    pub fn loss(&self, batch: &[TrainingPair]) -> f64 {
        assert!(!batch.is_empty(), "loss of an empty batch");
        let acts = self.activations(self.encode_batch(batch));
        cross_entropy(&acts.probs, batch)
    }

    /// Loss and its gradient with respect to every parameter.
    pub fn gradients(&self, batch: &[TrainingPair]) -> (f64, Mlp) {
        assert!(!batch.is_empty(), "gradient of an empty batch");
        for pair in batch {
            assert_eq!(pair.target.heads(), self.heads.len(), "target does not match head count");
        }
        let acts = self.activations(self.encode_batch(batch));
        let loss = cross_entropy(&acts.probs, batch);
        let mut grads = self.zeros_like();
        let scale = 1.0 / (batch.len() * self.heads.len()) as f64;
        let top = acts.inputs.last().expect("non-empty");

        let mut upstream: Array2<f64> = Array2::zeros(top.raw_dim());
        for (h, (head, probs)) in self.heads.iter().zip(&acts.probs).enumerate() {
            let mut delta = probs.clone();
            for (i, pair) in batch.iter().enumerate() {
                delta[[i, pair.target.class(h)]] -= 1.0;
            }
            delta *= scale;
            grads.heads[h].weights = top.t().dot(&delta);
            grads.heads[h].bias = delta.sum_axis(Axis(0));
            upstream += &delta.dot(&head.weights.t());
        }

        for l in (0..self.hidden.len()).rev() {
            let output = &acts.inputs[l + 1];
            let input = &acts.inputs[l];
            // ReLU derivative from the post-activation value.
            let delta = upstream * &output.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            grads.hidden[l].weights = input.t().dot(&delta);
            grads.hidden[l].bias = delta.sum_axis(Axis(0));
            upstream = delta.dot(&self.hidden[l].weights.t());
        }
        (loss, grads)
    }

    /// One Adam update on the whole batch. Returns the loss before the update.
    pub fn train_step(&mut self, adam: &mut Adam, batch: &[TrainingPair]) -> f64 {
        let (loss, grads) = self.gradients(batch);
        adam.apply(self, &grads);
        loss
    }

    /// Flat parameter vector in layer order (weights row-major, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied()).collect()
    }

    /// Inverse of [`Mlp::flatten`].
    pub fn set_flat(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.parameter_count(), "parameter count mismatch");
        let mut it = values.iter().copied();
        for layer in self.layers_mut() {
            layer.weights.iter_mut().chain(layer.bias.iter_mut()).for_each(|v| *v = it.next().expect("len"));
        }
    }

    /// Text checkpoint: a shape header followed by one line of values per layer.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let heads: Vec<String> = self.head_widths().iter().map(usize::to_string).collect();
        let hidden: Vec<String> = self.hidden.iter().map(|l| l.bias.len().to_string()).collect();
        writeln!(out, "mlp grid={} hidden={} heads={}", self.grid_size, hidden.join(","), heads.join(","))?;
        for layer in self.layers() {
            let values: Vec<String> =
                layer.weights.iter().chain(layer.bias.iter()).map(|v| format!("{v:e}")).collect();
            writeln!(out, "{}", values.join(" "))?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(Error::Parse { line: 1, message: "empty checkpoint".into() })??;
        let bad = |line: usize, message: &str| Error::Parse { line, message: message.into() };
        let mut grid = None;
        let mut hidden = Vec::new();
        let mut heads = Vec::new();
        let mut fields = header.split_whitespace();
        if fields.next() != Some("mlp") {
            return Err(bad(1, "missing `mlp` header"));
        }
        let list = |v: &str| -> Result<Vec<usize>> {
            v.split(',').filter(|s| !s.is_empty()).map(|s| s.parse().map_err(|_| bad(1, "bad width"))).collect()
        };
        for field in fields {
            match field.split_once('=') {
                Some(("grid", v)) => grid = Some(v.parse::<usize>().map_err(|_| bad(1, "bad grid"))?),
                Some(("hidden", v)) => hidden = list(v)?,
                Some(("heads", v)) => heads = list(v)?,
                _ => return Err(bad(1, "unknown header field")),
            }
        }
        let grid = grid.ok_or_else(|| bad(1, "missing grid"))?;
        if grid < 2 || heads.is_empty() {
            return Err(bad(1, "invalid shape"));
        }
        let mut net = Mlp::new(grid, &hidden, &heads, &mut rand::rngs::mock::StepRng::new(0, 0));
        for (i, layer) in net.layers_mut().enumerate() {
            let line = lines.next().ok_or_else(|| bad(i + 2, "missing layer"))??;
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| bad(i + 2, "bad value")))
                .collect::<Result<_>>()?;
            if values.len() != layer.weights.len() + layer.bias.len() {
                return Err(bad(i + 2, "wrong value count"));
            }
            let mut it = values.into_iter();
            layer.weights.iter_mut().chain(layer.bias.iter_mut()).for_each(|v| *v = it.next().expect("len"));
        }
        Ok(net)
    }
}

/// Adam optimiser state for one [`Mlp`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    first: Mlp,
    second: Mlp,
}

impl Adam {
    pub fn new(params: &Mlp, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: params.zeros_like(),
            second: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn apply(&mut self, params: &mut Mlp, grads: &Mlp) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let bias1 = 1.0 - b1.powi(self.step);
        let bias2 = 1.0 - b2.powi(self.step);
        for (((p, g), m), v) in params
            .layers_mut()
            .zip(grads.layers())
            .zip(self.first.layers_mut())
            .zip(self.second.layers_mut())
        {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + eps);
            };
            ndarray::Zip::from(&mut p.weights).and(&g.weights).and(&mut m.weights).and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut p.bias).and(&g.bias).and(&mut m.bias).and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    logits
}

fn cross_entropy(probs: &[Array2<f64>], batch: &[TrainingPair]) -> f64 {
    let total: f64 = probs
        .iter()
        .enumerate()
        .map(|(h, p)| {
            batch
                .iter()
                .enumerate()
                .map(|(i, pair)| -p[[i, pair.target.class(h)]].max(LOG_FLOOR).ln())
                .sum::<f64>()
        })
        .sum();
    total / (batch.len() * probs.len()) as f64
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
