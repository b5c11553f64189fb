//! Policy representations: tabular, ε-greedy over Q, softmax over a Fourier
//! basis, and α-mixtures of two policies.

use crate::error::{Error, Result};
use crate::fqi::QModel;
use crate::traj::State;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Above this many coupled basis terms the Fourier expansion falls back to
/// per-dimension (uncoupled) terms.
pub const MAX_COUPLED_TERMS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    /// One action distribution per discrete state. A single row applies to
    /// every state.
    Tabular { rows: Vec<Vec<f64>> },
    EpsilonGreedy { q: QFunction, epsilon: f64, n_actions: usize },
    SoftmaxLinear(SoftmaxLinear),
    Mixed { alpha: f64, base: Box<Policy>, inner: Box<Policy> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QFunction {
    /// `table[s][a]`, indexed by discrete state.
    Table(Vec<Vec<f64>>),
    Model(QModel),
}

impl QFunction {
    pub fn values(&self, state: &State) -> Result<Vec<f64>> {
        match self {
            QFunction::Table(table) => Ok(table_row(table, state)?.clone()),
            QFunction::Model(m) => Ok(m.predict_all(&state.features())),
        }
    }
}

fn table_row<'a, T>(rows: &'a [T], state: &State) -> Result<&'a T> {
    if rows.len() == 1 {
        return Ok(&rows[0]);
    }
    match state {
        State::Discrete(s) => rows
            .get(*s)
            .ok_or_else(|| Error::UnsupportedState(format!("state {s} beyond table of {} rows", rows.len()))),
        State::Features(_) => Err(Error::UnsupportedState("tabular policy needs a discrete state".into())),
    }
}

impl Policy {
    pub fn uniform(n_actions: usize) -> Self {
        Policy::Tabular { rows: vec![vec![1.0 / n_actions as f64; n_actions]] }
    }

    pub fn tabular(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::invalid("tabular policy needs at least one row and one action"));
        }
        let n = rows[0].len();
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(format!("row {s} has {} actions, expected {n}", row.len())));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::invalid(format!("row {s} has a negative or non-finite probability")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("row {s} sums to {total}")));
            }
        }
        Ok(Policy::Tabular { rows })
    }

    /// Deterministic tabular policy: `actions[s]` with probability one.
    pub fn deterministic(actions: &[usize], n_actions: usize) -> Self {
        let rows = actions
            .iter()
            .map(|&a| {
                let mut r = vec![0.0; n_actions];
                r[a] = 1.0;
                r
            })
            .collect();
        Policy::Tabular { rows }
    }

    pub fn epsilon_greedy(q: QFunction, epsilon: f64, n_actions: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")));
        }
        if n_actions == 0 {
            return Err(Error::invalid("no actions"));
        }
        Ok(Policy::EpsilonGreedy { q, epsilon, n_actions })
    }

    pub fn mixed(alpha: f64, base: Policy, inner: Policy) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        if base.n_actions() != inner.n_actions() {
            return Err(Error::invalid("mixed policy components disagree on the action count"));
        }
        Ok(Policy::Mixed { alpha, base: Box::new(base), inner: Box::new(inner) })
    }

    pub fn n_actions(&self) -> usize {
        match self {
            Policy::Tabular { rows } => rows.first().map_or(0, Vec::len),
            Policy::EpsilonGreedy { n_actions, .. } => *n_actions,
            Policy::SoftmaxLinear(s) => s.n_actions,
            Policy::Mixed { base, .. } => base.n_actions(),
        }
    }

    /// Full action distribution at `state`.
    pub fn action_probs(&self, state: &State) -> Result<Vec<f64>> {
        match self {
            Policy::Tabular { rows } => Ok(table_row(rows, state)?.clone()),
            Policy::EpsilonGreedy { q, epsilon, n_actions } => {
                let values = q.values(state)?;
                Ok(epsilon_greedy_probs(&values, *epsilon, *n_actions))
            }
            Policy::SoftmaxLinear(s) => Ok(s.probs(&state.features())),
            Policy::Mixed { alpha, base, inner } => {
                let b = base.action_probs(state)?;
                let i = inner.action_probs(state)?;
                Ok(b.iter().zip(&i).map(|(pb, pi)| alpha * pi + (1.0 - alpha) * pb).collect())
            }
        }
    }

    pub fn action_prob(&self, state: &State, action: usize) -> Result<f64> {
        let n = self.n_actions();
        if action >= n {
            return Err(Error::UnknownAction { action, n_actions: n });
        }
        Ok(self.action_probs(state)?[action])
    }

    /// Draws an action and returns it with its probability.
    pub fn sample<R: Rng + ?Sized>(&self, state: &State, rng: &mut R) -> Result<(usize, f64)> {
        let probs = self.action_probs(state)?;
        Ok(sample_index(&probs, rng))
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        last = a;
        acc += p;
        if u < acc {
            return (a, p);
        }
    }
    (last, probs[last])
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn epsilon_greedy_probs(values: &[f64], epsilon: f64, n_actions: usize) -> Vec<f64> {
    if n_actions == 1 {
        return vec![1.0];
    }
    let best = argmax(&values[..n_actions]);
    let other = epsilon / (n_actions - 1) as f64;
    let mut probs = vec![other; n_actions];
    probs[best] = 1.0 - epsilon;
    probs
}

/// Softmax over linear scores of Fourier features `cos(π c·x)`, with `x`
/// rescaled to `[0, 1]` by stored per-dimension bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxLinear {
    pub n_actions: usize,
    pub order: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Row-major `n_actions × n_basis`.
    pub weights: Vec<f64>,
}

impl SoftmaxLinear {
    pub fn zeros(n_actions: usize, order: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("feature bounds must be nonempty and of equal length"));
        }
        if n_actions == 0 {
            return Err(Error::invalid("no actions"));
        }
        let mut s = Self { n_actions, order, lower, upper, weights: Vec::new() };
        s.weights = vec![0.0; n_actions * s.n_basis()];
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    fn coupled(&self) -> bool {
        (self.order + 1).checked_pow(self.dim() as u32).is_some_and(|t| t <= MAX_COUPLED_TERMS)
    }

    pub fn n_basis(&self) -> usize {
        if self.coupled() {
            (self.order + 1).pow(self.dim() as u32)
        } else {
            1 + self.dim() * self.order
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_actions * self.n_basis()
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_params() {
            return Err(Error::invalid(format!("expected {} weights, got {}", self.n_params(), weights.len())));
        }
        Ok(Self { weights, ..self.clone() })
    }

    pub fn basis(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let scaled: Vec<f64> = (0..d)
            .map(|i| {
                let v = x.get(i).copied().unwrap_or(0.0);
                let span = self.upper[i] - self.lower[i];
                if span > 0.0 {
                    ((v - self.lower[i]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        if self.coupled() {
            let n = self.n_basis();
            let mut out = Vec::with_capacity(n);
            let mut c = vec![0usize; d];
            for _ in 0..n {
                let dot: f64 = c.iter().zip(&scaled).map(|(&ci, &xi)| ci as f64 * xi).sum();
                out.push((PI * dot).cos());
                for digit in c.iter_mut() {
                    *digit += 1;
                    if *digit <= self.order {
                        break;
                    }
                    *digit = 0;
                }
            }
            out
        } else {
            let mut out = vec![1.0];
            for &xi in &scaled {
                for k in 1..=self.order {
                    out.push((PI * k as f64 * xi).cos());
                }
            }
            out
        }
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        let phi = self.basis(x);
        let nb = phi.len();
        let scores: Vec<f64> = (0..self.n_actions)
            .map(|a| self.weights[a * nb..(a + 1) * nb].iter().zip(&phi).map(|(w, f)| w * f).sum())
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }
}
