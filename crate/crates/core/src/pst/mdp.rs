use super::tree::Pst;
use crate::error::{Error, Result};
use crate::policy::argmax;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Next-symbol distribution at a node when `action` is recommended to a user
/// with propensity to listen `theta`. The null action (`None`) leaves the
/// passive distribution untouched.
pub fn perturb_dynamics(passive: &[f64], action: Option<usize>, theta: f64) -> Vec<f64> {
    let Some(a) = action else {
        return passive.to_vec();
    };
    let pa = passive[a];
    let boosted = pa.powf(1.0 / theta);
    let rest: f64 = passive.iter().enumerate().filter(|&(s, _)| s != a).map(|(_, p)| p).sum();
    if rest == 0.0 {
        return passive.to_vec();
    }
    // `rest + pa` stands in for 1, grouped so that z is exactly 1 at theta = 1.
    let z = rest / (rest + (pa - boosted));
    passive.iter().enumerate().map(|(s, &p)| if s == a { boosted } else { p / z }).collect()
}

pub const LIPSCHITZ_CONSTANT: f64 = 2.0 / std::f64::consts::E;

/// Largest `‖P(·|X,a,θ) − P(·|X,a,θ′)‖₁ − (2/e)|θ − θ′|` over every node,
/// recommendation and supplied pair. Errors if any slack is positive beyond
/// rounding.
pub fn lipschitz_check(pst: &Pst, theta_pairs: &[(f64, f64)]) -> Result<f64> {
    if theta_pairs.is_empty() || theta_pairs.iter().any(|&(a, b)| !(a >= 1.0 && b >= 1.0 && a.is_finite() && b.is_finite())) {
        return Err(Error::invalid("need finite theta pairs, each at least 1"));
    }
    let mut thetas: Vec<f64> = theta_pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    thetas.sort_by(f64::total_cmp);
    thetas.dedup();
    let position = |t: f64| thetas.partition_point(|&u| u < t);
    let pairs: Vec<(usize, usize)> = theta_pairs.iter().map(|&(a, b)| (position(a), position(b))).collect();
    let worst = pst
        .nodes()
        .par_iter()
        .map(|node| {
            let mut worst = f64::NEG_INFINITY;
            for a in 0..pst.n_symbols() {
                let dists: Vec<Vec<f64>> = thetas.iter().map(|&t| perturb_dynamics(&node.dist, Some(a), t)).collect();
                for &(i, j) in &pairs {
                    let dist: f64 = dists[i].iter().zip(&dists[j]).map(|(x, y)| (x - y).abs()).sum();
                    worst = worst.max(dist - LIPSCHITZ_CONSTANT * (thetas[i] - thetas[j]).abs());
                }
            }
            worst
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    if worst > 1e-12 {
        return Err(Error::ViolationFound { slack: worst });
    }
    Ok(worst)
}

/// Finite discounted MDP with sparse transition rows.
pub trait Mdp: Sync {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn gamma(&self) -> f64;
    fn reward(&self, x: usize, a: usize) -> f64;
    /// `(x′, p)` pairs; a successor may repeat.
    fn transition_row(&self, x: usize, a: usize) -> Vec<(usize, f64)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    /// `transitions[x][a][x′]`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[x][a]`.
    pub rewards: Vec<Vec<f64>>,
    pub gamma: f64,
}

impl Mdp for FiniteMdp {
    fn n_states(&self) -> usize {
        self.rewards.len()
    }

    fn n_actions(&self) -> usize {
        self.rewards[0].len()
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn reward(&self, x: usize, a: usize) -> f64 {
        self.rewards[x][a]
    }

    fn transition_row(&self, x: usize, a: usize) -> Vec<(usize, f64)> {
        self.transitions[x][a].iter().copied().enumerate().filter(|&(_, p)| p > 0.0).collect()
    }
}

/// POI-style rewards: the desirability of the next symbol, less a cost for
/// every recommendation and a further cost when the recommended symbol is
/// already in the current suffix. Costs are fractions of the recommended
/// symbol's desirability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub desirability: Vec<f64>,
    pub recommend_cost: f64,
    pub seen_cost: f64,
}

impl RewardSpec {
    pub fn poi(desirability: Vec<f64>) -> Self {
        Self { desirability, recommend_cost: 0.2, seen_cost: 0.4 }
    }

    pub fn cost(&self, suffix: &[usize], a: usize) -> f64 {
        let w = self.desirability[a];
        let seen = if suffix.contains(&a) { self.seen_cost } else { 0.0 };
        (self.recommend_cost + seen) * w
    }
}

/// MDP over the nodes of a tree. Actions `0..|S|` recommend a symbol and
/// action `|S|` is the null action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PstMdp {
    pub theta: f64,
    pub gamma: f64,
    /// `next[x][s]`: node reached from `x` on symbol `s`.
    pub next: Vec<Vec<usize>>,
    /// Passive next-symbol distribution per node.
    pub passive: Vec<Vec<f64>>,
    /// Expected immediate reward `r(x, a)`.
    pub rewards: Vec<Vec<f64>>,
    /// Realized cost of each action per node.
    pub costs: Vec<Vec<f64>>,
    pub desirability: Vec<f64>,
}

impl PstMdp {
    pub fn n_symbols(&self) -> usize {
        self.desirability.len()
    }

    pub fn null_action(&self) -> usize {
        self.n_symbols()
    }

    fn as_option(&self, a: usize) -> Option<usize> {
        (a < self.n_symbols()).then_some(a)
    }

    pub fn symbol_probs(&self, x: usize, a: usize) -> Vec<f64> {
        perturb_dynamics(&self.passive[x], self.as_option(a), self.theta)
    }

    /// `p(x′ | x, a, θ)` summed over the symbols that lead to `x′`.
    pub fn transition_prob(&self, x: usize, a: usize, x_next: usize) -> f64 {
        self.symbol_probs(x, a).iter().zip(&self.next[x]).filter(|&(_, &n)| n == x_next).map(|(p, _)| p).sum()
    }
}

impl Mdp for PstMdp {
    fn n_states(&self) -> usize {
        self.next.len()
    }

    fn n_actions(&self) -> usize {
        self.n_symbols() + 1
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn reward(&self, x: usize, a: usize) -> f64 {
        self.rewards[x][a]
    }

    fn transition_row(&self, x: usize, a: usize) -> Vec<(usize, f64)> {
        self.next[x].iter().copied().zip(self.symbol_probs(x, a)).collect()
    }
}

pub fn build_mdp(pst: &Pst, theta: f64, reward: &RewardSpec, gamma: f64) -> Result<PstMdp> {
    if !(theta >= 1.0 && theta.is_finite()) {
        return Err(Error::invalid(format!("theta must be at least 1, got {theta}")));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let k = pst.n_symbols();
    if reward.desirability.len() != k {
        return Err(Error::invalid("one desirability per symbol is required"));
    }
    let n = pst.nodes().len();
    let next: Vec<Vec<usize>> = (0..n).map(|x| (0..k).map(|s| pst.next_node(x, s)).collect()).collect();
    let passive: Vec<Vec<f64>> = pst.nodes().iter().map(|node| node.dist.clone()).collect();
    let costs: Vec<Vec<f64>> = pst
        .nodes()
        .iter()
        .map(|node| (0..=k).map(|a| if a < k { reward.cost(&node.suffix, a) } else { 0.0 }).collect())
        .collect();
    let rewards = (0..n)
        .map(|x| {
            (0..=k)
                .map(|a| {
                    let p = perturb_dynamics(&passive[x], (a < k).then_some(a), theta);
                    p.iter().zip(&reward.desirability).map(|(p, w)| p * w).sum::<f64>() - costs[x][a]
                })
                .collect()
        })
        .collect();
    Ok(PstMdp { theta, gamma, next, passive, rewards, costs, desirability: reward.desirability.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub policy: Vec<usize>,
    pub values: Vec<f64>,
    pub iterations: usize,
}

pub fn q_value<M: Mdp + ?Sized>(mdp: &M, values: &[f64], x: usize, a: usize) -> f64 {
    mdp.reward(x, a) + mdp.gamma() * mdp.transition_row(x, a).iter().map(|&(y, p)| p * values[y]).sum::<f64>()
}

fn evaluate<M: Mdp + ?Sized>(mdp: &M, policy: &[usize]) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for x in 0..n {
        b[x] = mdp.reward(x, policy[x]);
        for (y, p) in mdp.transition_row(x, policy[x]) {
            a[(x, y)] -= mdp.gamma() * p;
        }
    }
    let v = a.lu().solve(&b).ok_or(Error::SingularEvaluation)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularEvaluation);
    }
    Ok(v.iter().copied().collect())
}

/// Exact evaluation by a linear solve, then greedy improvement, until no
/// state can strictly gain. Starts from action 0 everywhere; ties keep the
/// current action.
pub fn policy_iteration<M: Mdp + ?Sized>(mdp: &M) -> Result<Solution> {
    let n = mdp.n_states();
    let mut policy = vec![0; n];
    let mut iterations = 0;
    loop {
        let values = evaluate(mdp, &policy)?;
        iterations += 1;
        let improved: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|x| {
                let q: Vec<f64> = (0..mdp.n_actions()).map(|a| q_value(mdp, &values, x, a)).collect();
                let best = argmax(&q);
                let scale = 1.0 + q[policy[x]].abs();
                if q[best] > q[policy[x]] + 1e-12 * scale { best } else { policy[x] }
            })
            .collect();
        if improved == policy || iterations > 10_000 {
            return Ok(Solution { policy, values, iterations });
        }
        policy = improved;
    }
}

/// `max_x |max_a Q(x, a) − V(x)|`.
pub fn bellman_residual<M: Mdp + ?Sized>(mdp: &M, values: &[f64]) -> f64 {
    (0..mdp.n_states())
        .map(|x| {
            let best = (0..mdp.n_actions()).map(|a| q_value(mdp, values, x, a)).fold(f64::NEG_INFINITY, f64::max);
            (best - values[x]).abs()
        })
        .fold(0.0, f64::max)
}
