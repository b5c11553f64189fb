//! Greedy (immediate reward) and fitted-Q LTV training with validation
//! bound tracking.

mod regressor;
mod select;

pub use regressor::{QRegressor, Regressor, RegressorKind, TabularMean, TreeEnsemble};
pub use select::{information_gain, information_gain_select, FeatureSelection};

use crate::error::{Error, Result};
use crate::hcope::{bound_policy, BoundConfig, BoundResult};
use crate::numeric::derive_seed;
use crate::ope::Estimator;
use crate::policy::{Policy, QFunction};
use crate::traj::{Dataset, DiscountSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One regressor per action over a shared feature mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QModel {
    pub n_actions: usize,
    pub mask: Vec<usize>,
    pub regressors: Vec<ActionRegressor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionRegressor {
    Fitted(QRegressor),
    /// The action never appeared in training data.
    Constant(f64),
}

impl QModel {
    pub fn predict_all(&self, x: &[f64]) -> Vec<f64> {
        let projected: Vec<f64> = self.mask.iter().map(|&j| x.get(j).copied().unwrap_or(0.0)).collect();
        self.regressors
            .iter()
            .map(|r| match r {
                ActionRegressor::Fitted(m) => m.predict(&projected),
                ActionRegressor::Constant(v) => *v,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqiConfig {
    pub n_actions: usize,
    pub epsilon: f64,
    pub discount: DiscountSpec,
    pub iterations: usize,
    pub keep_fraction: f64,
    pub regressor: RegressorKind,
    pub bound: BoundConfig,
    pub seed: u64,
}

impl FqiConfig {
    pub fn new(n_actions: usize, bound: BoundConfig) -> Self {
        Self {
            n_actions,
            epsilon: 0.1,
            discount: DiscountSpec::new(0.9).expect("valid discount"),
            iterations: 20,
            keep_fraction: 0.2,
            regressor: RegressorKind::default(),
            bound,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyModel {
    pub policy: Policy,
    pub q: QModel,
    pub selection: FeatureSelection,
    /// Actions with no training data; their values are fixed at zero.
    pub missing_actions: Vec<usize>,
}

struct Flat {
    x: Vec<Vec<f64>>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    /// Index of the successor step in the flat arrays, if any.
    next: Vec<Option<usize>>,
}

fn flatten(data: &Dataset, n_actions: usize) -> Result<Flat> {
    data.require_nonempty()?;
    let mut f = Flat { x: Vec::new(), actions: Vec::new(), rewards: Vec::new(), next: Vec::new() };
    for traj in data.trajectories() {
        let len = traj.len();
        for (t, step) in traj.steps().iter().enumerate() {
            if step.action >= n_actions {
                return Err(Error::UnknownAction { action: step.action, n_actions });
            }
            let i = f.x.len();
            f.x.push(step.state.features().into_owned());
            f.actions.push(step.action);
            f.rewards.push(step.reward);
            f.next.push((t + 1 < len).then_some(i + 1));
        }
    }
    Ok(f)
}

fn fit_q(flat: &Flat, labels: &[f64], cfg: &FqiConfig) -> (QModel, FeatureSelection, Vec<usize>) {
    let selection = information_gain_select(&flat.x, labels, cfg.keep_fraction);
    let mask = selection.mask.clone();
    let fits: Vec<(ActionRegressor, bool)> = (0..cfg.n_actions)
        .into_par_iter()
        .map(|a| {
            let rows: Vec<usize> = (0..flat.x.len()).filter(|&i| flat.actions[i] == a).collect();
            if rows.is_empty() {
                return (ActionRegressor::Constant(0.0), true);
            }
            let x: Vec<Vec<f64>> = rows.iter().map(|&i| mask.iter().map(|&j| flat.x[i][j]).collect()).collect();
            let y: Vec<f64> = rows.iter().map(|&i| labels[i]).collect();
            (ActionRegressor::Fitted(cfg.regressor.fit(&x, &y, derive_seed(cfg.seed, &[a as u64]))), false)
        })
        .collect();
    let missing = fits.iter().enumerate().filter(|(_, f)| f.1).map(|(a, _)| a).collect();
    let q = QModel { n_actions: cfg.n_actions, mask, regressors: fits.into_iter().map(|f| f.0).collect() };
    (q, selection, missing)
}

fn wrap(q: QModel, cfg: &FqiConfig) -> Result<Policy> {
    Policy::epsilon_greedy(QFunction::Model(q), cfg.epsilon, cfg.n_actions)
}

/// Fits per-action immediate-reward regressors and wraps them ε-greedily.
pub fn greedy_train(train: &Dataset, cfg: &FqiConfig) -> Result<GreedyModel> {
    let flat = flatten(train, cfg.n_actions)?;
    let (q, selection, missing_actions) = fit_q(&flat, &flat.rewards, cfg);
    Ok(GreedyModel { policy: wrap(q.clone(), cfg)?, q, selection, missing_actions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub val_bound: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqiResult {
    pub policy: Policy,
    pub best_iteration: usize,
    pub val_bound: BoundResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_bound: Option<BoundResult>,
    pub trace: Vec<IterationRecord>,
    pub missing_actions: Vec<usize>,
}

/// Fitted Q iteration from the greedy model, keeping the iterate with the
/// highest per-step-IS lower bound on `val`; the earliest wins ties.
pub fn fqi_train(train: &Dataset, val: &Dataset, test: Option<&Dataset>, cfg: &FqiConfig) -> Result<FqiResult> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("FQI needs at least one iteration"));
    }
    let flat = flatten(train, cfg.n_actions)?;
    let gamma = cfg.discount.gamma();
    let (mut q, _, mut missing) = fit_q(&flat, &flat.rewards, cfg);
    let mut best: Option<(Policy, BoundResult, usize)> = None;
    let mut trace = Vec::with_capacity(cfg.iterations);
    for it in 1..=cfg.iterations {
        let labels: Vec<f64> = (0..flat.x.len())
            .into_par_iter()
            .map(|i| match flat.next[i] {
                Some(j) if gamma > 0.0 => {
                    let next = q.predict_all(&flat.x[j]);
                    flat.rewards[i] + gamma * next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                }
                _ => flat.rewards[i],
            })
            .collect();
        let (next_q, _, next_missing) = fit_q(&flat, &labels, cfg);
        q = next_q;
        missing = next_missing;
        let policy = wrap(q.clone(), cfg)?;
        let b = bound_policy(val, &policy, Estimator::Psis, cfg.discount, &cfg.bound, None)?;
        let improved = best.as_ref().is_none_or(|(_, prev, _)| b.lower_bound > prev.lower_bound);
        trace.push(IterationRecord { iteration: it, val_bound: b.lower_bound, improved });
        if improved {
            best = Some((policy, b, it));
        }
    }
    let (policy, val_bound, best_iteration) = best.expect("at least one iteration ran");
    let test_bound = match test {
        Some(t) => Some(bound_policy(t, &policy, Estimator::Psis, cfg.discount, &cfg.bound, None)?),
        None => None,
    };
    Ok(FqiResult { policy, best_iteration, val_bound, test_bound, trace, missing_actions: missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcope::BoundMethod;
    use crate::traj::{State, Step, Trajectory};

    fn bandit(n: usize) -> Dataset {
        Dataset::new(
            (0..n)
                .map(|i| {
                    let a = i % 3;
                    let r = if a == 1 { 1.0 } else { 0.0 };
                    let s = Step { state: State::Features(vec![(i % 5) as f64]), action: a, reward: r, behavior_prob: 1.0 / 3.0 };
                    Trajectory::new(format!("u{i}"), vec![s]).unwrap()
                })
                .collect(),
        )
    }

    fn cfg() -> FqiConfig {
        let mut c = FqiConfig::new(3, BoundConfig::new(BoundMethod::Tt, 0.05));
        c.keep_fraction = 1.0;
        c
    }

    #[test]
    fn greedy_prefers_rewarding_action() {
        let m = greedy_train(&bandit(90), &cfg()).unwrap();
        assert!(m.missing_actions.is_empty());
        let p = m.policy.action_probs(&State::Features(vec![2.0])).unwrap();
        assert!((p[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn missing_action_is_flagged() {
        let mut c = cfg();
        c.n_actions = 4;
        let m = greedy_train(&bandit(30), &c).unwrap();
        assert_eq!(m.missing_actions, vec![3]);
    }

    #[test]
    fn one_undiscounted_iteration_matches_greedy() {
        let mut c = cfg();
        c.discount = DiscountSpec::new(0.0).unwrap();
        c.iterations = 1;
        let data = bandit(60);
        let g = greedy_train(&data, &c).unwrap();
        let f = fqi_train(&data, &data, None, &c).unwrap();
        assert_eq!(f.policy, g.policy);
    }
}
