//! Safe batch policy improvement and the incremental Daedalus loop.

mod daedalus;
mod search;

pub use daedalus::{daedalus, DaedalusConfig, DaedalusLog, DaedalusRecord, DaedalusVariant};
pub use search::{maximize, EsConfig, SearchOutcome};

use crate::error::{Error, Result};
use crate::hcope::{bound, BoundConfig, BoundMethod, BoundResult, ClipThreshold};
use crate::numeric::derive_seed;
use crate::ope::{estimates, wis_from, Estimator};
use crate::policy::{Policy, SoftmaxLinear};
use crate::traj::{Dataset, DiscountSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cell::Cell;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub rho_minus: f64,
    pub delta: f64,
    pub method: BoundMethod,
    /// Per-trajectory estimator feeding the bound.
    pub estimator: Estimator,
    pub discount: DiscountSpec,
    pub bootstrap_b: usize,
    pub seed: u64,
}

impl SafetySpec {
    pub fn new(rho_minus: f64, delta: f64, method: BoundMethod) -> Result<Self> {
        if !(delta > 0.0 && delta <= 0.5) {
            return Err(Error::InvalidDelta(delta));
        }
        Ok(Self {
            rho_minus,
            delta,
            method,
            estimator: Estimator::Is,
            discount: DiscountSpec::undiscounted(),
            bootstrap_b: crate::hcope::DEFAULT_BOOTSTRAP,
            seed: 0,
        })
    }

    fn bound_config(&self) -> BoundConfig {
        BoundConfig {
            method: self.method,
            delta: self.delta,
            bootstrap_b: self.bootstrap_b,
            seed: self.seed,
            clip: ClipThreshold::HeldOutQuantile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateVariant {
    None,
    KFold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub variant: CandidateVariant,
    pub alpha_grid: Vec<f64>,
    pub max_folds: usize,
    pub es: EsConfig,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            variant: CandidateVariant::KFold,
            alpha_grid: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            max_folds: 20,
            es: EsConfig::default(),
        }
    }
}

/// Candidate policies: the softmax template, optionally blended with the
/// initial policy `π0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpace {
    pub initial: Policy,
    pub template: SoftmaxLinear,
}

impl PolicySpace {
    pub fn new(initial: Policy, template: SoftmaxLinear) -> Result<Self> {
        if initial.n_actions() != template.n_actions {
            return Err(Error::invalid("initial policy and template disagree on the action count"));
        }
        Ok(Self { initial, template })
    }

    pub fn n_params(&self) -> usize {
        self.template.n_params()
    }

    pub fn softmax(&self, params: &[f64]) -> Policy {
        Policy::SoftmaxLinear(self.template.with_weights(params.to_vec()).expect("parameter length matches template"))
    }

    /// `μ_{α,π0,π}`; `α = 0` yields `π0` itself.
    pub fn mixed(&self, alpha: f64, params: &[f64]) -> Result<Policy> {
        if alpha == 0.0 {
            return Ok(self.initial.clone());
        }
        Policy::mixed(alpha, self.initial.clone(), self.softmax(params))
    }
}

/// `f†`: the WIS estimate if the predicted bound clears `ρ−`, else the bound.
pub fn objective_f(pi: &Policy, data: &Dataset, spec: &SafetySpec, m: usize) -> Result<f64> {
    let est = estimates(data, pi, Estimator::Is, spec.discount)?;
    let xs: Vec<f64> = match spec.estimator {
        Estimator::Is => est.iter().map(|e| e.value).collect(),
        other => crate::ope::per_trajectory_values(data, pi, other, spec.discount)?,
    };
    let predicted = bound(&xs, &spec.bound_config(), Some(m))?.lower_bound;
    if predicted >= spec.rho_minus {
        Ok(wis_from(&est).unwrap_or(f64::NEG_INFINITY))
    } else {
        Ok(predicted)
    }
}

fn score(pi: &Policy, data: &Dataset, spec: &SafetySpec, m: usize) -> f64 {
    objective_f(pi, data, spec, m).unwrap_or(f64::NEG_INFINITY)
}

fn optimize_mixed(
    alpha: f64,
    data: &Dataset,
    spec: &SafetySpec,
    space: &PolicySpace,
    m: usize,
    es: &EsConfig,
    seed: u64,
) -> Result<Policy> {
    if alpha == 0.0 {
        return Ok(space.initial.clone());
    }
    let x0 = vec![0.0; space.n_params()];
    let out = maximize(
        |x| match space.mixed(alpha, x) {
            Ok(p) => score(&p, data, spec, m),
            Err(_) => f64::NEG_INFINITY,
        },
        &x0,
        es,
        seed,
    );
    space.mixed(alpha, &out.best)
}

/// Unregularized search: `argmax_π f†(π, D, δ, ρ−, m)` over the softmax space.
pub fn get_candidate_none(train: &Dataset, spec: &SafetySpec, space: &PolicySpace, m: usize, cfg: &SearchConfig) -> Result<Policy> {
    train.require_nonempty()?;
    optimize_mixed(1.0, train, spec, space, m, &cfg.es, derive_seed(spec.seed, &[1]))
}

pub fn fold_count(n: usize, max_folds: usize) -> usize {
    max_folds.min(n / 2)
}

/// Mean held-out `f†` of mixed policies optimized on the other folds.
pub fn cross_validate(
    alpha: f64,
    data: &Dataset,
    spec: &SafetySpec,
    space: &PolicySpace,
    m: usize,
    cfg: &SearchConfig,
) -> Result<f64> {
    let n = data.n();
    let k = fold_count(n, cfg.max_folds);
    if k < 2 {
        return Err(Error::TooFewSamples { needed: 4, got: n });
    }
    let bounds: Vec<usize> = (0..=k).map(|i| i * n / k).collect();
    let alpha_key = alpha.to_bits();
    let scores: Result<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let held = data.slice(bounds[i], bounds[i + 1]);
            let mut rest = data.slice(0, bounds[i]);
            rest.extend(data.slice(bounds[i + 1], n));
            let seed = derive_seed(spec.seed, &[2, alpha_key, i as u64]);
            let pi = optimize_mixed(alpha, &rest, spec, space, m, &cfg.es, seed)?;
            Ok(score(&pi, &held, spec, m))
        })
        .collect();
    let scores = scores?;
    Ok(scores.iter().sum::<f64>() / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldChoice {
    pub alpha: f64,
    pub cv_scores: Vec<f64>,
}

/// Picks `α*` by cross-validation over the grid (ties to the earlier entry),
/// then re-optimizes on all of `train`.
pub fn get_candidate_kfold(
    train: &Dataset,
    spec: &SafetySpec,
    space: &PolicySpace,
    m: usize,
    cfg: &SearchConfig,
) -> Result<(Policy, KFoldChoice)> {
    if cfg.alpha_grid.is_empty() || cfg.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::invalid("alpha grid must be nonempty and inside [0, 1]"));
    }
    let cv_scores: Vec<f64> = if cfg.alpha_grid.len() == 1 {
        vec![f64::NAN]
    } else {
        cfg.alpha_grid
            .iter()
            .map(|&a| cross_validate(a, train, spec, space, m, cfg))
            .collect::<Result<_>>()?
    };
    let mut best = 0;
    for i in 1..cv_scores.len() {
        if cv_scores[i] > cv_scores[best] {
            best = i;
        }
    }
    let alpha = cfg.alpha_grid[best];
    let pi = optimize_mixed(alpha, train, spec, space, m, &cfg.es, derive_seed(spec.seed, &[3]))?;
    Ok((pi, KFoldChoice { alpha, cv_scores }))
}

/// The held-out partition. Every bound computed on it is counted.
pub struct TestPartition<'a> {
    data: &'a Dataset,
    evaluations: Cell<usize>,
}

impl<'a> TestPartition<'a> {
    pub fn new(data: &'a Dataset) -> Self {
        Self { data, evaluations: Cell::new(0) }
    }

    pub fn size(&self) -> usize {
        self.data.n()
    }

    pub fn bound(&self, pi: &Policy, spec: &SafetySpec) -> Result<BoundResult> {
        self.evaluations.set(self.evaluations.get() + 1);
        let xs = crate::ope::per_trajectory_values(self.data, pi, spec.estimator, spec.discount)?;
        bound(&xs, &spec.bound_config(), None)
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Improvement {
    Safe { policy: Policy },
    NoSolutionFound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub result: Improvement,
    pub candidate: Policy,
    pub test_bound: BoundResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kfold: Option<KFoldChoice>,
    pub test_bound_evaluations: usize,
}

/// Searches `train` for one candidate and runs a single safety test on `test`.
pub fn policy_improvement(
    train: &Dataset,
    test: &Dataset,
    spec: &SafetySpec,
    space: &PolicySpace,
    cfg: &SearchConfig,
) -> Result<ImprovementReport> {
    train.require_nonempty()?;
    test.require_nonempty()?;
    let partition = TestPartition::new(test);
    let m = partition.size();
    let (candidate, kfold) = match cfg.variant {
        CandidateVariant::None => (get_candidate_none(train, spec, space, m, cfg)?, None),
        CandidateVariant::KFold => {
            let (p, choice) = get_candidate_kfold(train, spec, space, m, cfg)?;
            (p, Some(choice))
        }
    };
    let test_bound = partition.bound(&candidate, spec)?;
    let result = if test_bound.lower_bound >= spec.rho_minus {
        Improvement::Safe { policy: candidate.clone() }
    } else {
        Improvement::NoSolutionFound
    };
    Ok(ImprovementReport { result, candidate, test_bound, kfold, test_bound_evaluations: partition.evaluations() })
}
