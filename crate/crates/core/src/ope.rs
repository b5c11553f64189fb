//! Importance-sampling estimators of a policy's value from logged trajectories.

use crate::error::{Error, Result};
use crate::numeric::{mean, pairwise_sum};
use crate::policy::Policy;
use crate::traj::{Dataset, DiscountSpec, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsEstimate {
    pub value: f64,
    /// Full-trajectory importance weight.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Is,
    #[serde(alias = "per_step_is")]
    Psis,
    Wis,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "is" => Ok(Estimator::Is),
            "psis" | "per_step_is" => Ok(Estimator::Psis),
            "wis" => Ok(Estimator::Wis),
            other => Err(Error::invalid(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Running log importance ratio after each step; `-inf` once the evaluation
/// policy gives a logged action zero probability.
fn cumulative_log_ratios(traj: &Trajectory, pi_e: &Policy) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(traj.len());
    for step in traj.steps() {
        let p = pi_e.action_prob(&step.state, step.action)?;
        if p == 0.0 || acc == f64::NEG_INFINITY {
            acc = f64::NEG_INFINITY;
        } else if p != step.behavior_prob {
            acc += p.ln() - step.behavior_prob.ln();
        }
        out.push(acc);
    }
    Ok(out)
}

/// Ordinary importance sampling: discounted return times the full weight.
pub fn is_estimate(traj: &Trajectory, pi_e: &Policy, disc: DiscountSpec) -> Result<IsEstimate> {
    let logs = cumulative_log_ratios(traj, pi_e)?;
    let weight = logs.last().map_or(1.0, |l| l.exp());
    let ret = crate::traj::discounted_return(traj, disc);
    Ok(IsEstimate { value: if weight == 0.0 { 0.0 } else { ret * weight }, weight })
}

/// Per-step importance sampling: each reward carries the weight of its prefix.
pub fn per_step_is(traj: &Trajectory, pi_e: &Policy, disc: DiscountSpec) -> Result<IsEstimate> {
    let logs = cumulative_log_ratios(traj, pi_e)?;
    let mut scale = 1.0;
    let mut value = 0.0;
    for (step, l) in traj.steps().iter().zip(&logs) {
        if step.reward != 0.0 && *l != f64::NEG_INFINITY {
            value += scale * step.reward * l.exp();
        }
        scale *= disc.gamma();
    }
    Ok(IsEstimate { value, weight: logs.last().map_or(1.0, |l| l.exp()) })
}

pub fn estimates(data: &Dataset, pi_e: &Policy, estimator: Estimator, disc: DiscountSpec) -> Result<Vec<IsEstimate>> {
    data.require_nonempty()?;
    data.trajectories()
        .par_iter()
        .map(|t| match estimator {
            Estimator::Psis => per_step_is(t, pi_e, disc),
            Estimator::Is | Estimator::Wis => is_estimate(t, pi_e, disc),
        })
        .collect()
}

/// Weighted importance sampling `Σ ρ̂_i / Σ ŵ_i`.
pub fn wis_estimate(data: &Dataset, pi_e: &Policy, disc: DiscountSpec) -> Result<f64> {
    let est = estimates(data, pi_e, Estimator::Is, disc)?;
    wis_from(&est)
}

pub fn wis_from(est: &[IsEstimate]) -> Result<f64> {
    let values: Vec<f64> = est.iter().map(|e| e.value).collect();
    let weights: Vec<f64> = est.iter().map(|e| e.weight).collect();
    let denom = pairwise_sum(&weights);
    if denom <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(pairwise_sum(&values) / denom)
}

/// Per-trajectory samples whose mean is the estimator's value. For WIS each
/// sample is `ρ̂_i / mean(ŵ)`, so the mean reproduces the weighted estimate.
pub fn per_trajectory_values(
    data: &Dataset,
    pi_e: &Policy,
    estimator: Estimator,
    disc: DiscountSpec,
) -> Result<Vec<f64>> {
    let est = estimates(data, pi_e, estimator, disc)?;
    match estimator {
        Estimator::Is | Estimator::Psis => Ok(est.into_iter().map(|e| e.value).collect()),
        Estimator::Wis => {
            let w: Vec<f64> = est.iter().map(|e| e.weight).collect();
            let mw = mean(&w);
            if mw <= 0.0 {
                return Err(Error::DegenerateWeights);
            }
            Ok(est.into_iter().map(|e| e.value / mw).collect())
        }
    }
}

/// Point estimate of the policy's value.
pub fn estimate(data: &Dataset, pi_e: &Policy, estimator: Estimator, disc: DiscountSpec) -> Result<f64> {
    match estimator {
        Estimator::Wis => wis_estimate(data, pi_e, disc),
        _ => Ok(mean(&per_trajectory_values(data, pi_e, estimator, disc)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traj::{State, Step};
    use proptest::prelude::*;

    fn traj(steps: &[(usize, f64, f64)]) -> Trajectory {
        Trajectory::new(
            "u",
            steps
                .iter()
                .map(|&(a, r, bp)| Step { state: State::Discrete(0), action: a, reward: r, behavior_prob: bp })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn behavior_policy_gives_unit_weights() {
        let pi = Policy::tabular(vec![vec![0.3, 0.7]]).unwrap();
        let t = traj(&[(0, 1.0, 0.3), (1, 0.0, 0.7), (1, 1.0, 0.7)]);
        let d = DiscountSpec::new(0.9).unwrap();
        let e = is_estimate(&t, &pi, d).unwrap();
        assert_eq!(e.weight, 1.0);
        assert!((e.value - 1.81).abs() < 1e-12);
        assert!((per_step_is(&t, &pi, d).unwrap().value - 1.81).abs() < 1e-12);
    }

    #[test]
    fn disagreeing_deterministic_policy_zeroes_value() {
        let t = traj(&[(0, 1.0, 0.5), (1, 1.0, 0.5)]);
        let det = Policy::deterministic(&[0], 2);
        let d = DiscountSpec::undiscounted();
        assert_eq!(is_estimate(&t, &det, d).unwrap().value, 0.0);
        // The first reward is still credited per step.
        assert_eq!(per_step_is(&t, &det, d).unwrap().value, 2.0);
    }

    #[test]
    fn single_step_estimators_agree() {
        let t = traj(&[(1, 1.0, 0.25)]);
        let pi = Policy::tabular(vec![vec![0.5, 0.5]]).unwrap();
        let d = DiscountSpec::new(0.7).unwrap();
        assert_eq!(is_estimate(&t, &pi, d).unwrap(), per_step_is(&t, &pi, d).unwrap());
    }

    #[test]
    fn wis_single_trajectory_is_return() {
        let data = Dataset::new(vec![traj(&[(1, 1.0, 0.25), (0, 1.0, 0.5)])]);
        let pi = Policy::tabular(vec![vec![0.1, 0.9]]).unwrap();
        let g = wis_estimate(&data, &pi, DiscountSpec::undiscounted()).unwrap();
        assert!((g - 2.0).abs() < 1e-12);
        let det = Policy::deterministic(&[0], 2);
        let data = Dataset::new(vec![traj(&[(1, 1.0, 0.5)])]);
        assert_eq!(wis_estimate(&data, &det, DiscountSpec::undiscounted()), Err(Error::DegenerateWeights));
    }

    proptest! {
        #[test]
        fn wis_within_return_range(
            rows in proptest::collection::vec((0usize..2, 0.0f64..3.0, 0.05f64..1.0), 1..30),
            p0 in 0.05f64..0.95,
        ) {
            let data = Dataset::new(rows.iter().map(|&(a, r, bp)| traj(&[(a, r, bp)])).collect());
            let pi = Policy::tabular(vec![vec![p0, 1.0 - p0]]).unwrap();
            let g = wis_estimate(&data, &pi, DiscountSpec::undiscounted()).unwrap();
            let max_r = rows.iter().map(|r| r.1).fold(0.0, f64::max);
            prop_assert!(g >= 0.0 && g <= max_r * (1.0 + 1e-12));
        }

        #[test]
        fn zero_rewards_give_zero(rows in proptest::collection::vec((0usize..2, 0.05f64..1.0), 1..20)) {
            let data = Dataset::new(rows.iter().map(|&(a, bp)| traj(&[(a, 0.0, bp), (1 - a, 0.0, bp)])).collect());
            let pi = Policy::tabular(vec![vec![0.2, 0.8]]).unwrap();
            let d = DiscountSpec::new(0.9).unwrap();
            for e in [Estimator::Is, Estimator::Psis, Estimator::Wis] {
                prop_assert_eq!(estimate(&data, &pi, e, d).unwrap(), 0.0);
            }
        }
    }
}
