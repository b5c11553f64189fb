use super::{policy_improvement, CandidateVariant, Improvement, PolicySpace, SafetySpec, SearchConfig};
use crate::error::{Error, Result};
use crate::numeric::derive_seed;
use crate::ope::wis_estimate;
use crate::policy::Policy;
use crate::sim::{exact_value, simulate_from, SimEnv};
use crate::traj::Dataset;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DaedalusVariant {
    /// Clears the test set after every acceptance.
    D1,
    /// Keeps the test set and scores the library on train ∪ test.
    D2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaedalusConfig {
    pub variant: DaedalusVariant,
    /// Trajectories per iteration; the last entry repeats.
    pub beta: Vec<usize>,
    pub iterations: usize,
    pub search: SearchConfig,
    /// Use k-fold candidates only until the first acceptance.
    pub kfold_until_first_accept: bool,
    pub stop_at_first_accept: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaedalusRecord {
    pub iteration: usize,
    pub beta: usize,
    pub generated: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub behavior_index: usize,
    pub test_bound: f64,
    pub passed_safety: bool,
    pub accepted: bool,
    /// Library maximum of `g` on the comparison data before this iteration's
    /// decision, and after it.
    pub incumbent_score_before: f64,
    pub incumbent_score_after: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate_true_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaedalusLog {
    pub records: Vec<DaedalusRecord>,
    pub library: Vec<Policy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_accept_trajectories: Option<usize>,
}

fn g_or_neg_inf(pi: &Policy, data: &Dataset, spec: &SafetySpec) -> f64 {
    if data.is_empty() {
        return f64::NEG_INFINITY;
    }
    wis_estimate(data, pi, spec.discount).unwrap_or(f64::NEG_INFINITY)
}

fn best_in(library: &[Policy], data: &Dataset, spec: &SafetySpec) -> (usize, f64) {
    let mut best = (0, g_or_neg_inf(&library[0], data, spec));
    for (i, p) in library.iter().enumerate().skip(1) {
        let g = g_or_neg_inf(p, data, spec);
        if g > best.1 {
            best = (i, g);
        }
    }
    best
}

fn comparison_data(variant: DaedalusVariant, train: &Dataset, test: &Dataset) -> Dataset {
    match variant {
        DaedalusVariant::D1 => train.clone(),
        DaedalusVariant::D2 => {
            let mut d = train.clone();
            d.extend(test.clone());
            d
        }
    }
}

/// Incremental safe improvement on a simulator, starting from `π0`.
pub fn daedalus(env: &SimEnv, space: &PolicySpace, spec: &SafetySpec, cfg: &DaedalusConfig) -> Result<DaedalusLog> {
    if cfg.beta.is_empty() || cfg.beta.iter().any(|&b| b < 5) {
        return Err(Error::invalid("every beta must be at least 5"));
    }
    let mut library = vec![space.initial.clone()];
    let mut train = Dataset::default();
    let mut test = Dataset::default();
    let mut generated = 0;
    let mut records = Vec::new();
    let mut first_accept = None;
    for it in 0..cfg.iterations {
        let beta = cfg.beta[it.min(cfg.beta.len() - 1)];
        let hat = comparison_data(cfg.variant, &train, &test);
        let (behavior_index, _) = best_in(&library, &hat, spec);
        let batch = simulate_from(env, &library[behavior_index], beta, cfg.seed, generated)?;
        generated += beta;
        let n_train = beta.div_ceil(5);
        train.extend(batch.slice(0, n_train));
        test.extend(batch.slice(n_train, beta));

        let mut search = cfg.search.clone();
        if cfg.kfold_until_first_accept && first_accept.is_some() {
            search.variant = CandidateVariant::None;
        }
        let it_spec = SafetySpec { seed: derive_seed(spec.seed, &[it as u64]), ..*spec };
        let report = policy_improvement(&train, &test, &it_spec, space, &search)?;

        let hat = comparison_data(cfg.variant, &train, &test);
        let (_, before) = best_in(&library, &hat, spec);
        let passed = matches!(report.result, Improvement::Safe { .. });
        let mut accepted = false;
        let mut after = before;
        if let Improvement::Safe { policy } = &report.result {
            let g = g_or_neg_inf(policy, &hat, spec);
            if g > before {
                library.push(policy.clone());
                accepted = true;
                after = g;
                if cfg.variant == DaedalusVariant::D1 {
                    test = Dataset::default();
                }
                first_accept.get_or_insert(generated);
            }
        }
        let candidate_true_value = exact_value(env, &report.candidate, spec.discount).ok();
        records.push(DaedalusRecord {
            iteration: it,
            beta,
            generated,
            train_size: train.n(),
            test_size: test.n(),
            behavior_index,
            test_bound: report.test_bound.lower_bound,
            passed_safety: passed,
            accepted,
            incumbent_score_before: before,
            incumbent_score_after: after,
            candidate_true_value,
        });
        if accepted && cfg.stop_at_first_accept {
            break;
        }
    }
    Ok(DaedalusLog { records, library, first_accept_trajectories: first_accept })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hcope::BoundMethod;
    use crate::policy::SoftmaxLinear;
    use crate::safe::EsConfig;
    use crate::sim::two_state;

    #[test]
    fn beta_must_fill_train_slice() {
        let space = PolicySpace::new(Policy::uniform(2), SoftmaxLinear::zeros(2, 1, vec![0.0], vec![1.0]).unwrap()).unwrap();
        let spec = SafetySpec::new(0.5, 0.05, BoundMethod::Tt).unwrap();
        let cfg = DaedalusConfig {
            variant: DaedalusVariant::D1,
            beta: vec![4],
            iterations: 1,
            search: SearchConfig::default(),
            kfold_until_first_accept: true,
            stop_at_first_accept: false,
            seed: 0,
        };
        assert!(daedalus(&two_state(), &space, &spec, &cfg).is_err());
    }

    #[test]
    fn accepted_policies_raise_the_incumbent() {
        let space = PolicySpace::new(Policy::uniform(2), SoftmaxLinear::zeros(2, 1, vec![0.0], vec![1.0]).unwrap()).unwrap();
        let spec = SafetySpec::new(0.8, 0.05, BoundMethod::Tt).unwrap();
        for variant in [DaedalusVariant::D1, DaedalusVariant::D2] {
            let cfg = DaedalusConfig {
                variant,
                beta: vec![50, 100, 500],
                iterations: 4,
                search: SearchConfig {
                    variant: CandidateVariant::None,
                    es: EsConfig { budget: 80, lambda: 10, sigma0: 1.0 },
                    ..SearchConfig::default()
                },
                kfold_until_first_accept: false,
                stop_at_first_accept: false,
                seed: 3,
            };
            let log = daedalus(&two_state(), &space, &spec, &cfg).unwrap();
            assert_eq!(log.records.len(), 4);
            for r in &log.records {
                assert!(r.incumbent_score_after >= r.incumbent_score_before);
                if r.accepted {
                    assert!(r.passed_safety);
                }
            }
        }
    }
}
