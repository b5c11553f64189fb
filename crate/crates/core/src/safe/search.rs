use crate::numeric::stream_rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// (μ, λ) evolution strategy with a per-coordinate step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    /// Maximum number of objective evaluations, including the start point.
    pub budget: usize,
    pub lambda: usize,
    pub sigma0: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self { budget: 400, lambda: 16, sigma0: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    pub evaluations: usize,
}

/// Maximizes `f` from `x0`, returning the best point seen. A zero budget
/// returns `x0` without evaluating it.
pub fn maximize<F>(f: F, x0: &[f64], cfg: &EsConfig, seed: u64) -> SearchOutcome
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if cfg.budget == 0 {
        return SearchOutcome { best: x0.to_vec(), best_value: f64::NEG_INFINITY, evaluations: 0 };
    }
    let d = x0.len();
    let mut best = x0.to_vec();
    let mut best_value = f(x0);
    let mut evaluations = 1;
    let lambda = cfg.lambda.max(2);
    let mu = lambda / 2;
    let raw: Vec<f64> = (0..mu).map(|i| (mu as f64 + 0.5).ln() - ((i + 1) as f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let c_sigma = (mu_eff / (d as f64 + mu_eff + 2.0)).min(0.5);
    let mut mean = x0.to_vec();
    let mut sigma = vec![cfg.sigma0; d];
    let mut generation = 0u64;
    while evaluations < cfg.budget {
        let count = lambda.min(cfg.budget - evaluations);
        let mut rng = stream_rng(seed, &[generation]);
        let pop: Vec<Vec<f64>> = (0..count)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean[j] + sigma[j] * z
                    })
                    .collect()
            })
            .collect();
        let values: Vec<f64> = pop.par_iter().map(|x| f(x)).collect();
        evaluations += count;
        let mut order: Vec<usize> = (0..count).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        if values[order[0]] > best_value {
            best_value = values[order[0]];
            best = pop[order[0]].clone();
        }
        if count < lambda {
            break;
        }
        let elite = &order[..mu];
        let new_mean: Vec<f64> =
            (0..d).map(|j| elite.iter().zip(&weights).map(|(&i, w)| w * pop[i][j]).sum()).collect();
        for j in 0..d {
            let spread: f64 = elite.iter().zip(&weights).map(|(&i, w)| w * (pop[i][j] - mean[j]).powi(2)).sum();
            sigma[j] = ((1.0 - c_sigma) * sigma[j] * sigma[j] + c_sigma * spread).sqrt().max(1e-12);
        }
        mean = new_mean;
        generation += 1;
    }
    SearchOutcome { best, best_value, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_optimum() {
        let f = |x: &[f64]| -((x[0] - 1.5).powi(2) + 2.0 * (x[1] + 0.7).powi(2));
        let cfg = EsConfig { budget: 3000, lambda: 12, sigma0: 1.0 };
        let out = maximize(f, &[0.0, 0.0], &cfg, 11);
        assert!((out.best[0] - 1.5).abs() < 1e-2 && (out.best[1] + 0.7).abs() < 1e-2, "{:?}", out.best);
        assert_eq!(out, maximize(f, &[0.0, 0.0], &cfg, 11));
    }

    #[test]
    fn zero_budget_returns_start() {
        let out = maximize(|_| 1.0, &[0.3, 0.4], &EsConfig { budget: 0, ..EsConfig::default() }, 0);
        assert_eq!(out.best, vec![0.3, 0.4]);
        assert_eq!(out.evaluations, 0);
    }
}
