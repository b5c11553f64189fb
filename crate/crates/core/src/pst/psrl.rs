use super::mdp::{build_mdp, policy_iteration, PstMdp, RewardSpec};
use super::tree::{pst_fit, Pst, PstConfig};
use crate::error::{Error, Result};
use crate::numeric::stream_rng;
use crate::policy::{argmax, sample_index};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaFamily {
    pub theta_grid: Vec<f64>,
    pub prior: Vec<f64>,
}

impl ThetaFamily {
    pub fn new(theta_grid: Vec<f64>, prior: Vec<f64>) -> Result<Self> {
        if theta_grid.is_empty() || theta_grid.len() != prior.len() {
            return Err(Error::invalid("grid and prior must be nonempty and of equal length"));
        }
        if theta_grid.iter().any(|t| !(t.is_finite() && *t >= 1.0)) {
            return Err(Error::invalid("every theta must be at least 1"));
        }
        if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("prior must be a distribution"));
        }
        Ok(Self { theta_grid, prior })
    }

    pub fn uniform(theta_grid: Vec<f64>) -> Result<Self> {
        let n = theta_grid.len().max(1);
        Self::new(theta_grid, vec![1.0 / n as f64; n])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorUpdate {
    pub posterior: Vec<f64>,
    /// Every model gave the transition zero probability; the prior was kept.
    pub retained: bool,
}

/// Bayes rule over the grid with the transition likelihood under each model.
pub fn posterior_update(prior: &[f64], models: &[PstMdp], x: usize, a: usize, x_next: usize) -> PosteriorUpdate {
    let joint: Vec<f64> = prior.iter().zip(models).map(|(p, m)| p * m.transition_prob(x, a, x_next)).collect();
    let total: f64 = joint.iter().sum();
    if !(total > 0.0) {
        return PosteriorUpdate { posterior: prior.to_vec(), retained: true };
    }
    PosteriorUpdate { posterior: joint.iter().map(|j| j / total).collect(), retained: false }
}

/// Per-θ models and their optimal policies, solved ahead of the online loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrlSetup {
    pub family: ThetaFamily,
    pub models: Vec<PstMdp>,
    pub policies: Vec<Vec<usize>>,
}

impl PsrlSetup {
    pub fn new(pst: &Pst, family: ThetaFamily, reward: &RewardSpec, gamma: f64) -> Result<Self> {
        let solved: Vec<(PstMdp, Vec<usize>)> = family
            .theta_grid
            .par_iter()
            .map(|&theta| {
                let mdp = build_mdp(pst, theta, reward, gamma)?;
                let policy = policy_iteration(&mdp)?.policy;
                Ok((mdp, policy))
            })
            .collect::<Result<_>>()?;
        let (models, policies) = solved.into_iter().unzip();
        Ok(Self { family, models, policies })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resample {
    pub t: usize,
    pub theta: f64,
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsrlRun {
    /// Recommended symbol per step; `None` is the null action.
    pub actions: Vec<Option<usize>>,
    pub symbols: Vec<usize>,
    pub rewards: Vec<f64>,
    pub resamples: Vec<Resample>,
    pub posterior: Vec<f64>,
    pub retained_updates: usize,
}

impl PsrlRun {
    pub fn average_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len().max(1) as f64
    }

    pub fn null_steps(&self) -> Vec<usize> {
        self.actions.iter().enumerate().filter(|(_, a)| a.is_none()).map(|(t, _)| t).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Resample at t = 1, 2, 4, 8, … and follow the sampled model's policy.
    Doubling,
    /// Resample every step and take the recommendation with the best
    /// immediate reward. Like a bandit, it always recommends something.
    Greedy,
}

fn run(setup: &PsrlSetup, env: &PstMdp, horizon: usize, seed: u64, schedule: Schedule) -> Result<PsrlRun> {
    if setup.models.iter().any(|m| m.n_symbols() != env.n_symbols() || m.next.len() != env.next.len()) {
        return Err(Error::invalid("environment and models disagree on the tree"));
    }
    let mut env_rng = stream_rng(seed, &[0]);
    let mut agent_rng = stream_rng(seed, &[1]);
    let mut posterior = setup.family.prior.clone();
    let mut run = PsrlRun {
        actions: Vec::with_capacity(horizon),
        symbols: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        resamples: Vec::new(),
        posterior: Vec::new(),
        retained_updates: 0,
    };
    let mut x = 0;
    let mut next_sample = 1;
    let mut current = 0;
    for t in 1..=horizon {
        let resample = match schedule {
            Schedule::Doubling => t == next_sample,
            Schedule::Greedy => true,
        };
        if resample {
            current = sample_index(&posterior, &mut agent_rng).0;
            if schedule == Schedule::Doubling {
                next_sample *= 2;
                run.resamples.push(Resample { t, theta: setup.family.theta_grid[current], posterior: posterior.clone() });
            }
        }
        let a = match schedule {
            Schedule::Doubling => setup.policies[current][x],
            Schedule::Greedy => argmax(&setup.models[current].rewards[x][..env.n_symbols()]),
        };
        let probs = env.symbol_probs(x, a);
        let s = sample_index(&probs, &mut env_rng).0;
        let x_next = env.next[x][s];
        run.rewards.push(env.desirability[s] - env.costs[x][a]);
        run.actions.push((a < env.n_symbols()).then_some(a));
        run.symbols.push(s);
        let update = posterior_update(&posterior, &setup.models, x, a, x_next);
        run.retained_updates += update.retained as usize;
        posterior = update.posterior;
        x = x_next;
    }
    run.posterior = posterior;
    Ok(run)
}

/// Posterior sampling with policy switches on a doubling schedule.
pub fn ds_psrl(setup: &PsrlSetup, env: &PstMdp, horizon: usize, seed: u64) -> Result<PsrlRun> {
    run(setup, env, horizon, seed, Schedule::Doubling)
}

/// One-step Thompson sampling: a fresh θ every step and a myopic choice
/// among the recommendations.
pub fn greedy_thompson(setup: &PsrlSetup, env: &PstMdp, horizon: usize, seed: u64) -> Result<PsrlRun> {
    run(setup, env, horizon, seed, Schedule::Greedy)
}

/// Synthetic point-of-interest corpus and the tree fitted to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiWorld {
    pub corpus: Vec<Vec<usize>>,
    pub pst: Pst,
    pub reward: RewardSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoiWorldConfig {
    pub n_symbols: usize,
    pub n_sequences: usize,
    pub sequence_len: usize,
    /// Probability of walking on to the next point of the tour.
    pub tour: f64,
    /// Probability of skipping one point of the tour.
    pub skip: f64,
    pub pst: PstConfig,
}

impl Default for PoiWorldConfig {
    fn default() -> Self {
        Self {
            n_symbols: 88,
            n_sequences: 7000,
            sequence_len: 12,
            tour: 0.6,
            skip: 0.1,
            pst: PstConfig { max_depth: 2, min_count: 60, prune_epsilon: 0.05 },
        }
    }
}

/// Tourists mostly follow a fixed tour and otherwise jump to a popular point.
/// Desirability is visit frequency scaled so the most visited point scores 1.
pub fn poi_world(cfg: &PoiWorldConfig, seed: u64) -> Result<PoiWorld> {
    let k = cfg.n_symbols;
    if k < 3 || cfg.n_sequences == 0 || cfg.sequence_len == 0 {
        return Err(Error::EmptyCorpus);
    }
    if !(cfg.tour >= 0.0 && cfg.skip >= 0.0 && cfg.tour + cfg.skip < 1.0) {
        return Err(Error::invalid("tour and skip probabilities must leave room for jumps"));
    }
    let mut rng = stream_rng(seed, &[0]);
    let popularity: Vec<f64> = (0..k).map(|s| (1.0 + rng.random::<f64>()) / (s + 1) as f64).collect();
    let total: f64 = popularity.iter().sum();
    let popularity: Vec<f64> = popularity.iter().map(|p| p / total).collect();
    let chain: Vec<Vec<f64>> = (0..k)
        .map(|s| {
            let mut row: Vec<f64> = popularity.iter().map(|p| (1.0 - cfg.tour - cfg.skip) * p).collect();
            row[(s + 1) % k] += cfg.tour;
            row[(s + 2) % k] += cfg.skip;
            row[s] = 0.0;
            let z: f64 = row.iter().sum();
            row.iter().map(|p| p / z).collect()
        })
        .collect();
    let corpus: Vec<Vec<usize>> = (0..cfg.n_sequences)
        .map(|i| {
            let mut rng = stream_rng(seed, &[1, i as u64]);
            let mut s = sample_index(&popularity, &mut rng).0;
            let mut seq = vec![s];
            while seq.len() < cfg.sequence_len {
                s = sample_index(&chain[s], &mut rng).0;
                seq.push(s);
            }
            seq
        })
        .collect();
    let mut freq = vec![0usize; k];
    for &s in corpus.iter().flatten() {
        freq[s] += 1;
    }
    let top = *freq.iter().max().unwrap_or(&1) as f64;
    let desirability = freq.iter().map(|&f| f as f64 / top).collect();
    let alphabet = (1..=k).map(|s| s.to_string()).collect();
    let pst = pst_fit(&corpus, alphabet, &cfg.pst)?;
    Ok(PoiWorld { corpus, pst, reward: RewardSpec::poi(desirability) })
}
