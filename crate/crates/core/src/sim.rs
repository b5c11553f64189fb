//! Finite-horizon simulators with exact dynamic-programming values.

use crate::error::{Error, Result};
use crate::numeric::stream_rng;
use crate::policy::{sample_index, Policy};
use crate::traj::{Dataset, DiscountSpec, State, Step, Trajectory, DEFAULT_MAX_LEN};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Reward is 1 with probability equal to the mean, else 0.
    Bernoulli,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEnv {
    pub n_states: usize,
    pub n_actions: usize,
    pub initial: Vec<f64>,
    /// `transitions[s][a][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Entering a terminal state ends the episode.
    #[serde(default)]
    pub terminal: Vec<bool>,
    /// `reward_mean[s][a]`.
    pub reward_mean: Vec<Vec<f64>>,
    pub reward_kind: RewardKind,
    pub horizon: usize,
    /// Optional per-state feature vectors; discrete ids are logged otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<Vec<f64>>>,
    /// Reward multiplier per episode index; the last entry persists.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub drift: Vec<f64>,
}

fn check_dist(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x.is_finite() && x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("{what} is not a probability distribution")));
    }
    Ok(())
}

impl SimEnv {
    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || na == 0 {
            return Err(Error::invalid("environment needs states and actions"));
        }
        if self.horizon == 0 || self.horizon > DEFAULT_MAX_LEN {
            return Err(Error::invalid(format!("horizon {} outside 1..={DEFAULT_MAX_LEN}", self.horizon)));
        }
        if self.initial.len() != ns || self.transitions.len() != ns || self.reward_mean.len() != ns {
            return Err(Error::invalid("state dimension mismatch"));
        }
        if !self.terminal.is_empty() && self.terminal.len() != ns {
            return Err(Error::invalid("terminal flags do not match the state count"));
        }
        check_dist(&self.initial, "initial distribution")?;
        for s in 0..ns {
            if self.transitions[s].len() != na || self.reward_mean[s].len() != na {
                return Err(Error::invalid(format!("state {s}: action dimension mismatch")));
            }
            for a in 0..na {
                if self.transitions[s][a].len() != ns {
                    return Err(Error::invalid(format!("transition ({s},{a}) has the wrong length")));
                }
                check_dist(&self.transitions[s][a], &format!("transition ({s},{a})"))?;
                let r = self.reward_mean[s][a];
                let bad = !(r.is_finite() && r >= 0.0) || (self.reward_kind == RewardKind::Bernoulli && r > 1.0);
                if bad {
                    return Err(Error::invalid(format!("reward mean ({s},{a}) = {r} is invalid")));
                }
            }
        }
        if let Some(f) = &self.features {
            if f.len() != ns {
                return Err(Error::invalid("feature map does not cover every state"));
            }
        }
        if self.drift.iter().any(|&m| !(m.is_finite() && m >= 0.0)) {
            return Err(Error::invalid("drift multipliers must be finite and nonnegative"));
        }
        Ok(())
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal.get(s).copied().unwrap_or(false)
    }

    pub fn state(&self, s: usize) -> State {
        match &self.features {
            Some(f) => State::Features(f[s].clone()),
            None => State::Discrete(s),
        }
    }

    pub fn drift_at(&self, episode: usize) -> f64 {
        match self.drift.len() {
            0 => 1.0,
            len => self.drift[episode.min(len - 1)],
        }
    }

    /// Lower and upper bounds of the observed features, for basis scaling.
    pub fn feature_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let rows: Vec<Vec<f64>> = (0..self.n_states).map(|s| self.state(s).features().into_owned()).collect();
        let d = rows[0].len();
        let lo = (0..d).map(|j| rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min)).collect();
        let hi = (0..d).map(|j| rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max)).collect();
        (lo, hi)
    }

    fn policy_table(&self, policy: &Policy) -> Result<Vec<Vec<f64>>> {
        if policy.n_actions() != self.n_actions {
            return Err(Error::invalid(format!(
                "policy has {} actions, environment has {}",
                policy.n_actions(),
                self.n_actions
            )));
        }
        (0..self.n_states).map(|s| policy.action_probs(&self.state(s))).collect()
    }

    fn episode<R: Rng>(&self, table: &[Vec<f64>], episode: usize, rng: &mut R) -> Result<Trajectory> {
        let mult = self.drift_at(episode);
        let mut s = sample_index(&self.initial, rng).0;
        let mut steps = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let (a, bp) = sample_index(&table[s], rng);
            let mean = self.reward_mean[s][a] * mult;
            let reward = match self.reward_kind {
                RewardKind::Bernoulli => f64::from(u8::from(rng.random::<f64>() < mean.min(1.0))),
                RewardKind::Deterministic => mean,
            };
            steps.push(Step { state: self.state(s), action: a, reward, behavior_prob: bp });
            s = sample_index(&self.transitions[s][a], rng).0;
            if self.is_terminal(s) {
                break;
            }
        }
        Ok(Trajectory::new(format!("u{episode}"), steps)?.with_timestamp(episode as f64))
    }
}

/// `n` trajectories under `policy`, with the policy's probabilities logged.
pub fn simulate(env: &SimEnv, policy: &Policy, n: usize, seed: u64) -> Result<Dataset> {
    simulate_from(env, policy, n, seed, 0)
}

/// As [`simulate`], numbering episodes from `first_episode` (which selects
/// the drift multiplier and the RNG stream).
pub fn simulate_from(env: &SimEnv, policy: &Policy, n: usize, seed: u64, first_episode: usize) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyData);
    }
    env.validate()?;
    let table = env.policy_table(policy)?;
    let trajs: Result<Vec<Trajectory>> = (first_episode..first_episode + n)
        .into_par_iter()
        .map(|e| env.episode(&table, e, &mut stream_rng(seed, &[e as u64])))
        .collect();
    Ok(Dataset::new(trajs?))
}

fn backward<F>(env: &SimEnv, table: &[Vec<f64>], gamma: f64, reward: F) -> f64
where
    F: Fn(usize, usize) -> f64,
{
    let ns = env.n_states;
    let mut v = vec![0.0; ns];
    for _ in 0..env.horizon {
        let next: Vec<f64> = (0..ns)
            .map(|s| {
                (0..env.n_actions)
                    .map(|a| {
                        let cont: f64 = (0..ns)
                            .filter(|&s2| !env.is_terminal(s2))
                            .map(|s2| env.transitions[s][a][s2] * v[s2])
                            .sum();
                        table[s][a] * (reward(s, a) + gamma * cont)
                    })
                    .sum()
            })
            .collect();
        v = next;
    }
    env.initial.iter().zip(&v).map(|(p, x)| p * x).sum()
}

/// Exact expected discounted return of `policy` without drift.
pub fn exact_value(env: &SimEnv, policy: &Policy, disc: DiscountSpec) -> Result<f64> {
    exact_value_at(env, policy, disc, None)
}

/// Exact value with the drift multiplier of `episode` applied.
pub fn exact_value_at(env: &SimEnv, policy: &Policy, disc: DiscountSpec, episode: Option<usize>) -> Result<f64> {
    env.validate()?;
    let table = env.policy_table(policy)?;
    let mult = episode.map_or(1.0, |e| env.drift_at(e));
    let clip = env.reward_kind == RewardKind::Bernoulli;
    Ok(backward(env, &table, disc.gamma(), |s, a| {
        let m = env.reward_mean[s][a] * mult;
        if clip {
            m.min(1.0)
        } else {
            m
        }
    }))
}

/// Exact expected number of steps per episode.
pub fn exact_visits(env: &SimEnv, policy: &Policy) -> Result<f64> {
    env.validate()?;
    let table = env.policy_table(policy)?;
    Ok(backward(env, &table, 1.0, |_, _| 1.0))
}

/// Optimal finite-horizon value (time-dependent optimal policy).
pub fn optimal_value(env: &SimEnv, disc: DiscountSpec) -> Result<f64> {
    env.validate()?;
    let ns = env.n_states;
    let mut v = vec![0.0; ns];
    for _ in 0..env.horizon {
        v = (0..ns)
            .map(|s| {
                (0..env.n_actions)
                    .map(|a| {
                        let cont: f64 = (0..ns)
                            .filter(|&s2| !env.is_terminal(s2))
                            .map(|s2| env.transitions[s][a][s2] * v[s2])
                            .sum();
                        env.reward_mean[s][a] + disc.gamma() * cont
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
    }
    Ok(env.initial.iter().zip(&v).map(|(p, x)| p * x).sum())
}

/// Five-state chain: action 0 advances with probability 0.9, action 1
/// falls back to the start with probability 0.5. Clicks arrive with
/// probability `s/4`.
pub fn chain() -> SimEnv {
    let ns = 5;
    let transitions = (0..ns)
        .map(|s| {
            let mut adv = vec![0.0; ns];
            adv[(s + 1).min(ns - 1)] += 0.9;
            adv[s] += 0.1;
            let mut back = vec![0.0; ns];
            back[0] += 0.5;
            back[s] += 0.5;
            vec![adv, back]
        })
        .collect();
    SimEnv {
        n_states: ns,
        n_actions: 2,
        initial: vec![1.0, 0.0, 0.0, 0.0, 0.0],
        transitions,
        terminal: Vec::new(),
        reward_mean: (0..ns).map(|s| vec![s as f64 / 4.0; 2]).collect(),
        reward_kind: RewardKind::Bernoulli,
        horizon: 10,
        features: None,
        drift: Vec::new(),
    }
}

/// Behavior policy used with [`chain`].
pub fn chain_behavior() -> Policy {
    Policy::Tabular { rows: vec![vec![0.6, 0.4]] }
}

/// Three-stage marketing funnel plus an absorbing "left" state. Offering
/// (action 0) clicks with probability 0.3, 0.3, 0.6 by stage but the user
/// leaves with probability 0.9 afterwards; nurturing (action 1) clicks with
/// probability 0.05 and moves the user one stage closer.
pub fn funnel() -> SimEnv {
    let left = 3;
    let mut transitions = Vec::new();
    for s in 0..4 {
        let mut offer = vec![0.0; 4];
        let mut nurture = vec![0.0; 4];
        if s == left {
            offer[left] = 1.0;
            nurture[left] = 1.0;
        } else {
            offer[left] = 0.9;
            offer[s] = 0.1;
            nurture[(s + 1).min(2)] = 1.0;
        }
        transitions.push(vec![offer, nurture]);
    }
    let features = (0..4)
        .map(|s| {
            let mut f = vec![0.0; 4];
            if s < 3 {
                f[s] = 1.0;
            }
            f[3] = s.min(2) as f64 / 2.0;
            f
        })
        .collect();
    SimEnv {
        n_states: 4,
        n_actions: 2,
        initial: vec![1.0, 0.0, 0.0, 0.0],
        transitions,
        terminal: vec![false, false, false, true],
        reward_mean: vec![vec![0.3, 0.05], vec![0.3, 0.05], vec![0.6, 0.05], vec![0.0, 0.0]],
        reward_kind: RewardKind::Bernoulli,
        horizon: DEFAULT_MAX_LEN,
        features: Some(features),
        drift: Vec::new(),
    }
}

/// Two states visited at random over two steps; the rewarding action
/// differs by state. The uniform policy earns 0.4 per step, the best 0.6.
pub fn two_state() -> SimEnv {
    SimEnv {
        n_states: 2,
        n_actions: 2,
        initial: vec![0.5, 0.5],
        transitions: vec![vec![vec![0.5, 0.5]; 2]; 2],
        terminal: Vec::new(),
        reward_mean: vec![vec![0.2, 0.6], vec![0.6, 0.2]],
        reward_kind: RewardKind::Bernoulli,
        horizon: 2,
        features: None,
        drift: Vec::new(),
    }
}

/// Single-visit click stream (one state, two offers) with a per-episode
/// CTR multiplier. Offer 1 clicks twice as often as offer 0; under the
/// uniform policy the CTR is `base_ctr`.
pub fn click_stream(base_ctr: f64, drift: Vec<f64>) -> SimEnv {
    SimEnv {
        n_states: 1,
        n_actions: 2,
        initial: vec![1.0],
        transitions: vec![vec![vec![1.0]; 2]],
        terminal: Vec::new(),
        reward_mean: vec![vec![base_ctr * 2.0 / 3.0, base_ctr * 4.0 / 3.0]],
        reward_kind: RewardKind::Bernoulli,
        horizon: 1,
        features: None,
        drift,
    }
}

/// Drift schedule shaped like a mid-stream outage: full CTR, a slide to
/// `floor` of it over the middle fifth, then recovery.
pub fn dip_schedule(n_episodes: usize, floor: f64) -> Vec<f64> {
    let n = n_episodes as f64;
    (0..n_episodes)
        .map(|e| {
            let x = e as f64 / n;
            if !(0.4..0.7).contains(&x) {
                1.0
            } else if x < 0.45 {
                1.0 - (1.0 - floor) * (x - 0.4) / 0.05
            } else if x < 0.6 {
                floor
            } else {
                floor + (1.0 - floor) * (x - 0.6) / 0.1
            }
        })
        .collect()
}

/// Twenty-step click environment whose uniform-policy click rate per visit
/// equals `target_rate` exactly.
pub fn sparse_click_env(target_rate: f64) -> Result<SimEnv> {
    if !(0.0..=1.0).contains(&target_rate) {
        return Err(Error::invalid(format!("target rate {target_rate} outside [0, 1]")));
    }
    let (ns, na) = (5, 3);
    let transitions = (0..ns)
        .map(|s| {
            (0..na)
                .map(|a| {
                    let mut row = vec![0.0; ns];
                    row[(s + a + 1) % ns] += 0.7;
                    row[s] += 0.2;
                    row[(s * 2 + a) % ns] += 0.1;
                    row
                })
                .collect()
        })
        .collect();
    let base: Vec<Vec<f64>> = (0..ns).map(|s| (0..na).map(|a| 0.002 * (1 + (s * na + a) % 4) as f64).collect()).collect();
    let mut env = SimEnv {
        n_states: ns,
        n_actions: na,
        initial: vec![1.0 / ns as f64; ns],
        transitions,
        terminal: Vec::new(),
        reward_mean: base.clone(),
        reward_kind: RewardKind::Bernoulli,
        horizon: DEFAULT_MAX_LEN,
        features: None,
        drift: Vec::new(),
    };
    let uniform = Policy::uniform(na);
    let base_rate = exact_value(&env, &uniform, DiscountSpec::undiscounted())? / exact_visits(&env, &uniform)?;
    env.reward_mean = base
        .iter()
        .map(|row| {
            row.iter()
                .map(|&p| {
                    if target_rate <= base_rate {
                        p * target_rate / base_rate
                    } else {
                        1.0 - (1.0 - p) * (1.0 - target_rate) / (1.0 - base_rate)
                    }
                })
                .collect()
        })
        .collect();
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for env in [chain(), funnel(), two_state(), click_stream(0.1, dip_schedule(100, 0.05))] {
            env.validate().unwrap();
        }
        sparse_click_env(0.0038).unwrap().validate().unwrap();
    }

    #[test]
    fn zero_episodes_is_an_error() {
        assert_eq!(simulate(&chain(), &chain_behavior(), 0, 1), Err(Error::EmptyData));
    }

    #[test]
    fn logged_probabilities_match_policy() {
        let env = funnel();
        let pi = Policy::tabular(vec![vec![0.3, 0.7]]).unwrap();
        let data = simulate(&env, &pi, 200, 5).unwrap();
        for t in data.trajectories() {
            for s in t.steps() {
                assert_eq!(s.behavior_prob, pi.action_prob(&s.state, s.action).unwrap());
            }
        }
        assert_eq!(data, simulate(&env, &pi, 200, 5).unwrap());
    }

    #[test]
    fn deterministic_env_is_reproducible() {
        let mut env = chain();
        env.reward_kind = RewardKind::Deterministic;
        env.transitions = (0..5).map(|s| vec![{ let mut r = vec![0.0; 5]; r[(s + 1).min(4)] = 1.0; r }; 2]).collect();
        let pi = Policy::deterministic(&[0], 2);
        let data = simulate(&env, &pi, 3, 9).unwrap();
        assert_eq!(data.trajectories()[0].steps(), data.trajectories()[2].steps());
    }

    #[test]
    fn single_step_value() {
        let env = click_stream(0.3, Vec::new());
        let pi = Policy::tabular(vec![vec![0.25, 0.75]]).unwrap();
        let v = exact_value(&env, &pi, DiscountSpec::undiscounted()).unwrap();
        assert!((v - (0.25 * 0.2 + 0.75 * 0.4)).abs() < 1e-15);
    }

    #[test]
    fn sparse_env_extremes() {
        let uniform = Policy::uniform(3);
        let d = DiscountSpec::undiscounted();
        let zero = sparse_click_env(0.0).unwrap();
        assert_eq!(exact_value(&zero, &uniform, d).unwrap(), 0.0);
        let full = sparse_click_env(1.0).unwrap();
        assert!(full.reward_mean.iter().flatten().all(|&p| p == 1.0));
        let mid = sparse_click_env(0.0038).unwrap();
        let rate = exact_value(&mid, &uniform, d).unwrap() / exact_visits(&mid, &uniform).unwrap();
        assert!((rate - 0.0038).abs() < 1e-12);
    }

    #[test]
    fn unit_drift_is_stationary() {
        let mut env = chain();
        let pi = chain_behavior();
        let plain = simulate(&env, &pi, 50, 2).unwrap();
        env.drift = vec![1.0; 50];
        assert_eq!(simulate(&env, &pi, 50, 2).unwrap(), plain);
    }

    #[test]
    fn funnel_rewards_patience() {
        let env = SimEnv { features: None, ..funnel() };
        let d = DiscountSpec::undiscounted();
        let offer = Policy::deterministic(&[0], 2);
        let nurture_then_offer = Policy::Tabular { rows: vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]] };
        let ltv_offer = exact_value(&env, &offer, d).unwrap();
        let ltv_patient = exact_value(&env, &nurture_then_offer, d).unwrap();
        assert!(ltv_patient > ltv_offer);
        let ctr_offer = ltv_offer / exact_visits(&env, &offer).unwrap();
        let ctr_patient = ltv_patient / exact_visits(&env, &nurture_then_offer).unwrap();
        assert!(ctr_offer > ctr_patient);
    }
}
