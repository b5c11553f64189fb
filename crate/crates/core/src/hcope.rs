//! High-confidence lower bounds on a mean: distribution-free concentration
//! (CI), Student's t (TT) and the BCa bootstrap, plus the error-rate
//! calibration experiment.

use crate::error::{Error, Result};
use crate::numeric::{mean, normal_cdf, normal_quantile, pairwise_sum, quantile_sorted, sample_std, stream_rng, student_t_quantile, derive_seed};
use crate::ope::{per_trajectory_values, Estimator};
use crate::policy::Policy;
use crate::traj::{Dataset, DiscountSpec};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Gamma, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_BOOTSTRAP: usize = 2000;
const BOOTSTRAP_CHUNK: usize = 64;
/// Every `HOLDOUT_STRIDE`-th sample is held out to pick the clip threshold.
const HOLDOUT_STRIDE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundMethod {
    Ci,
    Tt,
    Bca,
}

impl std::str::FromStr for BoundMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ci" => Ok(BoundMethod::Ci),
            "tt" => Ok(BoundMethod::Tt),
            "bca" => Ok(BoundMethod::Bca),
            other => Err(Error::invalid(format!("unknown bound method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipThreshold {
    /// 95th percentile of a 1/20 held-out slice; the bound uses the rest.
    HeldOutQuantile,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sample_mean: f64,
    pub sample_std: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncation_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_b: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction_m: Option<usize>,
    #[serde(default)]
    pub conservative: bool,
    #[serde(default)]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub lower_bound: f64,
    pub method: BoundMethod,
    pub delta: f64,
    pub n: usize,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub method: BoundMethod,
    pub delta: f64,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub clip: ClipThreshold,
}

impl BoundConfig {
    pub fn new(method: BoundMethod, delta: f64) -> Self {
        Self { method, delta, bootstrap_b: DEFAULT_BOOTSTRAP, seed: 0, clip: ClipThreshold::HeldOutQuantile }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_bootstrap(mut self, b: usize) -> Self {
        self.bootstrap_b = b;
        self
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidDelta(delta))
    }
}

fn check_samples(xs: &[f64], needed: usize) -> Result<()> {
    if xs.len() < needed {
        return Err(Error::TooFewSamples { needed, got: xs.len() });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite sample"));
    }
    Ok(())
}

fn check_m(m: Option<usize>) -> Result<()> {
    match m {
        Some(m) if m < 2 => Err(Error::invalid(format!("prediction size m = {m} must be at least 2"))),
        _ => Ok(()),
    }
}

fn diagnostics(xs: &[f64]) -> Diagnostics {
    Diagnostics {
        sample_mean: mean(xs),
        sample_std: sample_std(xs),
        truncation_threshold: None,
        bootstrap_b: None,
        prediction_m: None,
        conservative: false,
        degenerate: false,
    }
}

/// One-sided Student's t lower bound `X̂ − σ̂/√n · t_{1−δ,n−1}`.
pub fn lower_bound_ttest(xs: &[f64], delta: f64) -> Result<BoundResult> {
    ttest_bound(xs, delta, None)
}

/// As [`lower_bound_ttest`], but predicts the bound a sample of size `m` with
/// the same mean and spread would produce.
pub fn ttest_bound(xs: &[f64], delta: f64, m: Option<usize>) -> Result<BoundResult> {
    check_delta(delta)?;
    check_samples(xs, 2)?;
    check_m(m)?;
    let mut diag = diagnostics(xs);
    let size = m.unwrap_or(xs.len());
    diag.prediction_m = m;
    let t = student_t_quantile(1.0 - delta, (size - 1) as f64);
    let lower_bound = if diag.sample_std == 0.0 {
        diag.sample_mean
    } else {
        diag.sample_mean - diag.sample_std / (size as f64).sqrt() * t
    };
    Ok(BoundResult { lower_bound, method: BoundMethod::Tt, delta, n: xs.len(), diagnostics: diag })
}

/// Distribution-free bound for nonnegative samples with the default
/// held-out clip threshold.
pub fn lower_bound_ci(xs: &[f64], delta: f64) -> Result<BoundResult> {
    ci_bound(xs, delta, ClipThreshold::HeldOutQuantile, None)
}

/// Clip at `c`, then an empirical-Bernstein bound for `[0, c]` variables:
/// `Ȳ − √(2 V̂ ln(2/δ) / n) − 7c ln(2/δ) / (3(n−1))`.
pub fn ci_bound(xs: &[f64], delta: f64, clip: ClipThreshold, m: Option<usize>) -> Result<BoundResult> {
    check_delta(delta)?;
    check_samples(xs, 2)?;
    check_m(m)?;
    if xs.iter().any(|&x| x < 0.0) {
        return Err(Error::invalid("concentration bound needs nonnegative samples"));
    }
    let mut diag = diagnostics(xs);
    diag.prediction_m = m;
    let n = xs.len();
    let (c, rest, held_out): (f64, Vec<f64>, usize) = match clip {
        ClipThreshold::Fixed(c) => {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(format!("clip threshold {c} must be positive")));
            }
            (c, xs.to_vec(), 0)
        }
        ClipThreshold::HeldOutQuantile if n < 2 * HOLDOUT_STRIDE => {
            diag.conservative = true;
            (xs.iter().cloned().fold(0.0, f64::max), xs.to_vec(), 0)
        }
        ClipThreshold::HeldOutQuantile => {
            let mut held: Vec<f64> = xs.iter().step_by(HOLDOUT_STRIDE).copied().collect();
            held.sort_by(f64::total_cmp);
            let rest: Vec<f64> =
                xs.iter().enumerate().filter(|(i, _)| i % HOLDOUT_STRIDE != 0).map(|(_, &x)| x).collect();
            (quantile_sorted(&held, 0.95), rest, held.len())
        }
    };
    diag.truncation_threshold = Some(c);
    let clipped: Vec<f64> = rest.iter().map(|&x| x.min(c)).collect();
    let y_bar = mean(&clipped);
    let var = if clipped.len() > 1 { crate::numeric::sample_variance(&clipped) } else { 0.0 };
    let size = match m {
        Some(m) => m.saturating_sub(m.div_ceil(HOLDOUT_STRIDE) * usize::from(held_out > 0)).max(2),
        None => clipped.len(),
    } as f64;
    let log_term = (2.0 / delta).ln();
    let lower_bound = y_bar - (2.0 * var * log_term / size).sqrt() - 7.0 * c * log_term / (3.0 * (size - 1.0));
    Ok(BoundResult { lower_bound, method: BoundMethod::Ci, delta, n, diagnostics: diag })
}

/// Bias-corrected and accelerated bootstrap lower bound.
pub fn lower_bound_bca(xs: &[f64], delta: f64, b: usize, seed: u64) -> Result<BoundResult> {
    bca_bound(xs, delta, b, seed, None)
}

pub fn bca_bound(xs: &[f64], delta: f64, b: usize, seed: u64, m: Option<usize>) -> Result<BoundResult> {
    check_delta(delta)?;
    check_samples(xs, 3)?;
    check_m(m)?;
    if b < 1000 {
        return Err(Error::invalid(format!("bootstrap size {b} is below 1000")));
    }
    let mut diag = diagnostics(xs);
    diag.bootstrap_b = Some(b);
    diag.prediction_m = m;
    let n = xs.len();
    let theta_hat = diag.sample_mean;
    let mut boot = bootstrap_means(xs, b, seed);
    boot.sort_by(f64::total_cmp);
    if boot[0] == boot[b - 1] {
        diag.degenerate = true;
        return Ok(BoundResult { lower_bound: boot[0], method: BoundMethod::Bca, delta, n, diagnostics: diag });
    }
    let below = boot.partition_point(|&v| v < theta_hat);
    let p0 = (below as f64 / b as f64).clamp(0.5 / b as f64, 1.0 - 0.5 / b as f64);
    let z0 = normal_quantile(p0);

    let total = pairwise_sum(xs);
    let jack: Vec<f64> = xs.iter().map(|&x| (total - x) / (n - 1) as f64).collect();
    let jack_mean = mean(&jack);
    let (mut num, mut den) = (0.0, 0.0);
    for &j in &jack {
        let d = jack_mean - j;
        num += d * d * d;
        den += d * d;
    }
    let accel = if den > 0.0 { num / (6.0 * den.powf(1.5)) } else { 0.0 };

    let z_delta = normal_quantile(delta);
    let shifted = z0 + z_delta;
    let level = normal_cdf(z0 + shifted / (1.0 - accel * shifted));
    let mut lower_bound = quantile_sorted(&boot, level);
    if let Some(m) = m {
        lower_bound = theta_hat - (theta_hat - lower_bound) * (n as f64 / m as f64).sqrt();
    }
    Ok(BoundResult { lower_bound, method: BoundMethod::Bca, delta, n, diagnostics: diag })
}

fn bootstrap_means(xs: &[f64], b: usize, seed: u64) -> Vec<f64> {
    let n = xs.len();
    let chunks = b.div_ceil(BOOTSTRAP_CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let mut rng = SmallRng::seed_from_u64(derive_seed(seed, &[chunk as u64]));
            let pick = Uniform::new(0u32, n as u32).expect("nonempty sample");
            let count = BOOTSTRAP_CHUNK.min(b - chunk * BOOTSTRAP_CHUNK);
            (0..count)
                .map(|_| {
                    let mut s = 0.0;
                    for _ in 0..n {
                        s += xs[pick.sample(&mut rng) as usize];
                    }
                    s / n as f64
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Bound on the mean of `xs` by the configured method, optionally predicted
/// for a sample of size `m`.
pub fn bound(xs: &[f64], cfg: &BoundConfig, m: Option<usize>) -> Result<BoundResult> {
    match cfg.method {
        BoundMethod::Tt => ttest_bound(xs, cfg.delta, m),
        BoundMethod::Ci => ci_bound(xs, cfg.delta, cfg.clip, m),
        BoundMethod::Bca => bca_bound(xs, cfg.delta, cfg.bootstrap_b, cfg.seed, m),
    }
}

/// Lower bound on the value of `pi_e` from logged trajectories.
pub fn bound_policy(
    data: &Dataset,
    pi_e: &Policy,
    estimator: Estimator,
    disc: DiscountSpec,
    cfg: &BoundConfig,
    m: Option<usize>,
) -> Result<BoundResult> {
    let xs = per_trajectory_values(data, pi_e, estimator, disc)?;
    bound(&xs, cfg, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub delta: f64,
    pub lower_bound: f64,
}

/// Lower bound as a function of δ.
pub fn risk_table(xs: &[f64], deltas: &[f64], cfg: &BoundConfig) -> Result<Vec<RiskRow>> {
    deltas
        .iter()
        .map(|&delta| {
            let c = BoundConfig { delta, ..*cfg };
            Ok(RiskRow { delta, lower_bound: bound(xs, &c, None)?.lower_bound })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    Gamma { shape: f64, scale: f64 },
    PointMass { value: f64 },
}

impl DistSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            DistSpec::Gamma { shape, scale } => shape * scale,
            DistSpec::PointMass { value } => value,
        }
    }

    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        match *self {
            DistSpec::Gamma { shape, scale } => {
                let g = Gamma::new(shape, scale).map_err(|e| Error::invalid(e.to_string()))?;
                Ok((0..n).map(|_| g.sample(rng)).collect())
            }
            DistSpec::PointMass { value } => Ok(vec![value; n]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRateRow {
    pub n: usize,
    pub trials: usize,
    pub ci: f64,
    pub tt: f64,
    pub bca: f64,
}

/// Fraction of trials in which each method's bound exceeds the true mean.
pub fn error_rate_experiment(
    dist: DistSpec,
    n_grid: &[usize],
    trials: usize,
    delta: f64,
    bootstrap_b: usize,
    seed: u64,
) -> Result<Vec<ErrorRateRow>> {
    if trials < 1000 {
        return Err(Error::invalid(format!("{trials} trials; need at least 1000")));
    }
    check_delta(delta)?;
    let truth = dist.mean();
    n_grid
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let counts = (0..trials)
                .into_par_iter()
                .map(|trial| -> Result<[usize; 3]> {
                    let path = [ni as u64, trial as u64];
                    let mut rng = stream_rng(seed, &path);
                    let xs = dist.draw(n, &mut rng)?;
                    let ci = lower_bound_ci(&xs, delta)?.lower_bound;
                    let tt = lower_bound_ttest(&xs, delta)?.lower_bound;
                    let bca = lower_bound_bca(&xs, delta, bootstrap_b, derive_seed(seed, &[ni as u64, trial as u64, 1]))?
                        .lower_bound;
                    Ok([(ci > truth) as usize, (tt > truth) as usize, (bca > truth) as usize])
                })
                .try_reduce(|| [0; 3], |a, b| Ok([a[0] + b[0], a[1] + b[1], a[2] + b[2]]))?;
            let t = trials as f64;
            Ok(ErrorRateRow { n, trials, ci: counts[0] as f64 / t, tt: counts[1] as f64 / t, bca: counts[2] as f64 / t })
        })
        .collect()
}
