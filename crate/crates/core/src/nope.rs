//! Evaluation of a fixed policy when the environment drifts: the stream of
//! per-episode estimates is treated as a time series and forecast one step
//! ahead.

use crate::error::{Error, Result};
use crate::numeric::{aicc, mean, pairwise_sum, sample_variance, student_t_cdf};
use crate::ope::{estimates, wis_from, Estimator};
use crate::policy::Policy;
use crate::traj::{Dataset, DiscountSpec};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAX_P: usize = 5;
pub const MAX_D: usize = 1;
pub const MIN_FORECAST_LEN: usize = 10;
/// First index scored by every candidate, so all AICc values share one sample.
const FIRST_SCORED: usize = MAX_P + MAX_D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "width")]
pub enum Binning {
    /// Consecutive runs of this many trajectories, in dataset order.
    Episodes(usize),
    /// Fixed-width windows over trajectory timestamps; empty windows are skipped.
    Time(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeSeries {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub binning: Binning,
}

impl OpeSeries {
    /// Series indexed `0..n`.
    pub fn from_values(y: Vec<f64>) -> Self {
        let x = (0..y.len()).map(|i| i as f64).collect();
        Self { x, y, binning: Binning::Episodes(1) }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acf {
    pub lag: usize,
    pub value: f64,
    /// Half-width of the ±1.96/√n white-noise band.
    pub band: f64,
}

impl Acf {
    pub fn outside_band(&self) -> bool {
        self.value.abs() > self.band
    }
}

pub fn acf(y: &[f64], h: usize) -> Result<Acf> {
    let n = y.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if h >= n {
        return Err(Error::invalid(format!("lag {h} needs a series longer than {n}")));
    }
    let mu = mean(y);
    let dev: Vec<f64> = y.iter().map(|v| v - mu).collect();
    let denom = pairwise_sum(&dev.iter().map(|d| d * d).collect::<Vec<_>>());
    if denom == 0.0 {
        return Err(Error::ConstantSeries);
    }
    let value = if h == 0 {
        1.0
    } else {
        pairwise_sum(&(0..n - h).map(|t| dev[t + h] * dev[t]).collect::<Vec<_>>()) / denom
    };
    Ok(Acf { lag: h, value, band: 1.96 / (n as f64).sqrt() })
}

/// ACF at lags `0..=max_lag` (clipped to the series length).
pub fn acf_profile(y: &[f64], max_lag: usize) -> Result<Vec<Acf>> {
    (0..=max_lag.min(y.len().saturating_sub(1))).map(|h| acf(y, h)).collect()
}

fn bin_value(est: &[crate::ope::IsEstimate], estimator: Estimator) -> Result<f64> {
    match estimator {
        Estimator::Wis => wis_from(est),
        _ => Ok(mean(&est.iter().map(|e| e.value).collect::<Vec<_>>())),
    }
}

/// Undiscounted estimates of `pi_e` averaged within consecutive bins.
pub fn bin_series(data: &Dataset, pi_e: &Policy, binning: Binning, estimator: Estimator) -> Result<OpeSeries> {
    data.require_nonempty()?;
    let est = estimates(data, pi_e, estimator, DiscountSpec::undiscounted())?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    match binning {
        Binning::Episodes(width) => {
            if width == 0 {
                return Err(Error::invalid("bin width must be positive"));
            }
            for (i, chunk) in est.chunks(width).enumerate() {
                x.push(i as f64);
                y.push(bin_value(chunk, estimator)?);
            }
        }
        Binning::Time(width) => {
            if !(width.is_finite() && width > 0.0) {
                return Err(Error::invalid("bin width must be positive"));
            }
            let times: Vec<f64> = data
                .trajectories()
                .iter()
                .map(|t| t.timestamp().ok_or_else(|| Error::invalid(format!("trajectory {} has no timestamp", t.user_id()))))
                .collect::<Result<_>>()?;
            let t0 = times.iter().copied().fold(f64::INFINITY, f64::min);
            let mut keyed: Vec<(u64, usize)> =
                times.iter().enumerate().map(|(i, &t)| (((t - t0) / width).floor() as u64, i)).collect();
            keyed.sort();
            for group in keyed.chunk_by(|a, b| a.0 == b.0) {
                let members: Vec<_> = group.iter().map(|&(_, i)| est[i]).collect();
                x.push(group[0].0 as f64);
                y.push(bin_value(&members, estimator)?);
            }
        }
    }
    Ok(OpeSeries { x, y, binning })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub p: usize,
    pub d: usize,
    /// AR coefficients on lags `1..=p` of the differenced series.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub sigma2: f64,
    pub aicc: f64,
    /// One-step-ahead prediction for the time after the last observation.
    pub forecast: f64,
}

fn difference(y: &[f64], d: usize) -> Vec<f64> {
    (0..d).fold(y.to_vec(), |z, _| z.windows(2).map(|w| w[1] - w[0]).collect())
}

fn fit_order(y: &[f64], p: usize, d: usize, scale_floor: f64) -> Option<ForecastModel> {
    let n = y.len();
    let z = difference(y, d);
    // Level index t corresponds to differenced index t - d.
    let rows: Vec<usize> = (FIRST_SCORED..n).map(|t| t - d).collect();
    let m = rows.len();
    let design = DMatrix::from_fn(m, p + 1, |r, c| if c == 0 { 1.0 } else { z[rows[r] - c] });
    let target = DVector::from_iterator(m, rows.iter().map(|&t| z[t]));
    let beta = design.clone().svd(true, true).solve(&target, 1e-12).ok()?;
    if beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let resid = &target - &design * &beta;
    let sse = pairwise_sum(&resid.iter().map(|r| r * r).collect::<Vec<_>>());
    let sigma2 = (sse / m as f64).max(scale_floor);
    let loglik = -0.5 * m as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let score = aicc(loglik, p + 2, m).ok()?;
    let zn = z.len();
    let next_z = beta[0] + (1..=p).map(|i| beta[i] * z[zn - i]).sum::<f64>();
    let forecast = if d == 0 { next_z } else { y[n - 1] + next_z };
    Some(ForecastModel {
        p,
        d,
        coefficients: beta.iter().skip(1).copied().collect(),
        intercept: beta[0],
        sigma2,
        aicc: score,
        forecast,
    })
}

/// Autoregressive-integrated model chosen by AICc over `p ≤ 5`, `d ≤ 1`.
/// Every candidate is scored on the same observations, and ties go to the
/// smaller `(p, d)`.
pub fn fit_forecast(y: &[f64]) -> Result<ForecastModel> {
    if y.len() < MIN_FORECAST_LEN {
        return Err(Error::TooFewSamples { needed: MIN_FORECAST_LEN, got: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateSeries("non-finite observation".into()));
    }
    // Keeps exact fits comparable instead of sending the likelihood to infinity.
    let floor = 1e-24 * (1.0 + mean(&y.iter().map(|v| v * v).collect::<Vec<_>>()));
    let grid: Vec<(usize, usize)> = (0..=MAX_P).flat_map(|p| (0..=MAX_D).map(move |d| (p, d))).collect();
    let fits: Vec<Option<ForecastModel>> = grid.par_iter().map(|&(p, d)| fit_order(y, p, d, floor)).collect();
    fits.into_iter()
        .flatten()
        .reduce(|best, m| if m.aicc < best.aicc { m } else { best })
        .ok_or_else(|| Error::DegenerateSeries("no candidate order could be fitted".into()))
}

/// Forecast of the next-episode value from per-episode estimates.
pub fn tsp_predict(data: &Dataset, pi_e: &Policy, estimator: Estimator) -> Result<f64> {
    let series = bin_series(data, pi_e, Binning::Episodes(1), estimator)?;
    Ok(fit_forecast(&series.y)?.forecast)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingStep {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub tsp: f64,
    pub standard: f64,
    /// The forecaster had too little history and the mean stood in.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingReport {
    pub steps: Vec<RollingStep>,
    pub rmse_tsp: Option<f64>,
    pub rmse_standard: Option<f64>,
    pub next_tsp: f64,
    pub next_standard: f64,
    pub next_fallback: bool,
}

fn predict_both(history: &[f64]) -> (f64, f64, bool) {
    let standard = mean(history);
    match fit_forecast(history) {
        Ok(m) => (m.forecast, standard, false),
        Err(_) => (standard, standard, true),
    }
}

fn rmse(errors: impl Iterator<Item = f64>) -> Option<f64> {
    let sq: Vec<f64> = errors.map(|e| e * e).collect();
    (!sq.is_empty()).then(|| mean(&sq).sqrt())
}

/// Predicts every point from the points before it, with the forecaster and
/// with the running mean.
pub fn rolling_compare_series(series: &OpeSeries) -> Result<RollingReport> {
    if series.is_empty() {
        return Err(Error::EmptyData);
    }
    let y = &series.y;
    let steps: Vec<RollingStep> = (1..y.len())
        .map(|i| {
            let (tsp, standard, fallback) = predict_both(&y[..i]);
            RollingStep { index: i, x: series.x[i], y: y[i], tsp, standard, fallback }
        })
        .collect();
    let (next_tsp, next_standard, next_fallback) = predict_both(y);
    Ok(RollingReport {
        rmse_tsp: rmse(steps.iter().map(|s| s.tsp - s.y)),
        rmse_standard: rmse(steps.iter().map(|s| s.standard - s.y)),
        steps,
        next_tsp,
        next_standard,
        next_fallback,
    })
}

pub fn rolling_compare(data: &Dataset, pi_e: &Policy, binning: Binning, estimator: Estimator) -> Result<RollingReport> {
    rolling_compare_series(&bin_series(data, pi_e, binning, estimator)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalvesTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided Welch test of equal means between the first and second half.
pub fn halves_test(y: &[f64]) -> Result<HalvesTest> {
    if y.len() < 4 {
        return Err(Error::TooFewSamples { needed: 4, got: y.len() });
    }
    let (a, b) = y.split_at(y.len() / 2);
    let (va, vb) = (sample_variance(a) / a.len() as f64, sample_variance(b) / b.len() as f64);
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(Error::ConstantSeries);
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    let p_value = 2.0 * student_t_cdf(-t.abs(), df);
    Ok(HalvesTest { t, df, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::stream_rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream_rng(seed, &[]);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn alternating_series_lag_one() {
        let y: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        // Seven lagged products of -1 over a denominator of 8.
        assert!((acf(&y, 1).unwrap().value + 7.0 / 8.0).abs() < 1e-15);
        assert_eq!(acf(&y, 0).unwrap().value, 1.0);
    }

    #[test]
    fn constant_series_acf_is_flagged() {
        assert!(matches!(acf(&[2.0; 5], 1), Err(Error::ConstantSeries)));
    }

    #[test]
    fn white_noise_stays_in_band() {
        let y = noise(500, 4);
        let inside = (1..=20).filter(|&h| !acf(&y, h).unwrap().outside_band()).count();
        assert!(inside >= 18, "{inside}");
    }

    #[test]
    fn constant_forecast() {
        let m = fit_forecast(&[3.25; 30]).unwrap();
        assert_eq!((m.p, m.d), (0, 0));
        assert!((m.forecast - 3.25).abs() < 1e-12);
    }

    #[test]
    fn ramp_forecast_extends_slope() {
        let y: Vec<f64> = (0..40).map(|i| 2.0 + 0.75 * i as f64).collect();
        let m = fit_forecast(&y).unwrap();
        assert_eq!(m.d, 1);
        assert!((m.forecast - (2.0 + 0.75 * 40.0)).abs() < 1e-9, "{m:?}");
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let e = noise(2000, 9);
        let mut y = vec![0.0; 2000];
        for t in 1..2000 {
            y[t] = 0.8 * y[t - 1] + e[t];
        }
        let m = fit_forecast(&y).unwrap();
        assert_eq!(m.d, 0);
        assert!((m.coefficients[0] - 0.8).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn short_series_falls_back_to_mean() {
        let r = rolling_compare_series(&OpeSeries::from_values(vec![0.4])).unwrap();
        assert!(r.steps.is_empty() && r.rmse_tsp.is_none());
        assert_eq!(r.next_standard, 0.4);
        assert_eq!(r.next_tsp, 0.4);
        assert!(r.next_fallback);
    }

    #[test]
    fn halves_test_detects_shift() {
        let mut y = noise(200, 1);
        for v in &mut y[100..] {
            *v += 3.0;
        }
        assert!(halves_test(&y).unwrap().p_value < 1e-20);
        assert!(halves_test(&noise(200, 2)).unwrap().p_value > 1e-3);
    }

    proptest! {
        #[test]
        fn acf_lag_zero_is_one(y in proptest::collection::vec(-5.0f64..5.0, 2..40)) {
            if let Ok(a) = acf(&y, 0) {
                prop_assert_eq!(a.value, 1.0);
            }
        }

        #[test]
        fn standard_is_running_mean(y in proptest::collection::vec(0.0f64..1.0, 1..25)) {
            let r = rolling_compare_series(&OpeSeries::from_values(y.clone())).unwrap();
            for s in &r.steps {
                prop_assert_eq!(s.standard, mean(&y[..s.index]));
                prop_assert_eq!(s.fallback, s.index < MIN_FORECAST_LEN);
            }
        }

        #[test]
        fn forecast_is_deterministic(seed in 0u64..1000) {
            let y = noise(60, seed);
            let a = fit_forecast(&y).unwrap();
            prop_assert_eq!(a.clone(), fit_forecast(&y).unwrap());
            prop_assert!(a.p <= MAX_P && a.d <= MAX_D);
            prop_assert!(a.coefficients.iter().all(|c| c.is_finite()));
        }
    }
}
