//! Trajectories, datasets, returns and the CTR / LTV click metrics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::borrow::Cow;
use std::io::BufRead;

/// Default cap on the number of visits per user.
pub const DEFAULT_MAX_LEN: usize = 20;

/// An observed user state: either a discrete id or a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum State {
    Discrete(usize),
    Features(Vec<f64>),
}

impl State {
    /// Feature view of the state. A discrete id is the one-dimensional
    /// feature `[id]`.
    pub fn features(&self) -> Cow<'_, [f64]> {
        match self {
            State::Discrete(s) => Cow::Owned(vec![*s as f64]),
            State::Features(f) => Cow::Borrowed(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(rename = "s")]
    pub state: State,
    #[serde(rename = "a")]
    pub action: usize,
    #[serde(rename = "r")]
    pub reward: f64,
    /// Probability the behavior policy gave to `action` when it was logged.
    #[serde(rename = "bp")]
    pub behavior_prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTrajectory {
    user_id: String,
    steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    behavior_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    timestamp: Option<f64>,
}

/// One user's visit history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    user_id: String,
    steps: Vec<Step>,
    #[serde(skip_serializing_if = "Option::is_none")]
    behavior_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<f64>,
}

impl Trajectory {
    pub fn new(user_id: impl Into<String>, steps: Vec<Step>) -> Result<Self> {
        Self::with_max_len(user_id, steps, DEFAULT_MAX_LEN)
    }

    pub fn with_max_len(user_id: impl Into<String>, steps: Vec<Step>, max_len: usize) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::invalid("trajectory has no steps"));
        }
        if steps.len() > max_len {
            return Err(Error::invalid(format!(
                "trajectory has {} steps, cap is {max_len}",
                steps.len()
            )));
        }
        for (t, step) in steps.iter().enumerate() {
            if !(step.reward.is_finite() && step.reward >= 0.0) {
                return Err(Error::invalid(format!("step {t}: reward {} is not a finite value >= 0", step.reward)));
            }
            if !(step.behavior_prob > 0.0 && step.behavior_prob <= 1.0) {
                return Err(Error::invalid(format!(
                    "step {t}: behavior probability {} is outside (0, 1]",
                    step.behavior_prob
                )));
            }
            if let State::Features(f) = &step.state {
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid(format!("step {t}: non-finite feature")));
                }
            }
        }
        Ok(Self { user_id: user_id.into(), steps, behavior_id: None, timestamp: None })
    }

    pub fn with_behavior_id(mut self, id: impl Into<String>) -> Self {
        self.behavior_id = Some(id.into());
        self
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn behavior_id(&self) -> Option<&str> {
        self.behavior_id.as_deref()
    }

    pub fn timestamp(&self) -> Option<f64> {
        self.timestamp
    }

    /// Number of steps whose reward is exactly one.
    pub fn clicks(&self) -> usize {
        self.steps.iter().filter(|s| s.reward == 1.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountSpec {
    gamma: f64,
}

impl DiscountSpec {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::invalid(format!("discount {gamma} is outside [0, 1]")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn undiscounted() -> Self {
        Self { gamma: 1.0 }
    }
}

/// `Σ_t γ^(t-1) r_t` over the trajectory.
pub fn discounted_return(traj: &Trajectory, disc: DiscountSpec) -> f64 {
    let mut scale = 1.0;
    let mut total = 0.0;
    for step in traj.steps() {
        total += scale * step.reward;
        scale *= disc.gamma();
    }
    total
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        Self { trajectories }
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn n(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn push(&mut self, traj: Trajectory) {
        self.trajectories.push(traj);
    }

    pub fn extend(&mut self, other: Dataset) {
        self.trajectories.extend(other.trajectories);
    }

    pub fn total_visits(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn total_clicks(&self) -> usize {
        self.trajectories.iter().map(Trajectory::clicks).sum()
    }

    /// Consecutive sub-dataset `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        Dataset::new(self.trajectories[start..end].to_vec())
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.is_empty() {
            Err(Error::EmptyData)
        } else {
            Ok(())
        }
    }

    /// Parses line-delimited JSON, one trajectory per line. Blank lines are
    /// skipped; errors carry the 1-based line number.
    pub fn read_jsonl<R: BufRead>(reader: R, max_len: usize) -> Result<Dataset> {
        let mut out = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawTrajectory = serde_json::from_str(&line)
                .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            let mut traj = Trajectory::with_max_len(raw.user_id, raw.steps, max_len)
                .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
            traj.behavior_id = raw.behavior_id;
            traj.timestamp = raw.timestamp;
            out.push(traj);
        }
        Ok(Dataset::new(out))
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for t in &self.trajectories {
            s.push_str(&serde_json::to_string(t).expect("trajectory serializes"));
            s.push('\n');
        }
        s
    }
}

/// Click-through rate in percent: clicks per visit.
pub fn ctr(data: &Dataset) -> Result<f64> {
    let visits = data.total_visits();
    if visits == 0 {
        return Err(Error::EmptyData);
    }
    Ok(100.0 * data.total_clicks() as f64 / visits as f64)
}

/// Life-time value in percent: clicks per visitor.
pub fn ltv(data: &Dataset) -> Result<f64> {
    data.require_nonempty()?;
    Ok(100.0 * data.total_clicks() as f64 / data.n() as f64)
}
