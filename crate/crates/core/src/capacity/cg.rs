use super::belief::{
    build_belief_space, bounded_belief_plan, posterior_sampling_evaluation, type_policies_and_cross_values, BeliefSpaceConfig,
    CapacitySpec, Penalty, TypedMdpFamily,
};
use super::simplex::{solve, Constraint, Lp, Sense};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    /// Artificial column that consumes nothing and earns nothing.
    Null,
    BoundedBelief,
    PosteriorSampling,
    Enumerated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub kind: ColumnKind,
    pub value: f64,
    /// `[t][r]`.
    pub consumption: Vec<Vec<f64>>,
    pub belief_points: usize,
}

impl Column {
    pub fn null(horizon: usize, n_resources: usize) -> Self {
        Self { kind: ColumnKind::Null, value: 0.0, consumption: vec![vec![0.0; n_resources]; horizon], belief_points: 0 }
    }

    fn priced(&self, lambda: &[Vec<f64>]) -> f64 {
        let cost: f64 = self.consumption.iter().zip(lambda).flat_map(|(c, l)| c.iter().zip(l).map(|(c, l)| c * l)).sum();
        self.value - cost
    }
}

/// Columns per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSet {
    pub columns: Vec<Vec<Column>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterSolution {
    /// `mix[i][j]` is the weight agent `i` puts on its column `j`.
    pub mix: Vec<Vec<f64>>,
    /// Capacity duals `[t][r]`.
    pub lambda: Vec<Vec<f64>>,
    /// Duals of the per-agent convexity rows.
    pub agent_duals: Vec<f64>,
    pub objective: f64,
    /// Expected load `[t][r]` under the mix.
    pub load: Vec<Vec<f64>>,
}

/// `max Σ x_ij E[V_ij]` subject to `Σ x_ij E[C_ij,t,r] ≤ L_r` for every
/// `(t, r)` and `Σ_j x_ij = 1` for every agent.
pub fn master_lp(columns: &ColumnSet, caps: &CapacitySpec, horizon: usize) -> Result<MasterSolution> {
    let m = caps.n_resources();
    if columns.columns.is_empty() || columns.columns.iter().any(Vec::is_empty) {
        return Err(Error::invalid("every agent needs at least one column"));
    }
    if columns.columns.iter().flatten().any(|c| c.consumption.len() != horizon || c.consumption.iter().any(|r| r.len() != m)) {
        return Err(Error::invalid("column consumption must be horizon × resources"));
    }
    let flat: Vec<(usize, &Column)> = columns.columns.iter().enumerate().flat_map(|(i, cs)| cs.iter().map(move |c| (i, c))).collect();
    let mut constraints = Vec::with_capacity(horizon * m + columns.columns.len());
    for t in 0..horizon {
        for r in 0..m {
            constraints.push(Constraint { coeffs: flat.iter().map(|(_, c)| c.consumption[t][r]).collect(), sense: Sense::Le, rhs: caps.limits[r] });
        }
    }
    for agent in 0..columns.columns.len() {
        constraints.push(Constraint { coeffs: flat.iter().map(|(i, _)| f64::from(u8::from(*i == agent))).collect(), sense: Sense::Eq, rhs: 1.0 });
    }
    let lp = Lp { objective: flat.iter().map(|(_, c)| c.value).collect(), constraints };
    let sol = solve(&lp)?;
    let mut mix: Vec<Vec<f64>> = columns.columns.iter().map(|cs| vec![0.0; cs.len()]).collect();
    let mut load = vec![vec![0.0; m]; horizon];
    let mut k = 0;
    for (i, cs) in columns.columns.iter().enumerate() {
        for (j, c) in cs.iter().enumerate() {
            mix[i][j] = sol.x[k];
            for t in 0..horizon {
                for r in 0..m {
                    load[t][r] += sol.x[k] * c.consumption[t][r];
                }
            }
            k += 1;
        }
    }
    let lambda = (0..horizon).map(|t| (0..m).map(|r| sol.duals[t * m + r].max(0.0)).collect()).collect();
    let agent_duals = sol.duals[horizon * m..].to_vec();
    Ok(MasterSolution { mix, lambda, agent_duals, objective: sol.objective, load })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub belief: BeliefSpaceConfig,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 200, belief: BeliefSpaceConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgSolution {
    pub columns: ColumnSet,
    pub master: MasterSolution,
    /// Master objective after every solve, starting with the null columns.
    pub objectives: Vec<f64>,
    pub pricing_rounds: usize,
}

/// Best bounded-belief column for one agent under prices `lambda`.
pub fn price_column(family: &TypedMdpFamily, caps: &CapacitySpec, lambda: &[Vec<f64>], cfg: &BeliefSpaceConfig) -> Column {
    let pen = Penalty::new(family, caps, lambda);
    let sol = type_policies_and_cross_values(family, &pen);
    let space = build_belief_space(family, &sol, cfg);
    let plan = bounded_belief_plan(family, &space, &sol, &pen, Some(caps));
    Column { kind: ColumnKind::BoundedBelief, value: plan.expected_value, consumption: plan.expected_consumption, belief_points: space.len() }
}

/// Column of the posterior-sampling baseline, planned without prices.
pub fn posterior_sampling_column(family: &TypedMdpFamily, caps: &CapacitySpec) -> Column {
    let sol = type_policies_and_cross_values(family, &Penalty::zero(family));
    let (value, consumption) = posterior_sampling_evaluation(family, &sol, Some(caps));
    Column { kind: ColumnKind::PosteriorSampling, value, consumption, belief_points: 0 }
}

fn check_agents(families: &[TypedMdpFamily], caps: &CapacitySpec) -> Result<usize> {
    let first = families.first().ok_or_else(|| Error::invalid("need at least one agent"))?;
    for f in families {
        f.validate()?;
        if (f.n_states, f.n_actions, f.horizon) != (first.n_states, first.n_actions, first.horizon) {
            return Err(Error::invalid("agents must share states, actions and horizon"));
        }
    }
    caps.validate(first.n_states, first.n_actions)?;
    Ok(first.horizon)
}

/// Alternates per-agent pricing and the master LP until no column prices
/// out above `tolerance` or the duals stop moving.
pub fn column_generation(families: &[TypedMdpFamily], caps: &CapacitySpec, cfg: &CgConfig) -> Result<CgSolution> {
    let h = check_agents(families, caps)?;
    let m = caps.n_resources();
    let mut columns = ColumnSet { columns: families.iter().map(|_| vec![Column::null(h, m)]).collect() };
    let mut master = master_lp(&columns, caps, h)?;
    let mut objectives = vec![master.objective];
    for round in 1..=cfg.max_iterations {
        let priced: Vec<Column> = families.par_iter().map(|f| price_column(f, caps, &master.lambda, &cfg.belief)).collect();
        let mut added = false;
        for (i, col) in priced.into_iter().enumerate() {
            if col.priced(&master.lambda) - master.agent_duals[i] > cfg.tolerance {
                columns.columns[i].push(col);
                added = true;
            }
        }
        if !added {
            return Ok(CgSolution { columns, master, objectives, pricing_rounds: round });
        }
        let next = master_lp(&columns, caps, h)?;
        objectives.push(next.objective);
        let shift = next.lambda.iter().flatten().zip(master.lambda.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        master = next;
        if shift <= 1e-8 {
            return Ok(CgSolution { columns, master, objectives, pricing_rounds: round });
        }
    }
    Err(Error::IterationCap(cfg.max_iterations))
}

/// Master LP over the null column and the posterior-sampling column of each
/// agent.
pub fn posterior_sampling_baseline(families: &[TypedMdpFamily], caps: &CapacitySpec) -> Result<MasterSolution> {
    let h = check_agents(families, caps)?;
    let columns = ColumnSet {
        columns: families.iter().map(|f| vec![Column::null(h, caps.n_resources()), posterior_sampling_column(f, caps)]).collect(),
    };
    master_lp(&columns, caps, h)
}
