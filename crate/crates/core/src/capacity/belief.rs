use crate::error::{Error, Result};
use crate::pst::{build_mdp, Pst, RewardSpec};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Users whose hidden type never changes. States and actions are shared;
/// each type has its own dynamics and rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypedMdpFamily {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    pub initial_state: usize,
    pub prior: Vec<f64>,
    /// `transitions[θ][s][a][s′]`.
    pub transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `rewards[θ][s][a]`.
    pub rewards: Vec<Vec<Vec<f64>>>,
}

impl TypedMdpFamily {
    pub fn n_types(&self) -> usize {
        self.prior.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if self.prior.is_empty() || ns == 0 || na == 0 || self.horizon == 0 || self.initial_state >= ns {
            return Err(Error::invalid("family needs a type, a state, an action, a horizon and a valid start"));
        }
        if self.prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (self.prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("prior must be a distribution"));
        }
        if self.transitions.len() != self.n_types() || self.rewards.len() != self.n_types() {
            return Err(Error::invalid("one transition and reward table per type"));
        }
        for (t, r) in self.transitions.iter().zip(&self.rewards) {
            if t.len() != ns || r.len() != ns {
                return Err(Error::invalid("tables must cover every state"));
            }
            for (ts, rs) in t.iter().zip(r) {
                if ts.len() != na || rs.len() != na || rs.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("tables must cover every action with finite rewards"));
                }
                for row in ts {
                    if row.len() != ns || row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(Error::invalid("transition rows must be distributions"));
                    }
                }
            }
        }
        Ok(())
    }

    /// One type per θ over the nodes of a tree; actions are the
    /// recommendations followed by the null action.
    pub fn from_pst(pst: &Pst, thetas: &[f64], prior: Vec<f64>, reward: &RewardSpec, horizon: usize) -> Result<Self> {
        let models = thetas.iter().map(|&th| build_mdp(pst, th, reward, 0.0)).collect::<Result<Vec<_>>>()?;
        let n = pst.nodes().len();
        let na = pst.n_symbols() + 1;
        let transitions = models
            .iter()
            .map(|m| {
                (0..n)
                    .map(|x| {
                        (0..na)
                            .map(|a| {
                                let mut row = vec![0.0; n];
                                for (s, p) in m.symbol_probs(x, a).into_iter().enumerate() {
                                    row[m.next[x][s]] += p;
                                }
                                row
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let rewards = models.iter().map(|m| m.rewards.clone()).collect();
        let family = Self { n_states: n, n_actions: na, horizon, initial_state: 0, prior, transitions, rewards };
        family.validate()?;
        Ok(family)
    }

    fn evidence(&self, b: &[f64], s: usize, a: usize, s_next: usize) -> f64 {
        b.iter().zip(&self.transitions).map(|(p, t)| p * t[s][a][s_next]).sum()
    }

    fn belief_reward(&self, b: &[f64], s: usize, a: usize) -> f64 {
        b.iter().zip(&self.rewards).map(|(p, r)| p * r[s][a]).sum()
    }
}

pub fn belief_update(family: &TypedMdpFamily, b: &[f64], s: usize, a: usize, s_next: usize) -> Result<Vec<f64>> {
    let joint: Vec<f64> = b.iter().zip(&family.transitions).map(|(p, t)| p * t[s][a][s_next]).collect();
    let total: f64 = joint.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ImpossibleTransition);
    }
    Ok(joint.iter().map(|j| j / total).collect())
}

/// Per-POI presence indicators and peak limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySpec {
    /// `consumption[r][s][a]` ∈ {0, 1}.
    pub consumption: Vec<Vec<Vec<u8>>>,
    pub limits: Vec<f64>,
}

impl CapacitySpec {
    pub fn n_resources(&self) -> usize {
        self.limits.len()
    }

    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if self.limits.is_empty() || self.consumption.len() != self.limits.len() {
            return Err(Error::invalid("need at least one POI and one consumption table per limit"));
        }
        if self.limits.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid("limits must be positive"));
        }
        for table in &self.consumption {
            if table.len() != n_states || table.iter().any(|row| row.len() != n_actions || row.iter().any(|&c| c > 1)) {
                return Err(Error::invalid("consumption must be a 0/1 table over states and actions"));
            }
        }
        Ok(())
    }

    /// A user occupies POI `pois[r]` while the current node ends in that
    /// symbol, whatever is recommended.
    pub fn poi_presence(pst: &Pst, pois: &[usize], limits: Vec<f64>) -> Self {
        let na = pst.n_symbols() + 1;
        let consumption = pois
            .iter()
            .map(|&r| pst.nodes().iter().map(|node| vec![u8::from(node.suffix.last() == Some(&r)); na]).collect())
            .collect();
        Self { consumption, limits }
    }
}

/// `Σ_r λ_{t,r} C_r(s, a)` laid out as `[t][s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty(Vec<Vec<Vec<f64>>>);

impl Penalty {
    pub fn zero(family: &TypedMdpFamily) -> Self {
        Self(vec![vec![vec![0.0; family.n_actions]; family.n_states]; family.horizon])
    }

    /// `lambda[t][r]`.
    pub fn new(family: &TypedMdpFamily, caps: &CapacitySpec, lambda: &[Vec<f64>]) -> Self {
        let mut pen = Self::zero(family);
        for (t, lt) in lambda.iter().enumerate().take(family.horizon) {
            for (r, &l) in lt.iter().enumerate() {
                if l == 0.0 {
                    continue;
                }
                for s in 0..family.n_states {
                    for a in 0..family.n_actions {
                        if caps.consumption[r][s][a] == 1 {
                            pen.0[t][s][a] += l;
                        }
                    }
                }
            }
        }
        pen
    }

    fn at(&self, t: usize, s: usize, a: usize) -> f64 {
        self.0[t][s][a]
    }
}

/// Optimal finite-horizon policy per type and every policy's value on every
/// type, all under penalized rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSolutions {
    /// `policies[j][t][s]`.
    pub policies: Vec<Vec<Vec<usize>>>,
    /// `cross[i][j][t][s]` = value of `π*_j` on type `i`; `t` runs to the horizon.
    pub cross: Vec<Vec<Vec<Vec<f64>>>>,
}

impl TypeSolutions {
    /// `Q[b, π*_i] = Σ_j b_j V^{θ_j}_{π*_i}[t, s]`.
    pub fn q(&self, b: &[f64], i: usize, t: usize, s: usize) -> f64 {
        b.iter().enumerate().map(|(j, p)| p * self.cross[j][i][t][s]).sum()
    }

    /// Best single-type policy at `b`, ties to the lowest index.
    pub fn best_fallback(&self, b: &[f64], t: usize, s: usize) -> (usize, f64) {
        let mut best = (0, self.q(b, 0, t, s));
        for i in 1..self.policies.len() {
            let q = self.q(b, i, t, s);
            if q > best.1 {
                best = (i, q);
            }
        }
        best
    }
}

fn penalized_q(family: &TypedMdpFamily, pen: &Penalty, th: usize, next: &[f64], t: usize, s: usize, a: usize) -> f64 {
    let cont: f64 = family.transitions[th][s][a].iter().zip(next).map(|(p, v)| p * v).sum();
    family.rewards[th][s][a] - pen.at(t, s, a) + cont
}

pub fn type_policies_and_cross_values(family: &TypedMdpFamily, pen: &Penalty) -> TypeSolutions {
    let (h, ns, nt) = (family.horizon, family.n_states, family.n_types());
    let policies: Vec<Vec<Vec<usize>>> = (0..nt)
        .map(|th| {
            let mut pol = vec![vec![0; ns]; h];
            let mut v = vec![0.0; ns];
            for t in (0..h).rev() {
                let mut nv = vec![0.0; ns];
                for s in 0..ns {
                    let mut best = (0, penalized_q(family, pen, th, &v, t, s, 0));
                    for a in 1..family.n_actions {
                        let q = penalized_q(family, pen, th, &v, t, s, a);
                        if q > best.1 {
                            best = (a, q);
                        }
                    }
                    pol[t][s] = best.0;
                    nv[s] = best.1;
                }
                v = nv;
            }
            pol
        })
        .collect();
    let cross = (0..nt)
        .map(|i| {
            policies
                .iter()
                .map(|pol| {
                    let mut vals = vec![vec![0.0; ns]; h + 1];
                    for t in (0..h).rev() {
                        for s in 0..ns {
                            vals[t][s] = penalized_q(family, pen, i, &vals[t + 1], t, s, pol[t][s]);
                        }
                    }
                    vals
                })
                .collect()
        })
        .collect();
    TypeSolutions { policies, cross }
}

/// `min_i Σ_j b_j (V^{θ_j}_{π*_j} − V^{θ_j}_{π*_i})` at `(t, s)`, with the
/// minimizing index (lowest on ties).
pub fn regret(b: &[f64], sol: &TypeSolutions, t: usize, s: usize) -> (f64, usize) {
    let loss = |i: usize| -> f64 {
        b.iter().enumerate().map(|(j, p)| p * (sol.cross[j][j][t][s] - sol.cross[j][i][t][s]).max(0.0)).sum()
    };
    let mut best = (loss(0), 0);
    for i in 1..sol.policies.len() {
        let l = loss(i);
        if l < best.0 {
            best = (l, i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefSpaceConfig {
    /// Reach probability below which beliefs are heavily penalized.
    pub min_prob: f64,
    /// Shape of the threshold. Zero keeps every belief with positive regret.
    pub alpha: f64,
}

impl Default for BeliefSpaceConfig {
    fn default() -> Self {
        Self { min_prob: 0.01, alpha: 10.0 }
    }
}

impl BeliefSpaceConfig {
    pub fn threshold(&self, prob: f64, regret_b0: f64) -> f64 {
        if regret_b0 == 0.0 {
            return 0.0;
        }
        let (p, a) = (self.min_prob, self.alpha);
        ((-a * (prob - p)).exp() - (-a * (1.0 - p)).exp()) * regret_b0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefPoint {
    pub t: usize,
    pub s: usize,
    pub b: Vec<f64>,
    /// Largest probability of reaching this point along any action sequence
    /// through kept points.
    pub prob: f64,
    pub regret: f64,
}

pub(crate) type BeliefKey = (usize, usize, Vec<i64>);

pub(crate) fn belief_key(t: usize, s: usize, b: &[f64]) -> BeliefKey {
    (t, s, b.iter().map(|p| (p * 1e12).round() as i64).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSpace {
    pub points: Vec<BeliefPoint>,
    index: HashMap<BeliefKey, usize>,
}

impl BeliefSpace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lookup(&self, t: usize, s: usize, b: &[f64]) -> Option<usize> {
        self.index.get(&belief_key(t, s, b)).copied()
    }
}

/// Children of a point: `(a, s′, Pr(s′ | b, a), b′)` for every successor with
/// positive evidence.
fn children(family: &TypedMdpFamily, b: &[f64], s: usize) -> Vec<(usize, usize, f64, Vec<f64>)> {
    let mut out = Vec::new();
    for a in 0..family.n_actions {
        for s2 in 0..family.n_states {
            let pr = family.evidence(b, s, a, s2);
            if pr > 0.0 {
                if let Ok(b2) = belief_update(family, b, s, a, s2) {
                    out.push((a, s2, pr, b2));
                }
            }
        }
    }
    out
}

/// Breadth-first expansion from the prior, keeping beliefs whose regret
/// clears the probability-dependent threshold. Only kept points are expanded.
pub fn build_belief_space(family: &TypedMdpFamily, sol: &TypeSolutions, cfg: &BeliefSpaceConfig) -> BeliefSpace {
    let s0 = family.initial_state;
    let b0 = family.prior.clone();
    let r0 = regret(&b0, sol, 0, s0).0;
    let mut points = vec![BeliefPoint { t: 0, s: s0, b: b0.clone(), prob: 1.0, regret: r0 }];
    let mut index = HashMap::from([(belief_key(0, s0, &b0), 0)]);
    let mut frontier = vec![0];
    for t in 1..family.horizon {
        let mut candidates: Vec<BeliefPoint> = Vec::new();
        let mut seen: HashMap<BeliefKey, usize> = HashMap::new();
        for &pi in &frontier {
            let parent = points[pi].clone();
            for (_, s2, pr, b2) in children(family, &parent.b, parent.s) {
                let prob = parent.prob * pr;
                let key = belief_key(t, s2, &b2);
                match seen.get(&key) {
                    Some(&c) => candidates[c].prob = candidates[c].prob.max(prob),
                    None => {
                        seen.insert(key, candidates.len());
                        let reg = regret(&b2, sol, t, s2).0;
                        candidates.push(BeliefPoint { t, s: s2, b: b2, prob, regret: reg });
                    }
                }
            }
        }
        frontier.clear();
        for c in candidates {
            if c.regret > cfg.threshold(c.prob, r0) {
                index.insert(belief_key(t, c.s, &c.b), points.len());
                frontier.push(points.len());
                points.push(c);
            }
        }
    }
    BeliefSpace { points, index }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefPlan {
    /// Action at each point of the belief space, in the same order.
    pub actions: Vec<usize>,
    /// Penalized value at each point.
    pub values: Vec<f64>,
    /// Penalized value at the prior.
    pub value: f64,
    /// True expected reward of the closed-loop policy.
    pub expected_value: f64,
    /// `[t][r]` expected consumption.
    pub expected_consumption: Vec<Vec<f64>>,
}

/// Backward induction over the kept points. A successor outside the space
/// switches to the best single-type policy for the rest of the horizon.
/// The resulting policy is then evaluated exactly by propagating the joint
/// distribution of true type, state and planner memory forward.
pub fn bounded_belief_plan(family: &TypedMdpFamily, space: &BeliefSpace, sol: &TypeSolutions, pen: &Penalty, caps: Option<&CapacitySpec>) -> BeliefPlan {
    let h = family.horizon;
    let n = space.len();
    let mut values = vec![0.0; n];
    let mut actions = vec![0; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(space.points[i].t));
    for i in order {
        let pt = &space.points[i];
        let mut best: Option<(usize, f64)> = None;
        for a in 0..family.n_actions {
            let mut q = family.belief_reward(&pt.b, pt.s, a) - pen.at(pt.t, pt.s, a);
            if pt.t + 1 < h {
                for s2 in 0..family.n_states {
                    let pr = family.evidence(&pt.b, pt.s, a, s2);
                    if pr > 0.0 {
                        let Ok(b2) = belief_update(family, &pt.b, pt.s, a, s2) else { continue };
                        let v = match space.lookup(pt.t + 1, s2, &b2) {
                            Some(j) => values[j],
                            None => sol.best_fallback(&b2, pt.t + 1, s2).1,
                        };
                        q += pr * v;
                    }
                }
            }
            if best.is_none_or(|(_, bq)| q > bq) {
                best = Some((a, q));
            }
        }
        let (a, q) = best.unwrap_or((0, 0.0));
        actions[i] = a;
        values[i] = q;
    }
    let (expected_value, expected_consumption) = evaluate_plan(family, space, sol, &actions, caps);
    BeliefPlan { actions, value: values.first().copied().unwrap_or(0.0), values, expected_value, expected_consumption }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Memory {
    Point(usize),
    Fallback(usize),
}

fn evaluate_plan(family: &TypedMdpFamily, space: &BeliefSpace, sol: &TypeSolutions, actions: &[usize], caps: Option<&CapacitySpec>) -> (f64, Vec<Vec<f64>>) {
    let m = caps.map_or(0, CapacitySpec::n_resources);
    let mut consumption = vec![vec![0.0; m]; family.horizon];
    let mut value = 0.0;
    let mut mass: BTreeMap<(usize, usize, Memory), f64> = family
        .prior
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(th, &p)| ((th, family.initial_state, Memory::Point(0)), p))
        .collect();
    for t in 0..family.horizon {
        let mut next: BTreeMap<(usize, usize, Memory), f64> = BTreeMap::new();
        for (&(th, s, mem), &w) in &mass {
            let a = match mem {
                Memory::Point(i) => actions[i],
                Memory::Fallback(j) => sol.policies[j][t][s],
            };
            value += w * family.rewards[th][s][a];
            if let Some(c) = caps {
                for (r, table) in c.consumption.iter().enumerate() {
                    consumption[t][r] += w * f64::from(table[s][a]);
                }
            }
            if t + 1 == family.horizon {
                continue;
            }
            for (s2, &p) in family.transitions[th][s][a].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let mem2 = match mem {
                    Memory::Fallback(j) => Memory::Fallback(j),
                    Memory::Point(i) => {
                        let pt = &space.points[i];
                        match belief_update(family, &pt.b, s, a, s2) {
                            Ok(b2) => match space.lookup(t + 1, s2, &b2) {
                                Some(k) => Memory::Point(k),
                                None => Memory::Fallback(sol.best_fallback(&b2, t + 1, s2).0),
                            },
                            Err(_) => Memory::Fallback(0),
                        }
                    }
                };
                *next.entry((th, s2, mem2)).or_insert(0.0) += w * p;
            }
        }
        mass = next;
    }
    (value, consumption)
}

/// Exact expected reward and consumption of a policy that, each step,
/// samples a type from the current posterior and acts as that type's optimal
/// policy would. It never values information.
pub fn posterior_sampling_evaluation(family: &TypedMdpFamily, sol: &TypeSolutions, caps: Option<&CapacitySpec>) -> (f64, Vec<Vec<f64>>) {
    let m = caps.map_or(0, CapacitySpec::n_resources);
    let mut consumption = vec![vec![0.0; m]; family.horizon];
    let mut value = 0.0;
    // (true type, state, belief key) → (mass, belief).
    let mut mass: BTreeMap<(usize, usize, Vec<i64>), (f64, Vec<f64>)> = BTreeMap::new();
    for (th, &p) in family.prior.iter().enumerate() {
        if p > 0.0 {
            let key = belief_key(0, family.initial_state, &family.prior).2;
            mass.insert((th, family.initial_state, key), (p, family.prior.clone()));
        }
    }
    for t in 0..family.horizon {
        let mut next: BTreeMap<(usize, usize, Vec<i64>), (f64, Vec<f64>)> = BTreeMap::new();
        for ((th, s, _), (w, b)) in &mass {
            let (th, s) = (*th, *s);
            let mut act = vec![0.0; family.n_actions];
            for (j, pj) in b.iter().enumerate() {
                act[sol.policies[j][t][s]] += pj;
            }
            for (a, &pa) in act.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let wa = w * pa;
                value += wa * family.rewards[th][s][a];
                if let Some(c) = caps {
                    for (r, table) in c.consumption.iter().enumerate() {
                        consumption[t][r] += wa * f64::from(table[s][a]);
                    }
                }
                if t + 1 == family.horizon {
                    continue;
                }
                for (s2, &p) in family.transitions[th][s][a].iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let Ok(b2) = belief_update(family, b, s, a, s2) else { continue };
                    let key = belief_key(t + 1, s2, &b2).2;
                    next.entry((th, s2, key)).or_insert((0.0, b2)).0 += wa * p;
                }
            }
        }
        mass = next;
    }
    (value, consumption)
}
