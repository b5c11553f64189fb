use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `max cᵀx` subject to the constraints and `x ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lp {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One shadow price per constraint, in the original orientation:
    /// nonnegative on `≤` rows, nonpositive on `≥` rows.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in &mut self.rows[r] {
            *v /= p;
        }
        self.rhs[r] /= p;
        let (prow, prhs) = (self.rows[r].clone(), self.rhs[r]);
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, pv) in self.rows[i].iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                self.rhs[i] -= f * prhs;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Reduced costs `c_j − c_Bᵀ B⁻¹ A_j` for the given costs.
    fn reduced(&self, cost: &[f64]) -> Vec<f64> {
        let mut r = cost.to_vec();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (rj, a) in r.iter_mut().zip(&self.rows[i]) {
                    *rj -= cb * a;
                }
            }
        }
        r
    }

    /// Bland's rule: lowest-index improving column, lowest-index leaving
    /// variable among ratio ties.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<()> {
        loop {
            let r = self.reduced(cost);
            let Some(c) = (0..r.len()).find(|&j| allowed[j] && r[j] > EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > EPS {
                    let ratio = self.rhs[i] / a;
                    let better = match leave {
                        None => true,
                        Some((li, lr)) => ratio < lr - EPS || (ratio <= lr + EPS && self.basis[i] < self.basis[li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(row, c);
        }
    }
}

/// Dense two-phase primal simplex.
pub fn solve(lp: &Lp) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    if lp.constraints.iter().any(|c| c.coeffs.len() != n || !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("constraint width does not match the objective"));
    }
    // Flip rows so every right-hand side is nonnegative.
    let mut flipped = vec![false; m];
    let mut senses = Vec::with_capacity(m);
    for (i, c) in lp.constraints.iter().enumerate() {
        flipped[i] = c.rhs < 0.0;
        senses.push(match (c.sense, flipped[i]) {
            (Sense::Le, true) => Sense::Ge,
            (Sense::Ge, true) => Sense::Le,
            (s, _) => s,
        });
    }
    let n_slack = senses.iter().filter(|s| **s != Sense::Eq).count();
    let n_art = senses.iter().filter(|s| **s != Sense::Le).count();
    let width = n + n_slack + n_art;
    let mut rows = vec![vec![0.0; width]; m];
    let mut rhs = vec![0.0; m];
    let mut basis = vec![0; m];
    // Column holding B⁻¹ e_i at the start, used to read the duals.
    let mut unit_col = vec![0; m];
    let (mut next_slack, mut next_art) = (n, n + n_slack);
    for (i, c) in lp.constraints.iter().enumerate() {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for (j, v) in c.coeffs.iter().enumerate() {
            rows[i][j] = sign * v;
        }
        rhs[i] = sign * c.rhs;
        match senses[i] {
            Sense::Le => {
                rows[i][next_slack] = 1.0;
                basis[i] = next_slack;
                unit_col[i] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                rows[i][next_slack] = -1.0;
                next_slack += 1;
                rows[i][next_art] = 1.0;
                basis[i] = next_art;
                unit_col[i] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                rows[i][next_art] = 1.0;
                basis[i] = next_art;
                unit_col[i] = next_art;
                next_art += 1;
            }
        }
    }
    let mut tab = Tableau { rows, rhs, basis, pivots: 0 };
    let is_art = |j: usize| j >= n + n_slack;

    if n_art > 0 {
        let phase1: Vec<f64> = (0..width).map(|j| if is_art(j) { -1.0 } else { 0.0 }).collect();
        tab.optimize(&phase1, &vec![true; width])?;
        let infeasibility: f64 = tab.basis.iter().zip(&tab.rhs).filter(|(b, _)| is_art(**b)).map(|(_, r)| r).sum();
        if infeasibility > 1e-8 {
            return Err(Error::Infeasible);
        }
        for i in 0..m {
            if is_art(tab.basis[i]) {
                if let Some(c) = (0..n + n_slack).find(|&j| tab.rows[i][j].abs() > EPS) {
                    tab.pivot(i, c);
                }
            }
        }
    }

    let mut cost = vec![0.0; width];
    cost[..n].copy_from_slice(&lp.objective);
    let allowed: Vec<bool> = (0..width).map(|j| !is_art(j)).collect();
    tab.optimize(&cost, &allowed)?;

    let mut x = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            x[b] = tab.rhs[i];
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let reduced = tab.reduced(&cost);
    let duals = (0..m)
        .map(|i| {
            let y = -reduced[unit_col[i]];
            if flipped[i] { -y } else { y }
        })
        .collect();
    Ok(LpSolution { x, objective, duals, pivots: tab.pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn le(coeffs: Vec<f64>, rhs: f64) -> Constraint {
        Constraint { coeffs, sense: Sense::Le, rhs }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36, duals (0, 3/2, 1).
        let lp = Lp {
            objective: vec![3.0, 5.0],
            constraints: vec![le(vec![1.0, 0.0], 4.0), le(vec![0.0, 2.0], 12.0), le(vec![3.0, 2.0], 18.0)],
        };
        let s = solve(&lp).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective - 36.0).abs() < 1e-12);
        for (d, e) in s.duals.iter().zip([0.0, 1.5, 1.0]) {
            assert!((d - e).abs() < 1e-12, "{:?}", s.duals);
        }
    }

    #[test]
    fn equality_and_ge_rows() {
        // max x + y, x + y = 1, x ≥ 0.25, y ≤ 0.5 → objective 1.
        let lp = Lp {
            objective: vec![1.0, 2.0],
            constraints: vec![
                Constraint { coeffs: vec![1.0, 1.0], sense: Sense::Eq, rhs: 1.0 },
                Constraint { coeffs: vec![1.0, 0.0], sense: Sense::Ge, rhs: 0.25 },
                le(vec![0.0, 1.0], 0.5),
            ],
        };
        let s = solve(&lp).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-12 && (s.x[1] - 0.5).abs() < 1e-12);
        assert!((s.objective - 1.5).abs() < 1e-12);
        // Relaxing y ≤ 0.5 trades one x for one y: shadow price 1.
        assert!((s.duals[2] - 1.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let infeasible = Lp { objective: vec![1.0], constraints: vec![le(vec![1.0], 1.0), Constraint { coeffs: vec![1.0], sense: Sense::Ge, rhs: 2.0 }] };
        assert_eq!(solve(&infeasible).unwrap_err(), Error::Infeasible);
        let unbounded = Lp { objective: vec![1.0, 0.0], constraints: vec![le(vec![-1.0, 1.0], 1.0)] };
        assert_eq!(solve(&unbounded).unwrap_err(), Error::Unbounded);
    }

    #[test]
    fn negative_rhs_is_flipped() {
        // -x ≤ -2 means x ≥ 2; min x via max -x.
        let lp = Lp { objective: vec![-1.0], constraints: vec![le(vec![-1.0], -2.0)] };
        let s = solve(&lp).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example under the textbook rule.
        let lp = Lp {
            objective: vec![0.75, -150.0, 0.02, -6.0],
            constraints: vec![
                le(vec![0.25, -60.0, -0.04, 9.0], 0.0),
                le(vec![0.5, -90.0, -0.02, 3.0], 0.0),
                le(vec![0.0, 0.0, 1.0, 0.0], 1.0),
            ],
        };
        let s = solve(&lp).unwrap();
        assert!((s.objective - 0.05).abs() < 1e-12, "{s:?}");
    }
}
