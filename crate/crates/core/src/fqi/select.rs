use serde::{Deserialize, Serialize};

const BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    /// Selected feature indices, ascending.
    pub mask: Vec<usize>,
    pub gains: Vec<f64>,
    /// The target was constant, so every feature was kept.
    pub constant_target: bool,
}

fn discretize(values: impl Iterator<Item = f64> + Clone) -> Vec<usize> {
    let (lo, hi) = values.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let span = hi - lo;
    values
        .map(|v| if span > 0.0 { (((v - lo) / span * BINS as f64) as usize).min(BINS - 1) } else { 0 })
        .collect()
}

fn entropy(counts: &[usize], total: usize) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// Information gain `H(Y) − H(Y | X)` of a discretized feature about a
/// discretized target.
pub fn information_gain(feature_bins: &[usize], target_bins: &[usize]) -> f64 {
    let n = target_bins.len();
    let mut y_counts = [0usize; BINS];
    let mut joint = [[0usize; BINS]; BINS];
    let mut x_counts = [0usize; BINS];
    for (&x, &y) in feature_bins.iter().zip(target_bins) {
        y_counts[y] += 1;
        x_counts[x] += 1;
        joint[x][y] += 1;
    }
    let conditional: f64 = (0..BINS)
        .filter(|&x| x_counts[x] > 0)
        .map(|x| x_counts[x] as f64 / n as f64 * entropy(&joint[x], x_counts[x]))
        .sum();
    (entropy(&y_counts, n) - conditional).max(0.0)
}

/// Keeps the top `⌈keep_fraction · d⌉` features by information gain; ties go
/// to the lower index.
pub fn information_gain_select(features: &[Vec<f64>], targets: &[f64], keep_fraction: f64) -> FeatureSelection {
    let d = features.first().map_or(0, Vec::len);
    let all: Vec<usize> = (0..d).collect();
    let constant = targets.iter().all(|&t| t == targets[0]);
    if constant || targets.is_empty() {
        return FeatureSelection { mask: all, gains: vec![0.0; d], constant_target: true };
    }
    let y = discretize(targets.iter().copied());
    let gains: Vec<f64> = (0..d).map(|j| information_gain(&discretize(features.iter().map(|r| r[j])), &y)).collect();
    let keep = ((keep_fraction.clamp(0.0, 1.0) * d as f64 - 1e-9).ceil() as usize).clamp(1, d.max(1));
    let mut order = all;
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let mut mask: Vec<usize> = order.into_iter().take(keep).collect();
    mask.sort_unstable();
    FeatureSelection { mask, gains, constant_target: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_of_target_ranks_first() {
        let rows: Vec<Vec<f64>> = (0..50u64)
            .map(|i| (0..6u64).map(|j| (crate::numeric::derive_seed(i, &[j]) % 10) as f64).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[3]).collect();
        let sel = information_gain_select(&rows, &y, 0.2);
        assert_eq!(sel.mask.len(), 2);
        assert!(sel.mask.contains(&3));
        assert!(sel.gains[3] >= sel.gains.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn keep_fraction_sizes() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| (0..10).map(|j| ((i + j) % 4) as f64).collect()).collect();
        let y: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        assert_eq!(information_gain_select(&rows, &y, 0.2).mask.len(), 2);
        assert_eq!(information_gain_select(&rows, &y, 1.0).mask.len(), 10);
        let flat = information_gain_select(&rows, &vec![1.0; 20], 0.2);
        assert!(flat.constant_target);
        assert_eq!(flat.mask.len(), 10);
    }

    #[test]
    fn truth_table_gains() {
        // y = copy, noise independent of y over the four rows.
        let copy = [0usize, 0, 9, 9];
        let noise = [0usize, 9, 0, 9];
        let y = [0usize, 0, 9, 9];
        let ln2 = std::f64::consts::LN_2;
        assert!((information_gain(&copy, &y) - ln2).abs() < 1e-15);
        assert!(information_gain(&noise, &y).abs() < 1e-15);
    }
}
