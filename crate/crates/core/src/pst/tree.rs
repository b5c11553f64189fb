use crate::error::{Error, Result};
use crate::numeric::aicc;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// Symbols are indices into the alphabet; a suffix lists them oldest first,
/// so its last element is the most recent symbol.
pub type Suffix = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PstConfig {
    pub max_depth: usize,
    pub min_count: usize,
    pub prune_epsilon: f64,
}

impl Default for PstConfig {
    fn default() -> Self {
        Self { max_depth: 3, min_count: 2, prune_epsilon: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PstNode {
    pub suffix: Suffix,
    pub dist: Vec<f64>,
    /// Number of symbols observed after this suffix.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PstFile", into = "PstFile")]
pub struct Pst {
    alphabet: Vec<String>,
    max_depth: usize,
    nodes: Vec<PstNode>,
    index: HashMap<Suffix, usize>,
}

#[derive(Serialize, Deserialize)]
struct NodeFile {
    count: usize,
    dist: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PstFile {
    alphabet: Vec<String>,
    max_depth: usize,
    /// Keyed by the comma-joined suffix; the root is the empty key.
    nodes: BTreeMap<String, NodeFile>,
}

impl From<Pst> for PstFile {
    fn from(p: Pst) -> Self {
        let nodes = p
            .nodes
            .iter()
            .map(|n| (p.suffix_label(&n.suffix), NodeFile { count: n.count, dist: n.dist.clone() }))
            .collect();
        PstFile { alphabet: p.alphabet, max_depth: p.max_depth, nodes }
    }
}

impl TryFrom<PstFile> for Pst {
    type Error = Error;

    fn try_from(f: PstFile) -> Result<Self> {
        let lookup: HashMap<&str, usize> = f.alphabet.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let nodes = f
            .nodes
            .into_iter()
            .map(|(key, n)| {
                let suffix = if key.is_empty() {
                    Vec::new()
                } else {
                    key.split(',')
                        .map(|s| lookup.get(s.trim()).copied().ok_or_else(|| Error::invalid(format!("unknown symbol {s:?}"))))
                        .collect::<Result<_>>()?
                };
                Ok(PstNode { suffix, dist: n.dist, count: n.count })
            })
            .collect::<Result<Vec<_>>>()?;
        Pst::from_nodes(f.alphabet, f.max_depth, nodes)
    }
}

impl Pst {
    /// Assembles a tree from explicit nodes, checking distributions and closure.
    pub fn from_nodes(alphabet: Vec<String>, max_depth: usize, mut nodes: Vec<PstNode>) -> Result<Self> {
        let k = alphabet.len();
        if k == 0 {
            return Err(Error::EmptyCorpus);
        }
        nodes.sort_by(|a, b| a.suffix.len().cmp(&b.suffix.len()).then_with(|| a.suffix.cmp(&b.suffix)));
        let mut index = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if n.dist.len() != k || n.suffix.iter().any(|&s| s >= k) || n.suffix.len() > max_depth {
                return Err(Error::invalid(format!("malformed node {:?}", n.suffix)));
            }
            if n.dist.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (n.dist.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("node {:?} is not a distribution", n.suffix)));
            }
            if index.insert(n.suffix.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate node {:?}", n.suffix)));
            }
        }
        if !index.contains_key(&Vec::new()) {
            return Err(Error::invalid("tree has no root"));
        }
        for n in &nodes {
            if !n.suffix.is_empty() && !index.contains_key(&n.suffix[1..]) {
                return Err(Error::invalid(format!("node {:?} is missing its parent", n.suffix)));
            }
        }
        Ok(Self { alphabet, max_depth, nodes, index })
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn n_symbols(&self) -> usize {
        self.alphabet.len()
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    /// Nodes ordered by depth, then suffix; index 0 is the root.
    pub fn nodes(&self) -> &[PstNode] {
        &self.nodes
    }

    pub fn node_id(&self, suffix: &[usize]) -> Option<usize> {
        self.index.get(suffix).copied()
    }

    pub fn suffix_label(&self, suffix: &[usize]) -> String {
        suffix.iter().map(|&s| self.alphabet[s].as_str()).collect::<Vec<_>>().join(",")
    }

    /// Node of the longest stored suffix of `history`.
    pub fn longest_suffix(&self, history: &[usize]) -> usize {
        let start = history.len().saturating_sub(self.max_depth);
        (start..=history.len()).find_map(|i| self.node_id(&history[i..])).unwrap_or(0)
    }

    /// Node reached from node `x` after observing `s`.
    pub fn next_node(&self, x: usize, s: usize) -> usize {
        let mut h = self.nodes[x].suffix.clone();
        h.push(s);
        self.longest_suffix(&h)
    }

    pub fn predict(&self, history: &[usize]) -> &[f64] {
        &self.nodes[self.longest_suffix(history)].dist
    }

    /// Free parameters: `|S| − 1` per node.
    pub fn n_params(&self) -> usize {
        self.nodes.len() * (self.n_symbols() - 1)
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Laplace-smoothed suffix counts up to `max_depth`, pruned bottom-up.
pub fn pst_fit(sequences: &[Vec<usize>], alphabet: Vec<String>, cfg: &PstConfig) -> Result<Pst> {
    let k = alphabet.len();
    if k == 0 || sequences.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    if let Some(&s) = sequences.iter().flatten().find(|&&s| s >= k) {
        return Err(Error::invalid(format!("symbol {s} outside an alphabet of {k}")));
    }
    let mut counts: HashMap<Suffix, Vec<usize>> = HashMap::new();
    for seq in sequences {
        for t in 0..seq.len() {
            for l in 0..=cfg.max_depth.min(t) {
                counts.entry(seq[t - l..t].to_vec()).or_insert_with(|| vec![0; k])[seq[t]] += 1;
            }
        }
    }
    let smooth = |c: &[usize]| -> (Vec<f64>, usize) {
        let total: usize = c.iter().sum();
        let denom = (total + k) as f64;
        (c.iter().map(|&n| (n + 1) as f64 / denom).collect(), total)
    };
    let mut kept: HashMap<Suffix, (Vec<f64>, usize)> = counts
        .iter()
        .filter(|(suf, c)| suf.is_empty() || c.iter().sum::<usize>() >= cfg.min_count.max(1))
        .map(|(suf, c)| (suf.clone(), smooth(c)))
        .collect();
    for depth in (1..=cfg.max_depth).rev() {
        let parents: HashSet<Suffix> = kept.keys().filter(|s| s.len() == depth + 1).map(|s| s[1..].to_vec()).collect();
        let mut level: Vec<Suffix> = kept.keys().filter(|s| s.len() == depth && !parents.contains(*s)).cloned().collect();
        level.sort();
        for suf in level {
            if l1(&kept[&suf].0, &kept[&suf[1..]].0) <= cfg.prune_epsilon {
                kept.remove(&suf);
            }
        }
    }
    let nodes = kept.into_iter().map(|(suffix, (dist, count))| PstNode { suffix, dist, count }).collect();
    Pst::from_nodes(alphabet, cfg.max_depth, nodes)
}

/// `Σ log P(s | X)` with `X` the longest stored suffix before each symbol.
pub fn pst_loglik(pst: &Pst, sequences: &[Vec<usize>]) -> f64 {
    sequences
        .iter()
        .flat_map(|seq| (0..seq.len()).map(move |t| pst.predict(&seq[..t])[seq[t]].ln()))
        .sum()
}

pub fn pst_aicc(pst: &Pst, sequences: &[Vec<usize>]) -> Result<f64> {
    let n = sequences.iter().map(Vec::len).sum();
    aicc(pst_loglik(pst, sequences), pst.n_params(), n)
}

/// Parses one comma-separated sequence per line. Blank lines are skipped.
/// The alphabet is sorted numerically when every symbol is an integer.
pub fn parse_sequences(text: &str) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
    let raw: Vec<Vec<&str>> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let toks: Vec<&str> = l.split(',').map(str::trim).collect();
            if toks.iter().any(|t| t.is_empty()) {
                return Err(Error::Parse { line: i + 1, message: "empty symbol".into() });
            }
            Ok(toks)
        })
        .collect::<Result<_>>()?;
    let mut alphabet: Vec<String> = raw.iter().flatten().map(|s| s.to_string()).collect();
    alphabet.sort();
    alphabet.dedup();
    if alphabet.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if alphabet.iter().all(|s| s.parse::<i64>().is_ok()) {
        alphabet.sort_by_key(|s| s.parse::<i64>().unwrap_or_default());
    }
    let lookup: HashMap<&str, usize> = alphabet.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let seqs = raw.iter().map(|r| r.iter().map(|s| lookup[s]).collect()).collect();
    Ok((alphabet, seqs))
}
