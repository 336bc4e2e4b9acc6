//! Squared-loss gradient boosting over histogram-binned regression trees.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::YardsError;

const FORMAT_HEADER: &str = "stepturn-boosted v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Upper bound on histogram bins per feature.
    pub max_bins: usize,
    pub folds: usize,
    /// Seeds the assignment of games to folds.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { iterations: 1000, learning_rate: 0.03, max_depth: 6, min_samples_leaf: 20, max_bins: 64, folds: 5, seed: 1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), YardsError> {
        if self.iterations == 0 {
            return Err(YardsError::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(YardsError::InvalidConfig(format!("learning_rate {} outside (0, 1]", self.learning_rate)));
        }
        if self.max_bins < 2 || self.max_bins > 256 {
            return Err(YardsError::InvalidConfig("max_bins must be in 2..=256".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(YardsError::InvalidConfig("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// `x[feature] <= threshold` goes to `left`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(f64),
}

/// Nodes in creation order; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    /// Features referenced by any split.
    pub fn features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub n_features: usize,
    pub base_prediction: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl BoostedModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64, YardsError> {
        if x.len() != self.n_features {
            return Err(YardsError::FeatureWidthMismatch { expected: self.n_features, found: x.len() });
        }
        Ok(self.base_prediction + self.learning_rate * self.trees.iter().map(|t| t.evaluate(x)).sum::<f64>())
    }

    /// Sorted, de-duplicated indices of every feature some split uses.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.trees.iter().flat_map(|t| t.features()).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{FORMAT_HEADER}");
        let _ = writeln!(out, "n_features {}", self.n_features);
        let _ = writeln!(out, "base {:e}", self.base_prediction);
        let _ = writeln!(out, "learning_rate {:e}", self.learning_rate);
        let _ = writeln!(out, "trees {}", self.trees.len());
        for t in &self.trees {
            let _ = writeln!(out, "tree {}", t.nodes.len());
            for n in &t.nodes {
                let _ = match n {
                    Node::Split { feature, threshold, left, right } => {
                        writeln!(out, "split {feature} {threshold:e} {left} {right}")
                    }
                    Node::Leaf(v) => writeln!(out, "leaf {v:e}"),
                };
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, YardsError> {
        let bad = |m: &str| YardsError::Format(m.to_string());
        let mut lines = text.lines();
        if lines.next() != Some(FORMAT_HEADER) {
            return Err(bad("missing header"));
        }
        let field = |lines: &mut std::str::Lines<'_>, name: &str| -> Result<String, YardsError> {
            let line = lines.next().ok_or_else(|| bad("truncated"))?;
            line.strip_prefix(name)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| YardsError::Format(format!("expected `{name}`, found `{line}`")))
        };
        let num = |s: String| s.parse::<f64>().map_err(|_| YardsError::Format(format!("bad number `{s}`")));
        let int = |s: String| s.parse::<usize>().map_err(|_| YardsError::Format(format!("bad count `{s}`")));
        let n_features = int(field(&mut lines, "n_features")?)?;
        let base_prediction = num(field(&mut lines, "base")?)?;
        let learning_rate = num(field(&mut lines, "learning_rate")?)?;
        let n_trees = int(field(&mut lines, "trees")?)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n_nodes = int(field(&mut lines, "tree")?)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            for _ in 0..n_nodes {
                let line = lines.next().ok_or_else(|| bad("truncated tree"))?;
                let parts: Vec<&str> = line.split_whitespace().collect();
                let node = match parts.as_slice() {
                    ["leaf", v] => Node::Leaf(num(v.to_string())?),
                    ["split", f, t, l, r] => {
                        let (feature, left, right) = (int(f.to_string())?, int(l.to_string())?, int(r.to_string())?);
                        if feature >= n_features || left >= n_nodes || right >= n_nodes {
                            return Err(bad("split index out of range"));
                        }
                        Node::Split { feature, threshold: num(t.to_string())?, left, right }
                    }
                    _ => return Err(YardsError::Format(format!("bad node `{line}`"))),
                };
                nodes.push(node);
            }
            trees.push(Tree { nodes });
        }
        Ok(Self { n_features, base_prediction, learning_rate, trees })
    }
}

/// Per-feature bin edges; value `v` falls in the first bin whose edge is `>= v`.
struct Binning {
    edges: Vec<Vec<f64>>,
    /// Row-major `n x p` bin indices.
    codes: Vec<u8>,
}

fn bin_features(x: &[Vec<f64>], max_bins: usize) -> Binning {
    let n = x.len();
    let p = x[0].len();
    let mut edges = Vec::with_capacity(p);
    let mut codes = vec![0u8; n * p];
    let mut col = Vec::with_capacity(n);
    for f in 0..p {
        col.clear();
        col.extend(x.iter().map(|r| r[f]));
        col.sort_by(f64::total_cmp);
        col.dedup();
        let e: Vec<f64> = if col.len() <= max_bins {
            col.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
        } else {
            let mut cuts: Vec<f64> = (1..max_bins)
                .map(|k| {
                    let i = k * col.len() / max_bins;
                    0.5 * (col[i - 1] + col[i])
                })
                .collect();
            cuts.dedup();
            cuts
        };
        for (i, r) in x.iter().enumerate() {
            codes[i * p + f] = e.partition_point(|edge| *edge < r[f]) as u8;
        }
        edges.push(e);
    }
    Binning { edges, codes }
}

struct Candidate {
    gain: f64,
    feature: usize,
    bin: usize,
}

/// Best split of `rows` or `None` when nothing improves the squared error.
fn best_split(rows: &[usize], resid: &[f64], bins: &Binning, p: usize, min_leaf: usize) -> Option<Candidate> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| resid[i]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<Candidate> = None;
    let mut sums = [0.0f64; 256];
    let mut counts = [0usize; 256];
    for f in 0..p {
        let nb = bins.edges[f].len() + 1;
        if nb < 2 {
            continue;
        }
        sums[..nb].fill(0.0);
        counts[..nb].fill(0);
        for &i in rows {
            let b = bins.codes[i * p + f] as usize;
            sums[b] += resid[i];
            counts[b] += 1;
        }
        let (mut sl, mut nl) = (0.0, 0usize);
        for b in 0..nb - 1 {
            sl += sums[b];
            nl += counts[b];
            let nr = n - nl;
            if nl < min_leaf {
                continue;
            }
            if nr < min_leaf {
                break;
            }
            let sr = total - sl;
            let gain = sl * sl / nl as f64 + sr * sr / nr as f64 - parent;
            // strict comparison keeps the lowest feature and threshold on ties
            if gain > 1e-12 * (1.0 + parent.abs()) && best.as_ref().is_none_or(|c| gain > c.gain) {
                best = Some(Candidate { gain, feature: f, bin: b });
            }
        }
    }
    best
}

fn grow(
    rows: Vec<usize>,
    depth: usize,
    resid: &[f64],
    bins: &Binning,
    config: &TrainConfig,
    p: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    let leaf_value = rows.iter().map(|&i| resid[i]).sum::<f64>() / rows.len() as f64;
    nodes.push(Node::Leaf(leaf_value));
    if depth >= config.max_depth {
        return id;
    }
    let Some(c) = best_split(&rows, resid, bins, p, config.min_samples_leaf) else {
        return id;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&i| (bins.codes[i * p + c.feature] as usize) <= c.bin);
    let left = grow(left_rows, depth + 1, resid, bins, config, p, nodes);
    let right = grow(right_rows, depth + 1, resid, bins, config, p, nodes);
    nodes[id] = Node::Split { feature: c.feature, threshold: bins.edges[c.feature][c.bin], left, right };
    id
}

/// Fits a boosted model. Rows are put in a canonical order first, so the
/// result does not depend on the order of the input.
pub fn fit_boosted(x: &[Vec<f64>], y: &[f64], config: &TrainConfig) -> Result<BoostedModel, YardsError> {
    config.validate()?;
    if x.is_empty() {
        return Err(YardsError::EmptyTrainingSet);
    }
    if x.len() != y.len() {
        return Err(YardsError::FeatureWidthMismatch { expected: x.len(), found: y.len() });
    }
    let p = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != p) {
        return Err(YardsError::FeatureWidthMismatch { expected: p, found: r.len() });
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(YardsError::NonFiniteTarget(*v));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x[a].iter()
            .zip(&x[b])
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(y[a].total_cmp(&y[b]))
    });
    let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let n = ys.len();
    let base = ys.iter().sum::<f64>() / n as f64;
    let mut model = BoostedModel { n_features: p, base_prediction: base, learning_rate: config.learning_rate, trees: Vec::new() };
    if p == 0 {
        return Ok(model);
    }
    let bins = bin_features(&xs, config.max_bins);
    let mut pred = vec![base; n];
    let mut resid = vec![0.0; n];
    for _ in 0..config.iterations {
        for i in 0..n {
            resid[i] = ys[i] - pred[i];
        }
        let mut nodes = Vec::new();
        grow((0..n).collect(), 0, &resid, &bins, config, p, &mut nodes);
        let tree = Tree { nodes };
        if tree.nodes.len() == 1 {
            // a lone leaf carries the mean residual, which is zero after the first round
            break;
        }
        for (i, r) in xs.iter().enumerate() {
            pred[i] += config.learning_rate * tree.evaluate(r);
        }
        model.trees.push(tree);
    }
    Ok(model)
}

/// Intercept-only baseline: always the training mean.
pub fn fit_intercept(y: &[f64]) -> Result<f64, YardsError> {
    if y.is_empty() {
        return Err(YardsError::EmptyTrainingSet);
    }
    Ok(y.iter().sum::<f64>() / y.len() as f64)
}
