//! Regression tree grown by variance reduction over axis-aligned thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub root: Node,
}

impl TreeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = &self.root;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        fn count(n: &Node) -> usize {
            match n {
                Node::Leaf { .. } => 1,
                Node::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }
}

fn mean(idx: &[usize], y: &[f64]) -> f64 {
    idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Scans every feature and every gap between consecutive distinct values.
/// Features and thresholds are visited in increasing order and only a
/// strictly larger gain replaces the incumbent, so ties keep the lowest
/// feature index and then the lowest threshold.
#[allow(clippy::needless_range_loop)]
fn best_split(idx: &[usize], x: &[Vec<f64>], y: &[f64], min_leaf: usize) -> Option<Best> {
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = idx.iter().map(|&i| y[i] * y[i]).sum();
    let parent = total_sq - total * total / n as f64;
    let mut best: Option<Best> = None;
    for feature in 0..x[idx[0]].len() {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| x[a][feature].total_cmp(&x[b][feature]));
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for k in 1..n {
            let yi = y[order[k - 1]];
            sum_l += yi;
            sq_l += yi * yi;
            let (lo, hi) = (x[order[k - 1]][feature], x[order[k]][feature]);
            if lo == hi || k < min_leaf || n - k < min_leaf {
                continue;
            }
            let (nl, nr) = (k as f64, (n - k) as f64);
            let sum_r = total - sum_l;
            let sq_r = total_sq - sq_l;
            let child = (sq_l - sum_l * sum_l / nl) + (sq_r - sum_r * sum_r / nr);
            let gain = parent - child;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(Best { feature, threshold: lo + 0.5 * (hi - lo), gain });
            }
        }
    }
    best
}

fn grow(idx: Vec<usize>, x: &[Vec<f64>], y: &[f64], depth: usize, max_depth: usize, min_leaf: usize) -> Node {
    let leaf = Node::Leaf { value: mean(&idx, y) };
    if depth >= max_depth || idx.len() < 2 * min_leaf || idx.iter().all(|&i| y[i] == y[idx[0]]) {
        return leaf;
    }
    let Some(split) = best_split(&idx, x, y, min_leaf) else {
        return leaf;
    };
    let (left, right): (Vec<usize>, Vec<usize>) =
        idx.into_iter().partition(|&i| x[i][split.feature] <= split.threshold);
    Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(grow(left, x, y, depth + 1, max_depth, min_leaf)),
        right: Box::new(grow(right, x, y, depth + 1, max_depth, min_leaf)),
    }
}

/// Grows a tree. `max_depth = usize::MAX` leaves depth unbounded; impure
/// nodes keep splitting until the depth or leaf-size limits stop them.
pub fn fit(rows: &[Vec<f64>], targets: &[f64], max_depth: usize, min_leaf: usize) -> Result<TreeModel> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::domain("tree fit needs non-empty, equally sized rows and targets"));
    }
    let min_leaf = min_leaf.max(1);
    Ok(TreeModel {
        root: grow((0..rows.len()).collect(), rows, targets, 0, max_depth, min_leaf),
    })
}
