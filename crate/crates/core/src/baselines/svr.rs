//! Linear ε-insensitive support vector regression trained by subgradient
//! descent on the primal objective
//!
//! ```text
//! J(w, b) = ½‖w‖² + C · Σ max(0, |yᵢ − w·zᵢ − b| − ε)
//! ```
//!
//! where `z` are the standardised features. Steps follow `η₀/√t` on `J/(C·n)`;
//! the returned model is the best running average of the iterates seen.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BASE_STEP: f64 = 0.5;
const BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub epsilon: f64,
    pub c: f64,
    /// Best objective seen so far, one entry per iteration. Non-increasing.
    pub objective_trace: Vec<f64>,
}

impl SvrModel {
    fn standardise(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.standardise(x);
        linear(&self.weights, self.bias, &z)
    }
}

fn linear(w: &[f64], b: f64, z: &[f64]) -> f64 {
    w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + b
}

fn objective(w: &[f64], b: f64, z: &[Vec<f64>], y: &[f64], epsilon: f64, c: f64) -> f64 {
    let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(zi, yi)| ((yi - linear(w, b, zi)).abs() - epsilon).max(0.0))
        .sum();
    reg + c * loss
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn fit(rows: &[Vec<f64>], targets: &[f64], epsilon: f64, c: f64, iterations: usize, seed: u64) -> Result<SvrModel> {
    if rows.is_empty() || rows.len() != targets.len() {
        return Err(Error::domain("SVR fit needs non-empty, equally sized rows and targets"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::domain(format!("epsilon must be non-negative, got {epsilon}")));
    }
    if !(c > 0.0) {
        return Err(Error::domain(format!("C must be positive, got {c}")));
    }
    let n = rows.len();
    let dims = rows[0].len();

    let feature_mean: Vec<f64> = (0..dims)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let feature_scale: Vec<f64> = (0..dims)
        .map(|j| {
            let var = rows.iter().map(|r| (r[j] - feature_mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 { var.sqrt() } else { 1.0 }
        })
        .collect();
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..dims).map(|j| (r[j] - feature_mean[j]) / feature_scale[j]).collect())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;

    let mut w = vec![0.0; dims];
    let mut b = median(targets);
    let mut avg_w = w.clone();
    let mut avg_b = b;
    let mut best = (objective(&w, b, &z, targets, epsilon, c), w.clone(), b);
    let mut trace = Vec::with_capacity(iterations);

    let batch = n.min(BATCH);
    for t in 1..=iterations {
        let mut grad_w: Vec<f64> = w.iter().map(|v| v / (c * n as f64)).collect();
        let mut grad_b = 0.0;
        for _ in 0..batch {
            if cursor == n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            let r = targets[i] - linear(&w, b, &z[i]);
            if r.abs() > epsilon {
                let s = r.signum() / batch as f64;
                for (g, zij) in grad_w.iter_mut().zip(&z[i]) {
                    *g -= s * zij;
                }
                grad_b -= s;
            }
        }
        let step = BASE_STEP / (t as f64).sqrt();
        for (wj, g) in w.iter_mut().zip(&grad_w) {
            *wj -= step * g;
        }
        b -= step * grad_b;

        let k = t as f64;
        for (a, wj) in avg_w.iter_mut().zip(&w) {
            *a += (wj - *a) / k;
        }
        avg_b += (b - avg_b) / k;

        for (cand_w, cand_b) in [(&w, b), (&avg_w, avg_b)] {
            let obj = objective(cand_w, cand_b, &z, targets, epsilon, c);
            if obj < best.0 {
                best = (obj, cand_w.clone(), cand_b);
            }
        }
        trace.push(best.0);
    }

    Ok(SvrModel {
        weights: best.1,
        bias: best.2,
        feature_mean,
        feature_scale,
        epsilon,
        c,
        objective_trace: trace,
    })
}
