//! Shared fixtures and independent reference implementations for the integration tests.

#![allow(dead_code)]

use std::cmp::Ordering;

use heterospec::binning::CalibrationSample;
use heterospec::model::{LanguageModel, ProbDist, TokenId};
use heterospec::rng::stream;
use heterospec::tree::{DraftTree, NodeId};
use rand::Rng;

/// Context-hashed random model: the distribution depends on the last `order`
/// tokens only, and is sharpened by `sharpness` so argmax ties are rare.
#[derive(Debug, Clone)]
pub struct HashModel {
    pub vocab: usize,
    pub order: usize,
    pub seed: u64,
    pub sharpness: f64,
}

impl LanguageModel for HashModel {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn next_dist(&self, context: &[TokenId]) -> ProbDist {
        let tail = &context[context.len().saturating_sub(self.order)..];
        let keys: Vec<u64> = tail.iter().map(|t| u64::from(t.0)).collect();
        let mut rng = stream(self.seed, "hash-model", &keys);
        let logw: Vec<f64> = (0..self.vocab)
            .map(|_| self.sharpness * rng.gen::<f64>())
            .collect();
        ProbDist::from_log_weights(&logw).unwrap()
    }
}

/// Fixed distribution regardless of context.
pub struct Fixed(pub ProbDist);

impl LanguageModel for Fixed {
    fn vocab_size(&self) -> usize {
        self.0.len()
    }
    fn next_dist(&self, _: &[TokenId]) -> ProbDist {
        self.0.clone()
    }
}

pub fn random_dist<R: Rng>(rng: &mut R, vocab: usize) -> ProbDist {
    let shape: f64 = rng.gen_range(0.2..6.0);
    let mut w: Vec<f64> = (0..vocab).map(|_| rng.gen::<f64>().powf(shape)).collect();
    // occasional exact zeros and exact ties
    if vocab > 2 && rng.gen_bool(0.3) {
        w[rng.gen_range(0..vocab)] = 0.0;
    }
    if vocab > 2 && rng.gen_bool(0.3) {
        let (a, b) = (rng.gen_range(0..vocab), rng.gen_range(0..vocab));
        w[a] = w[b];
    }
    if w.iter().all(|x| *x == 0.0) {
        w[0] = 1.0;
    }
    ProbDist::from_weights(w).unwrap()
}

/// Error-free transformation: a + b = s + e exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Double-double accumulator.
#[derive(Default, Clone, Copy)]
pub struct DD {
    hi: f64,
    lo: f64,
}

impl DD {
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        let (hi, lo) = two_sum(s, e + self.lo);
        self.hi = hi;
        self.lo = lo;
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Reference Top-K entropy: full stable sort by (probability desc, id asc),
/// renormalization and summation in double-double.
pub fn entropy_oracle(probs: &[f64], k: usize) -> f64 {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    let k = k.clamp(1, probs.len());
    let top: Vec<f64> = idx[..k].iter().map(|&i| probs[i]).collect();
    let mut mass = DD::default();
    for p in &top {
        mass.add(*p);
    }
    let mass = mass.value();
    if mass <= 0.0 {
        return 0.0;
    }
    let mut h = DD::default();
    for p in top {
        if p > 0.0 {
            let q = p / mass;
            h.add(-q * q.ln());
        }
    }
    h.value().max(0.0)
}

/// Reference rerank: sort every node by (V desc, depth asc, insertion asc), keep `n`.
pub fn rerank_oracle(tree: &DraftTree, n: usize) -> Vec<NodeId> {
    let mut ids: Vec<NodeId> = (0..tree.len()).map(NodeId).collect();
    ids.sort_by(|a, b| {
        let (x, y) = (tree.node(*a), tree.node(*b));
        y.value
            .partial_cmp(&x.value)
            .unwrap_or(Ordering::Equal)
            .then(x.depth.cmp(&y.depth))
            .then(x.insertion_index.cmp(&y.insertion_index))
    });
    ids.truncate(n);
    ids
}

fn naive_side_loss(ys: &[f64], sse: bool) -> f64 {
    if ys.is_empty() {
        return 0.0;
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let s: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    if sse {
        s
    } else {
        s / ys.len() as f64
    }
}

/// Exhaustive best split: every midpoint between consecutive distinct x, loss
/// recomputed from scratch with two-pass means, ties to the smaller threshold.
pub fn split_oracle(samples: &[CalibrationSample], sse: bool) -> Option<(f64, f64)> {
    let mut xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut best: Option<(f64, f64)> = None;
    for w in xs.windows(2) {
        let mut s = w[0] + (w[1] - w[0]) / 2.0;
        if s <= w[0] {
            s = w[1];
        }
        let left: Vec<f64> = samples.iter().filter(|p| p.x < s).map(|p| p.y).collect();
        let right: Vec<f64> = samples.iter().filter(|p| p.x >= s).map(|p| p.y).collect();
        let loss = naive_side_loss(&left, sse) + naive_side_loss(&right, sse);
        match best {
            Some((_, l)) if loss >= l - 1e-12 * (1.0 + l.abs()) => {}
            _ => best = Some((s, loss)),
        }
    }
    best
}

/// Greedy depth-limited tree using [`split_oracle`]; returns (thresholds, total leaf loss).
pub fn cart_oracle(samples: &[CalibrationSample], depth: usize, sse: bool) -> (Vec<f64>, f64) {
    let mut thresholds = Vec::new();
    let mut loss = 0.0;
    grow_oracle(samples.to_vec(), depth, sse, &mut thresholds, &mut loss);
    (thresholds, loss)
}

fn grow_oracle(
    node: Vec<CalibrationSample>,
    depth: usize,
    sse: bool,
    th: &mut Vec<f64>,
    loss: &mut f64,
) {
    let ys: Vec<f64> = node.iter().map(|s| s.y).collect();
    let constant = ys.windows(2).all(|w| w[0] == w[1]);
    let split = if depth == 0 || constant {
        None
    } else {
        split_oracle(&node, sse)
    };
    match split {
        None => *loss += naive_side_loss(&ys, sse),
        Some((s, _)) => {
            let (l, r): (Vec<_>, Vec<_>) = node.into_iter().partition(|p| p.x < s);
            grow_oracle(l, depth - 1, sse, th, loss);
            th.push(s);
            grow_oracle(r, depth - 1, sse, th, loss);
        }
    }
}

pub fn random_samples<R: Rng>(rng: &mut R, n: usize) -> Vec<CalibrationSample> {
    let grid: u32 = rng.gen_range(3..60);
    (0..n)
        .map(|_| {
            let x = if rng.gen_bool(0.5) {
                f64::from(rng.gen_range(0..grid)) * 0.25
            } else {
                rng.gen_range(0.0..8.0)
            };
            let y = f64::from(rng.gen_range(1u32..22)) + if x < 2.0 { 0.0 } else { 6.0 };
            CalibrationSample { x, y }
        })
        .collect()
}
