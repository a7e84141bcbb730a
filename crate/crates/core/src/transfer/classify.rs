//! The four downstream classifiers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GlpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "gbt")]
    GradientBoostedTrees,
    #[serde(rename = "svm")]
    MaxMarginLinear,
    #[serde(rename = "lr")]
    LogisticRegression,
    #[serde(rename = "knn")]
    KNearest,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 4] = [
        ClassifierKind::GradientBoostedTrees,
        ClassifierKind::MaxMarginLinear,
        ClassifierKind::LogisticRegression,
        ClassifierKind::KNearest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::GradientBoostedTrees => "gbt",
            ClassifierKind::MaxMarginLinear => "svm",
            ClassifierKind::LogisticRegression => "lr",
            ClassifierKind::KNearest => "knn",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = GlpError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GlpError::Config(format!("unknown classifier {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierParams {
    pub gbt_rounds: usize,
    pub gbt_depth: usize,
    pub gbt_learning_rate: f64,
    pub gbt_lambda: f64,
    /// Inverse regularization strength shared by the linear models.
    pub c: f64,
    pub linear_iterations: usize,
    pub knn_k: usize,
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            gbt_rounds: 100,
            gbt_depth: 3,
            gbt_learning_rate: 0.1,
            gbt_lambda: 1.0,
            c: 1.0,
            linear_iterations: 1000,
            knn_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Node::Leaf(v) => *v,
            Node::Split { feature, threshold, left, right } => {
                if x[*feature] <= *threshold {
                    left.eval(x)
                } else {
                    right.eval(x)
                }
            }
        }
    }
}

/// Per-feature mean and standard deviation of a training matrix.
#[derive(Debug, Clone, PartialEq)]
struct Scaler {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Scaler {
    fn fit(x: &[Vec<f64>]) -> Self {
        let d = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let sd = (0..d)
            .map(|j| {
                let s = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, sd }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.sd).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Fitted {
    Trees { base: f64, learning_rate: f64, trees: Vec<Node> },
    Linear { scaler: Scaler, w: Vec<f64>, b: f64 },
    Neighbors { k: usize, x: Vec<Vec<f64>>, y: Vec<bool> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    kind: ClassifierKind,
    fitted: Fitted,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_training_set(x: &[Vec<f64>], y: &[bool]) -> Result<()> {
    if x.len() != y.len() {
        return Err(GlpError::Shape { expected: y.len(), got: x.len() });
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos < 2 || y.len() - pos < 2 {
        return Err(GlpError::Precondition(format!(
            "classifier needs at least 2 samples per class, got {pos} positive and {} negative",
            y.len() - pos
        )));
    }
    let d = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(GlpError::Shape { expected: d, got: row.len() });
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GlpError::Numeric("non-finite classifier feature".into()));
    }
    Ok(())
}

fn build_tree(x: &[Vec<f64>], grad: &[f64], hess: &[f64], idx: &[usize], depth: usize, lambda: f64) -> Node {
    let g: f64 = idx.iter().map(|&i| grad[i]).sum();
    let h: f64 = idx.iter().map(|&i| hess[i]).sum();
    let leaf = Node::Leaf(-g / (h + lambda));
    if depth == 0 || idx.len() < 2 {
        return leaf;
    }
    let parent = g * g / (h + lambda);
    // (gain, feature, threshold); strict improvement keeps the first best.
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order = idx.to_vec();
    for j in 0..x[0].len() {
        order.sort_by(|&a, &b| x[a][j].total_cmp(&x[b][j]).then(a.cmp(&b)));
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in 0..order.len() - 1 {
            let i = order[w];
            gl += grad[i];
            hl += hess[i];
            let (lo, hi) = (x[i][j], x[order[w + 1]][j]);
            if lo == hi {
                continue;
            }
            let (gr, hr) = (g - gl, h - hl);
            let gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - parent;
            if best.is_none_or(|(b, _, _)| gain > b) {
                best = Some((gain, j, 0.5 * (lo + hi)));
            }
        }
    }
    match best {
        Some((gain, feature, threshold)) if gain >= 0.0 => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
            Node::Split {
                feature,
                threshold,
                left: Box::new(build_tree(x, grad, hess, &l, depth - 1, lambda)),
                right: Box::new(build_tree(x, grad, hess, &r, depth - 1, lambda)),
            }
        }
        _ => leaf,
    }
}

/// Boosted regression trees on the logistic loss with Newton leaf values
/// and exact greedy splits.
fn train_trees(x: &[Vec<f64>], y: &[bool], p: &ClassifierParams) -> Fitted {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v).count() as f64;
    let base = (pos / (n - pos)).ln();
    let mut margin = vec![base; y.len()];
    let idx: Vec<usize> = (0..y.len()).collect();
    let mut trees = Vec::with_capacity(p.gbt_rounds);
    for _ in 0..p.gbt_rounds {
        let prob: Vec<f64> = margin.iter().map(|&m| sigmoid(m)).collect();
        let grad: Vec<f64> = prob.iter().zip(y).map(|(q, &t)| q - f64::from(u8::from(t))).collect();
        let hess: Vec<f64> = prob.iter().map(|q| (q * (1.0 - q)).max(1e-12)).collect();
        let tree = build_tree(x, &grad, &hess, &idx, p.gbt_depth, p.gbt_lambda);
        for (m, row) in margin.iter_mut().zip(x) {
            *m += p.gbt_learning_rate * tree.eval(row);
        }
        trees.push(tree);
    }
    Fitted::Trees { base, learning_rate: p.gbt_learning_rate, trees }
}

/// Full-batch (sub)gradient descent on `mean loss + |w|^2 / (2 C n)` over
/// standardized features; returns the iterate with the lowest objective.
fn train_linear(kind: ClassifierKind, x: &[Vec<f64>], y: &[bool], p: &ClassifierParams) -> Fitted {
    let scaler = Scaler::fit(x);
    let xs: Vec<Vec<f64>> = x.iter().map(|r| scaler.apply(r)).collect();
    let n = y.len() as f64;
    let d = xs[0].len();
    let lambda = 1.0 / (p.c * n);
    let sign: Vec<f64> = y.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let objective = |w: &[f64], b: f64| -> f64 {
        let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
        let loss: f64 = xs
            .iter()
            .zip(&sign)
            .map(|(r, s)| {
                let z = s * (dot(w, r) + b);
                match kind {
                    ClassifierKind::MaxMarginLinear => (1.0 - z).max(0.0),
                    _ => softplus(-z),
                }
            })
            .sum::<f64>()
            / n;
        loss + reg
    };
    let mut best = (objective(&w, b), w.clone(), b);
    for t in 1..=p.linear_iterations {
        let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
        let mut gb = 0.0;
        for (r, s) in xs.iter().zip(&sign) {
            let z = s * (dot(&w, r) + b);
            let coef = match kind {
                ClassifierKind::MaxMarginLinear => {
                    if z < 1.0 {
                        -s
                    } else {
                        0.0
                    }
                }
                _ => -s * sigmoid(-z),
            } / n;
            for (g, v) in gw.iter_mut().zip(r) {
                *g += coef * v;
            }
            gb += coef;
        }
        let step = match kind {
            ClassifierKind::MaxMarginLinear => 0.5 / (t as f64).sqrt(),
            _ => 0.5,
        };
        for (v, g) in w.iter_mut().zip(&gw) {
            *v -= step * g;
        }
        b -= step * gb;
        let obj = objective(&w, b);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    Fitted::Linear { scaler, w: best.1, b: best.2 }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

/// Train one classifier. All four are deterministic, so `_seed` only keeps
/// the call signature uniform.
pub fn train_classifier(kind: ClassifierKind, x: &[Vec<f64>], y: &[bool], params: &ClassifierParams, _seed: u64) -> Result<Classifier> {
    check_training_set(x, y)?;
    let fitted = match kind {
        ClassifierKind::GradientBoostedTrees => train_trees(x, y, params),
        ClassifierKind::MaxMarginLinear | ClassifierKind::LogisticRegression => train_linear(kind, x, y, params),
        ClassifierKind::KNearest => Fitted::Neighbors { k: params.knn_k.max(1), x: x.to_vec(), y: y.to_vec() },
    };
    Ok(Classifier { kind, fitted })
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    /// `(label, score)`; higher scores mean more likely positive.
    pub fn predict(&self, x: &[f64]) -> (bool, f64) {
        match &self.fitted {
            Fitted::Trees { base, learning_rate, trees } => {
                let m = base + learning_rate * trees.iter().map(|t| t.eval(x)).sum::<f64>();
                (m > 0.0, m)
            }
            Fitted::Linear { scaler, w, b } => {
                let m = dot(w, &scaler.apply(x)) + b;
                (m > 0.0, m)
            }
            Fitted::Neighbors { k, x: train, y } => {
                let mut dist: Vec<(f64, usize)> = train
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>(), i))
                    .collect();
                // Distance ties go to the lower index.
                dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let k = (*k).min(dist.len());
                let pos = dist[..k].iter().filter(|(_, i)| y[*i]).count();
                // A tied vote is negative.
                (2 * pos > k, pos as f64 / k as f64)
            }
        }
    }

    pub fn predict_all(&self, x: &[Vec<f64>]) -> (Vec<bool>, Vec<f64>) {
        x.iter().map(|r| self.predict(r)).unzip()
    }
}
