//! Random forest of Gini-split decision trees with out-of-bag evaluation, and
//! a k-nearest-neighbour baseline.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::{Confusion, EvalTriple};
use crate::features::FeatureVector;
use crate::ingest::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Fraction of votes cast for `label`.
    pub votes: f64,
}

/// Majority over two classes; ties go to `ClassA`.
fn majority(counts: [usize; 2]) -> Prediction {
    let total = counts[0] + counts[1];
    let label = if counts[1] > counts[0] {
        Label::ClassB
    } else {
        Label::ClassA
    };
    let votes = if total == 0 {
        0.0
    } else {
        counts[label.index()] as f64 / total as f64
    };
    Prediction { label, votes }
}

/// Anything that can be trained on labeled feature vectors.
pub trait Classifier: Sync {
    fn name(&self) -> String;
    fn fit(&self, train: &[FeatureVector], seed: u64) -> Result<Box<dyn Model>>;
}

pub trait Model: Send + Sync {
    fn predict(&self, v: &FeatureVector) -> Result<Prediction>;
}

fn check_schema(expected: &[String], v: &FeatureVector) -> Result<()> {
    if v.names != expected {
        return Err(Error::SchemaMismatch {
            expected: expected.to_vec(),
            found: v.names.clone(),
        });
    }
    Ok(())
}

fn class_counts(vs: &[FeatureVector]) -> [usize; 2] {
    let mut c = [0, 0];
    for v in vs {
        c[v.label.index()] += 1;
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` means `floor(sqrt(feature count))`, at least 1.
    pub features_per_split: Option<usize>,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            features_per_split: None,
            min_leaf: 1,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn mtry(&self, n_features: usize) -> Result<usize> {
        let m = self
            .features_per_split
            .unwrap_or_else(|| ((n_features as f64).sqrt().floor() as usize).max(1));
        if m == 0 || m > n_features {
            return Err(Error::BadParams(format!(
                "features_per_split {m} not in 1..={n_features}"
            )));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        label: Label,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary tree with axis-aligned `x[feature] <= threshold` splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> Label {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label } => return *label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = counts[0] as f64 / n;
    2.0 * p * (1.0 - p)
}

/// Best split of `rows` on one feature: `(gain, threshold)`, or `None` when
/// no threshold leaves `min_leaf` samples on both sides.
pub(crate) fn best_threshold(
    x: &[Vec<f64>],
    y: &[Label],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let mut order: Vec<(f64, Label)> = rows.iter().map(|&r| (x[r][feature], y[r])).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = {
        let mut c = [0, 0];
        for (_, l) in &order {
            c[l.index()] += 1;
        }
        c
    };
    let n = order.len() as f64;
    let parent = gini(total);
    let mut left = [0usize, 0usize];
    let mut best: Option<(f64, f64)> = None;
    for i in 0..order.len() - 1 {
        left[order[i].1.index()] += 1;
        if order[i].0 == order[i + 1].0 {
            continue;
        }
        let nl = i + 1;
        let nr = order.len() - nl;
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let right = [total[0] - left[0], total[1] - left[1]];
        let child = (nl as f64 * gini(left) + nr as f64 * gini(right)) / n;
        let gain = parent - child;
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, 0.5 * (order[i].0 + order[i + 1].0)));
        }
    }
    best
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [Label],
    mtry: usize,
    min_leaf: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: &[usize], rng: &mut ChaCha8Rng) -> usize {
        let mut counts = [0, 0];
        for &r in rows {
            counts[self.y[r].index()] += 1;
        }
        let id = self.nodes.len();
        let leaf = Node::Leaf {
            label: majority(counts).label,
        };
        if counts[0] == 0 || counts[1] == 0 || rows.len() < 2 * self.min_leaf {
            self.nodes.push(leaf);
            return id;
        }
        let n_features = self.x[0].len();
        let mut candidates: Vec<usize> = (0..n_features).collect();
        candidates.shuffle(rng);
        // Keep drawing past `mtry` until some feature admits a split.
        let mut best: Option<(f64, usize, f64)> = None;
        for (tried, &f) in candidates.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some((gain, thr)) = best_threshold(self.x, self.y, rows, f, self.min_leaf) {
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            self.nodes.push(leaf);
            return id;
        };
        self.nodes.push(leaf);
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(&l, rng);
        let right = self.grow(&r, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

/// Trained forest with the bootstrap sample of every tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub bootstraps: Vec<Vec<usize>>,
    pub schema: Vec<String>,
    pub n_train: usize,
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Feature names, row-major values and labels.
type Design = (Vec<String>, Vec<Vec<f64>>, Vec<Label>);

fn design(features: &[FeatureVector]) -> Result<Design> {
    let schema = features.first().ok_or(Error::EmptyTrain)?.names.clone();
    if schema.is_empty() {
        return Err(Error::Invalid("feature vectors have no features".into()));
    }
    for v in features {
        check_schema(&schema, v)?;
    }
    let x = features.iter().map(|v| v.values.clone()).collect();
    let y = features.iter().map(|v| v.label).collect();
    Ok((schema, x, y))
}

/// Grows `n_trees` trees on bootstrap samples. Tree `i` draws all of its
/// randomness from ChaCha stream `i` of `config.seed`.
pub fn train_forest(features: &[FeatureVector], config: &ForestConfig) -> Result<ForestModel> {
    let (schema, x, y) = design(features)?;
    let counts = class_counts(features);
    if counts[0] < 2 || counts[1] < 2 {
        return Err(Error::DegenerateCohort(format!(
            "need at least 2 subjects per class, got {} and {}",
            counts[0], counts[1]
        )));
    }
    if config.n_trees == 0 || config.min_leaf == 0 {
        return Err(Error::BadParams("n_trees and min_leaf must be positive".into()));
    }
    let mtry = config.mtry(schema.len())?;
    let n = features.len();
    let grown: Vec<(Tree, Vec<usize>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(config.seed, t);
            let boot: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = TreeBuilder {
                x: &x,
                y: &y,
                mtry,
                min_leaf: config.min_leaf,
                nodes: Vec::new(),
            };
            b.grow(&boot, &mut rng);
            (Tree { nodes: b.nodes }, boot)
        })
        .collect();
    let (trees, bootstraps) = grown.into_iter().unzip();
    Ok(ForestModel {
        trees,
        bootstraps,
        schema,
        n_train: n,
    })
}

impl ForestModel {
    pub fn predict(&self, v: &FeatureVector) -> Result<Prediction> {
        check_schema(&self.schema, v)?;
        let mut counts = [0, 0];
        for t in &self.trees {
            counts[t.predict_row(&v.values).index()] += 1;
        }
        Ok(majority(counts))
    }

    /// Per-subject OOB predictions for the training set.
    pub fn oob_predictions(&self, features: &[FeatureVector]) -> Result<Vec<Prediction>> {
        if features.len() != self.n_train {
            return Err(Error::Invalid(format!(
                "model trained on {} subjects, got {}",
                self.n_train,
                features.len()
            )));
        }
        for v in features {
            check_schema(&self.schema, v)?;
        }
        let mut votes = vec![[0usize; 2]; features.len()];
        let mut in_bag = vec![false; features.len()];
        for (tree, boot) in self.trees.iter().zip(&self.bootstraps) {
            in_bag.iter_mut().for_each(|b| *b = false);
            for &i in boot {
                in_bag[i] = true;
            }
            for (i, v) in features.iter().enumerate() {
                if !in_bag[i] {
                    votes[i][tree.predict_row(&v.values).index()] += 1;
                }
            }
        }
        votes
            .into_iter()
            .enumerate()
            .map(|(index, c)| {
                if c[0] + c[1] == 0 {
                    Err(Error::NoOobVotes { index })
                } else {
                    Ok(majority(c))
                }
            })
            .collect()
    }

    pub fn summary(&self) -> ForestSummary {
        let mut split_counts = vec![0usize; self.schema.len()];
        for t in &self.trees {
            for f in t.split_features() {
                split_counts[f] += 1;
            }
        }
        let depths: Vec<usize> = self.trees.iter().map(Tree::depth).collect();
        ForestSummary {
            n_trees: self.trees.len(),
            total_nodes: self.trees.iter().map(Tree::node_count).sum(),
            min_depth: depths.iter().copied().min().unwrap_or(0),
            max_depth: depths.iter().copied().max().unwrap_or(0),
            mean_depth: depths.iter().sum::<usize>() as f64 / depths.len().max(1) as f64,
            features: self.schema.clone(),
            split_counts,
        }
    }
}

impl Model for ForestModel {
    fn predict(&self, v: &FeatureVector) -> Result<Prediction> {
        ForestModel::predict(self, v)
    }
}

pub fn predict(model: &ForestModel, v: &FeatureVector) -> Result<Prediction> {
    model.predict(v)
}

/// OOB accuracy and error rates. False positive: `ClassA` predicted
/// `ClassB`; false negative: `ClassB` predicted `ClassA`.
pub fn oob_report(model: &ForestModel, features: &[FeatureVector]) -> Result<EvalTriple> {
    let preds = model.oob_predictions(features)?;
    let mut c = Confusion::default();
    for (v, p) in features.iter().zip(&preds) {
        c.record(v.label, p.label);
    }
    Ok(c.triple())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestSummary {
    pub n_trees: usize,
    pub total_nodes: usize,
    pub min_depth: usize,
    pub max_depth: usize,
    pub mean_depth: f64,
    pub features: Vec<String>,
    pub split_counts: Vec<usize>,
}

impl fmt::Display for ForestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "trees: {}", self.n_trees)?;
        writeln!(f, "nodes: {}", self.total_nodes)?;
        writeln!(
            f,
            "depth: min {} mean {:.2} max {}",
            self.min_depth, self.mean_depth, self.max_depth
        )?;
        for (name, c) in self.features.iter().zip(&self.split_counts) {
            writeln!(f, "splits[{name}]: {c}")?;
        }
        Ok(())
    }
}

impl Classifier for ForestConfig {
    fn name(&self) -> String {
        "RF".into()
    }

    fn fit(&self, train: &[FeatureVector], seed: u64) -> Result<Box<dyn Model>> {
        let cfg = ForestConfig { seed, ..*self };
        Ok(Box::new(train_forest(train, &cfg)?))
    }
}

/// k-nearest neighbours on z-scored features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnnConfig {
    pub k: usize,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5 }
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    schema: Vec<String>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    points: Vec<(Vec<f64>, Label)>,
}

impl KnnModel {
    pub fn fit(train: &[FeatureVector], k: usize) -> Result<KnnModel> {
        if train.is_empty() {
            return Err(Error::EmptyTrain);
        }
        if k == 0 || k.is_multiple_of(2) || k > train.len() {
            return Err(Error::BadParams(format!(
                "k must be odd and in 1..={}, got {k}",
                train.len()
            )));
        }
        let (schema, x, y) = design(train)?;
        let d = schema.len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let points = x
            .iter()
            .zip(y)
            .map(|(r, l)| (standardize(r, &mean, &scale), l))
            .collect();
        Ok(KnnModel {
            k,
            schema,
            mean,
            scale,
            points,
        })
    }
}

fn standardize(row: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    row.iter()
        .zip(mean.iter().zip(scale))
        .map(|(v, (m, s))| (v - m) / s)
        .collect()
}

impl Model for KnnModel {
    fn predict(&self, v: &FeatureVector) -> Result<Prediction> {
        check_schema(&self.schema, v)?;
        let q = standardize(&v.values, &self.mean, &self.scale);
        let mut dist: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum(), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut counts = [0, 0];
        for &(_, i) in &dist[..self.k] {
            counts[self.points[i].1.index()] += 1;
        }
        Ok(majority(counts))
    }
}

impl Classifier for KnnConfig {
    fn name(&self) -> String {
        format!("{}-NN", self.k)
    }

    fn fit(&self, train: &[FeatureVector], _seed: u64) -> Result<Box<dyn Model>> {
        Ok(Box::new(KnnModel::fit(train, self.k)?))
    }
}

/// Majority label of the `k` nearest training points, Euclidean distance on
/// features standardized with the training mean and deviation.
pub fn nn_baseline(train: &[FeatureVector], test: &FeatureVector, k: usize) -> Result<Prediction> {
    KnnModel::fit(train, k)?.predict(test)
}
