//! Stratified k-fold cross-validation, percentile bootstrap confidence
//! intervals and Table-style reports.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classify::{oob_report, train_forest, Classifier, ForestConfig};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ingest::Label;

/// Bootstrap runs below this are flagged in reports.
pub const LOW_REPLICATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalTriple {
    pub accuracy: f64,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
}

impl EvalTriple {
    fn component(&self, i: usize) -> f64 {
        match i {
            0 => self.accuracy,
            1 => self.false_positive_rate,
            _ => self.false_negative_rate,
        }
    }

    fn from_components(c: [f64; 3]) -> Self {
        EvalTriple {
            accuracy: c[0],
            false_positive_rate: c[1],
            false_negative_rate: c[2],
        }
    }
}

/// Two-class confusion counts. Class A is the negative (control) class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub a_total: usize,
    pub a_as_b: usize,
    pub b_total: usize,
    pub b_as_a: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match truth {
            Label::ClassA => {
                self.a_total += 1;
                self.a_as_b += usize::from(predicted == Label::ClassB);
            }
            Label::ClassB => {
                self.b_total += 1;
                self.b_as_a += usize::from(predicted == Label::ClassA);
            }
        }
    }

    pub fn total(&self) -> usize {
        self.a_total + self.b_total
    }

    /// Rates of an absent class are reported as 0.
    pub fn triple(&self) -> EvalTriple {
        let rate = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        EvalTriple {
            accuracy: 1.0 - rate(self.a_as_b + self.b_as_a, self.total()),
            false_positive_rate: rate(self.a_as_b, self.a_total),
            false_negative_rate: rate(self.b_as_a, self.b_total),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvConfig {
    pub k: usize,
    pub stratified: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            stratified: true,
        }
    }
}

/// Splits subject indices into `k` folds whose sizes differ by at most one.
/// Stratified partitions deal each class's shuffled members round-robin, so
/// per-fold class counts also differ by at most one.
pub fn fold_partition(labels: &[Label], cfg: &CvConfig, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if cfg.k < 2 || cfg.k > n {
        return Err(Error::BadK { k: cfg.k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if cfg.stratified {
        let mut a: Vec<usize> = (0..n).filter(|&i| labels[i] == Label::ClassA).collect();
        let mut b: Vec<usize> = (0..n).filter(|&i| labels[i] == Label::ClassB).collect();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        a.into_iter().chain(b).collect()
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut folds = vec![Vec::new(); cfg.k];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % cfg.k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub test: Vec<usize>,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub triple: EvalTriple,
    pub folds: Vec<FoldResult>,
}

/// Trains on `k - 1` folds and tests on the held-out one, for each fold.
/// Accuracy is averaged over folds; each error rate over the folds that
/// contain its class.
pub fn kfold_cv(
    features: &[FeatureVector],
    classifier: &dyn Classifier,
    cfg: &CvConfig,
    seed: u64,
) -> Result<CvOutcome> {
    let labels: Vec<Label> = features.iter().map(|v| v.label).collect();
    if !labels.contains(&Label::ClassA) || !labels.contains(&Label::ClassB) {
        return Err(Error::DegenerateCohort("both classes must be present".into()));
    }
    let folds = fold_partition(&labels, cfg, seed)?;
    let mut results = Vec::with_capacity(folds.len());
    for (f, test) in folds.iter().enumerate() {
        let mut in_test = vec![false; features.len()];
        for &i in test {
            in_test[i] = true;
        }
        let train: Vec<FeatureVector> = features
            .iter()
            .zip(&in_test)
            .filter(|(_, t)| !**t)
            .map(|(v, _)| v.clone())
            .collect();
        let model = classifier.fit(&train, derive_seed(seed, f as u64))?;
        let mut confusion = Confusion::default();
        for &i in test {
            confusion.record(features[i].label, model.predict(&features[i])?.label);
        }
        results.push(FoldResult {
            test: test.clone(),
            confusion,
        });
    }
    let mean = |xs: Vec<f64>| {
        if xs.is_empty() {
            0.0
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    };
    let triples: Vec<(EvalTriple, Confusion)> =
        results.iter().map(|r| (r.confusion.triple(), r.confusion)).collect();
    let triple = EvalTriple {
        accuracy: mean(triples.iter().map(|(t, _)| t.accuracy).collect()),
        false_positive_rate: mean(
            triples
                .iter()
                .filter(|(_, c)| c.a_total > 0)
                .map(|(t, _)| t.false_positive_rate)
                .collect(),
        ),
        false_negative_rate: mean(
            triples
                .iter()
                .filter(|(_, c)| c.b_total > 0)
                .map(|(t, _)| t.false_negative_rate)
                .collect(),
        ),
    };
    Ok(CvOutcome {
        triple,
        folds: results,
    })
}

/// Random-forest OOB evaluation as a bootstrap-ready procedure.
pub fn oob_eval(features: &[FeatureVector], forest: &ForestConfig, seed: u64) -> Result<EvalTriple> {
    let cfg = ForestConfig { seed, ..*forest };
    let model = train_forest(features, &cfg)?;
    oob_report(&model, features)
}

/// SplitMix64 of `(seed, index)`; independent child seeds for folds and
/// replications.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub level: f64,
    /// Resample within each class.
    pub stratified: bool,
    /// Reuse the base seed in every replication (same CV partition and forest
    /// streams) instead of drawing a fresh one.
    pub hold_seed: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replications: 10_000,
            level: 0.95,
            stratified: true,
            hold_seed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CIReport {
    pub point: EvalTriple,
    pub ci_low: EvalTriple,
    pub ci_high: EvalTriple,
    pub replications: usize,
    pub level: f64,
}

/// Draws a resample of subject indices with replacement.
pub fn resample(labels: &[Label], stratified: bool, rng: &mut impl Rng) -> Vec<usize> {
    let n = labels.len();
    if !stratified {
        return (0..n).map(|_| rng.gen_range(0..n)).collect();
    }
    let mut out = Vec::with_capacity(n);
    for class in [Label::ClassA, Label::ClassB] {
        let members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        for _ in 0..members.len() {
            out.push(members[rng.gen_range(0..members.len())]);
        }
    }
    out
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap over whole subjects. The point estimate is `eval`
/// on the original cohort with `seed`; replication `r` resamples with
/// stream `r` of `seed`.
pub fn bootstrap_ci<F>(
    features: &[FeatureVector],
    eval: F,
    cfg: &BootstrapConfig,
    seed: u64,
) -> Result<CIReport>
where
    F: Fn(&[FeatureVector], u64) -> Result<EvalTriple> + Sync,
{
    if cfg.replications < 100 {
        return Err(Error::BadParams(format!(
            "bootstrap needs at least 100 replications, got {}",
            cfg.replications
        )));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::BadParams(format!("CI level {} not in (0, 1)", cfg.level)));
    }
    let point = eval(features, seed)?;
    let labels: Vec<Label> = features.iter().map(|v| v.label).collect();
    let draws: Vec<EvalTriple> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let idx = resample(&labels, cfg.stratified, &mut rng);
            let sample: Vec<FeatureVector> = idx.iter().map(|&i| features[i].clone()).collect();
            let s = if cfg.hold_seed { seed } else { derive_seed(seed, r as u64) };
            eval(&sample, s)
        })
        .collect::<Result<_>>()?;
    let alpha = (1.0 - cfg.level) / 2.0;
    let mut low = [0.0; 3];
    let mut high = [0.0; 3];
    for c in 0..3 {
        let mut v: Vec<f64> = draws.iter().map(|t| t.component(c)).collect();
        v.sort_by(f64::total_cmp);
        low[c] = quantile(&v, alpha);
        high[c] = quantile(&v, 1.0 - alpha);
    }
    Ok(CIReport {
        point,
        ci_low: EvalTriple::from_components(low),
        ci_high: EvalTriple::from_components(high),
        replications: cfg.replications,
        level: cfg.level,
    })
}

/// Rendered report: aligned text and `method,metric,point,ci_low,ci_high`
/// delimited rows, all in percent with one decimal.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
    pub warnings: Vec<String>,
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

pub fn render_report(reports: &[(String, CIReport)]) -> Result<Report> {
    if reports.is_empty() {
        return Err(Error::Invalid("no reports to render".into()));
    }
    if reports.iter().any(|(name, _)| name.trim().is_empty()) {
        return Err(Error::Invalid("report name must not be empty".into()));
    }
    let header = [
        "Method".to_string(),
        "Accuracy (%)".to_string(),
        "False Positive (%)".to_string(),
        "False Negative (%)".to_string(),
    ];
    let mut rows: Vec<[String; 4]> = vec![header];
    let mut csv = String::from("method,metric,point,ci_low,ci_high\n");
    let mut warnings = Vec::new();
    for (name, r) in reports {
        rows.push([
            name.clone(),
            pct(r.point.accuracy),
            pct(r.point.false_positive_rate),
            pct(r.point.false_negative_rate),
        ]);
        let ci = |i: usize| format!("({}, {})", pct(r.ci_low.component(i)), pct(r.ci_high.component(i)));
        rows.push([
            format!("{name} {}% CI", pct(r.level).trim_end_matches(".0")),
            ci(0),
            ci(1),
            ci(2),
        ]);
        for (i, metric) in ["accuracy", "false_positive", "false_negative"].iter().enumerate() {
            let _ = writeln!(
                csv,
                "{name},{metric},{},{},{}",
                pct(r.point.component(i)),
                pct(r.ci_low.component(i)),
                pct(r.ci_high.component(i))
            );
        }
        if r.replications < LOW_REPLICATIONS {
            warnings.push(format!(
                "warning: low replications for {name}: {} < {LOW_REPLICATIONS}",
                r.replications
            ));
        }
    }
    let widths: Vec<usize> = (0..4)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(text, "{}", cells.join("  ").trim_end());
    }
    for w in &warnings {
        let _ = writeln!(text, "{w}");
    }
    Ok(Report {
        text,
        csv,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::KnnConfig;

    fn labels(a: usize, b: usize) -> Vec<Label> {
        let mut l = vec![Label::ClassA; a];
        l.extend(vec![Label::ClassB; b]);
        l
    }

    fn cohort(a: usize, b: usize, gap: f64, seed: u64) -> Vec<FeatureVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        labels(a, b)
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let shift = if l == Label::ClassA { 0.0 } else { gap };
                let x = vec![rng.gen::<f64>() + shift, rng.gen::<f64>()];
                FeatureVector::new(format!("s{i}"), l, vec!["x".into(), "y".into()], x).unwrap()
            })
            .collect()
    }

    #[test]
    fn partition_is_stratified_and_complete() {
        let ls = labels(39, 45);
        let folds = fold_partition(&ls, &CvConfig::default(), 3).unwrap();
        let mut seen = vec![0; ls.len()];
        for f in &folds {
            for &i in f {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in &folds {
            let a = f.iter().filter(|&&i| ls[i] == Label::ClassA).count() as f64;
            let expected = 39.0 * f.len() as f64 / 84.0;
            assert!((a - expected).abs() <= 1.0, "{a} vs {expected}");
        }
    }

    #[test]
    fn bad_k() {
        let ls = labels(3, 3);
        assert!(matches!(
            fold_partition(&ls, &CvConfig { k: 7, stratified: true }, 0),
            Err(Error::BadK { k: 7, n: 6 })
        ));
        assert!(fold_partition(&ls, &CvConfig { k: 1, stratified: true }, 0).is_err());
    }

    #[test]
    fn leave_one_out_tests_each_subject_once() {
        let data = cohort(6, 6, 3.0, 1);
        let out = kfold_cv(&data, &KnnConfig { k: 1 }, &CvConfig { k: 12, stratified: true }, 0).unwrap();
        let mut tested: Vec<usize> = out.folds.iter().flat_map(|f| f.test.clone()).collect();
        tested.sort_unstable();
        assert_eq!(tested, (0..12).collect::<Vec<_>>());
        assert!(out.folds.iter().all(|f| f.test.len() == 1));
    }

    #[test]
    fn fold_counts_satisfy_accuracy_identity() {
        let data = cohort(20, 25, 0.5, 7);
        let out = kfold_cv(&data, &ForestConfig { n_trees: 30, ..Default::default() }, &CvConfig::default(), 2)
            .unwrap();
        for f in &out.folds {
            let c = f.confusion;
            let t = c.triple();
            let rhs = 1.0
                - (t.false_positive_rate * c.a_total as f64 + t.false_negative_rate * c.b_total as f64)
                    / c.total() as f64;
            assert!((t.accuracy - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn separable_cv() {
        let data = cohort(30, 30, 2.0, 5);
        let rf = kfold_cv(&data, &ForestConfig { n_trees: 50, ..Default::default() }, &CvConfig::default(), 1)
            .unwrap();
        assert!(rf.triple.accuracy >= 0.95);
        let nn = kfold_cv(&data, &KnnConfig { k: 3 }, &CvConfig::default(), 1).unwrap();
        assert!(nn.triple.accuracy >= 0.9);
    }

    #[test]
    fn constant_eval_gives_zero_width_ci() {
        let data = cohort(5, 5, 1.0, 1);
        let c = EvalTriple {
            accuracy: 0.8,
            false_positive_rate: 0.1,
            false_negative_rate: 0.3,
        };
        let cfg = BootstrapConfig { replications: 200, ..Default::default() };
        let r = bootstrap_ci(&data, |_, _| Ok(c), &cfg, 0).unwrap();
        assert_eq!(r.ci_low, c);
        assert_eq!(r.ci_high, c);
        assert_eq!(r.point, c);
    }

    #[test]
    fn too_few_replications() {
        let data = cohort(5, 5, 1.0, 1);
        let cfg = BootstrapConfig { replications: 99, ..Default::default() };
        assert!(bootstrap_ci(&data, |_, _| Ok(EvalTriple::default()), &cfg, 0).is_err());
    }

    #[test]
    fn stratified_resample_keeps_class_counts() {
        let ls = labels(4, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let idx = resample(&ls, true, &mut rng);
        assert_eq!(idx.iter().filter(|&&i| ls[i] == Label::ClassA).count(), 4);
        assert_eq!(idx.len(), 13);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert_eq!(quantile(&v, 0.125), 0.5);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    fn sample_report(reps: usize) -> CIReport {
        CIReport {
            point: EvalTriple { accuracy: 0.836, false_positive_rate: 0.116, false_negative_rate: 0.207 },
            ci_low: EvalTriple { accuracy: 0.809, false_positive_rate: 0.103, false_negative_rate: 0.178 },
            ci_high: EvalTriple { accuracy: 0.857, false_positive_rate: 0.154, false_negative_rate: 0.222 },
            replications: reps,
            level: 0.95,
        }
    }

    #[test]
    fn report_layout() {
        let r = render_report(&[("RF OOB".into(), sample_report(10_000))]).unwrap();
        let lines: Vec<&str> = r.text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("RF OOB "));
        assert!(lines[1].contains("83.6") && lines[1].contains("11.6") && lines[1].contains("20.7"));
        assert!(lines[2].starts_with("RF OOB 95% CI"));
        assert!(lines[2].contains("(80.9, 85.7)"));
        assert!(r.csv.starts_with("method,metric,point,ci_low,ci_high\n"));
        assert!(r.csv.contains("RF OOB,accuracy,83.6,80.9,85.7\n"));
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn report_order_and_validation() {
        let r = render_report(&[
            ("second".into(), sample_report(1000)),
            ("first".into(), sample_report(100)),
        ])
        .unwrap();
        let s = r.text.find("second").unwrap();
        let f = r.text.find("first").unwrap();
        assert!(s < f);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.text.contains("low replications"));
        assert!(render_report(&[(" ".into(), sample_report(1000))]).is_err());
        assert!(render_report(&[]).is_err());
    }
}
