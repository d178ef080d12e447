//! Metrics, cross-validation, randomized hyperparameter search, threshold
//! analysis, ensemble validation and coefficient stability.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

use crate::dataset::fold_train;
use crate::error::{Error, Result};
use crate::learners::ensemble::combine;
use crate::learners::{
    train_logreg, train_random_forest, Criterion, EnsembleParams, ForestParams, KnnParams, LogRegParams,
    LogisticRegression, MaxFeatures, Metric, Model, ModelKind, ModelSpec, Penalty, SvmParams,
};
use crate::matrix::{select, Matrix};

/// Derive an independent stream seed for worker `index`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Round half-up to two decimals.
pub fn round2(v: f64) -> f64 {
    (v * 100.0 + 0.5).floor() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fn_ += other.fn_;
        self.fp += other.fp;
        self.tn += other.tn;
    }
}

/// Tally predictions against truth; class 1 (Parasitized) is positive.
pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fn_ += 1,
            (0, 1) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            _ => return Err(Error::NonBinaryLabels),
        }
    }
    Ok(cm)
}

/// Percentages, rounded to two decimals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub parasitized: ClassMetrics,
    pub uninfected: ClassMetrics,
    pub accuracy: f64,
    pub macro_avg: ClassMetrics,
    pub weighted_avg: ClassMetrics,
    /// Metrics whose denominator was zero; they are reported as 0.
    pub undefined: Vec<String>,
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_string());
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    if cm.total() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut undefined = Vec::new();
    let p_prec = ratio(cm.tp, cm.tp + cm.fp, "parasitized.precision", &mut undefined);
    let p_rec = ratio(cm.tp, cm.tp + cm.fn_, "parasitized.recall", &mut undefined);
    let u_prec = ratio(cm.tn, cm.tn + cm.fn_, "uninfected.precision", &mut undefined);
    let u_rec = ratio(cm.tn, cm.tn + cm.fp, "uninfected.recall", &mut undefined);
    let (p_f1, u_f1) = (f1(p_prec, p_rec), f1(u_prec, u_rec));
    let (sp, su) = (cm.tp + cm.fn_, cm.tn + cm.fp);
    let total = cm.total() as f64;
    let wavg = |a: f64, b: f64| (a * sp as f64 + b * su as f64) / total;
    let pct = |v: f64| round2(100.0 * v);
    let metrics = |p: f64, r: f64, f: f64, s: u64| ClassMetrics {
        precision: pct(p),
        recall: pct(r),
        f1: pct(f),
        support: s,
    };
    Ok(ClassificationReport {
        parasitized: metrics(p_prec, p_rec, p_f1, sp),
        uninfected: metrics(u_prec, u_rec, u_f1, su),
        accuracy: pct(cm.accuracy()),
        macro_avg: metrics(
            (p_prec + u_prec) / 2.0,
            (p_rec + u_rec) / 2.0,
            (p_f1 + u_f1) / 2.0,
            sp + su,
        ),
        weighted_avg: metrics(wavg(p_prec, u_prec), wavg(p_rec, u_rec), wavg(p_f1, u_f1), sp + su),
        undefined,
    })
}

/// Confusion matrix and report of `model` on `(x, y)`.
pub fn evaluate(model: &Model, x: &Matrix, y: &[u8]) -> Result<(ConfusionMatrix, ClassificationReport)> {
    let cm = confusion(y, &model.predict(x))?;
    let rep = report(&cm)?;
    Ok((cm, rep))
}

/// Per-fold accuracies as fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub folds: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl CvResult {
    pub fn from_scores(folds: Vec<f64>) -> Self {
        let n = folds.len().max(1) as f64;
        let mean = folds.iter().sum::<f64>() / n;
        let std = (folds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { folds, mean, std }
    }

    pub fn mean_pct(&self) -> f64 {
        round2(100.0 * self.mean)
    }

    pub fn std_pct(&self) -> f64 {
        round2(100.0 * self.std)
    }
}

fn annotate(fold: usize) -> impl Fn(Error) -> Error {
    move |e| Error::Fold {
        fold,
        source: Box::new(e),
    }
}

/// Train a fresh model per fold and score it on the held-out positions.
/// `folds` index rows of `x`; fold `i` trains with seed `derive_seed(seed, i)`.
pub fn cross_validate(spec: &ModelSpec, x: &Matrix, y: &[u8], folds: &[Vec<usize>], seed: u64) -> Result<CvResult> {
    let scores = folds
        .par_iter()
        .enumerate()
        .map(|(i, test)| {
            let train = fold_train(folds, i);
            let model = spec
                .fit(&x.select(&train), &select(y, &train), derive_seed(seed, i as u64))
                .map_err(annotate(i))?;
            let pred = model.predict(&x.select(test));
            let cm = confusion(&select(y, test), &pred)?;
            Ok(cm.accuracy())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(CvResult::from_scores(scores))
}

/// Model families with a tuning grid.
pub fn search_space(kind: ModelKind) -> Vec<ModelSpec> {
    const CS: [f64; 5] = [0.01, 0.1, 1.0, 10.0, 100.0];
    match kind {
        ModelKind::LogReg => {
            let mut out = Vec::new();
            for penalty in [Penalty::L1, Penalty::L2, Penalty::ElasticNet] {
                for c in CS {
                    out.push(ModelSpec::LogReg(LogRegParams {
                        penalty,
                        c,
                        ..Default::default()
                    }));
                }
            }
            // C has no effect without a penalty
            out.push(ModelSpec::LogReg(LogRegParams {
                penalty: Penalty::None,
                ..Default::default()
            }));
            out
        }
        ModelKind::Rf => {
            let mut out = Vec::new();
            for n_estimators in [100, 200, 500] {
                for max_depth in [None, Some(10), Some(20), Some(30)] {
                    for min_samples_split in [2, 5, 10] {
                        for min_samples_leaf in [1, 2, 4] {
                            for max_features in [MaxFeatures::Sqrt, MaxFeatures::Log2] {
                                for criterion in [Criterion::Gini, Criterion::Entropy] {
                                    out.push(ModelSpec::Rf(ForestParams {
                                        n_estimators,
                                        max_depth,
                                        min_samples_split,
                                        min_samples_leaf,
                                        max_features,
                                        criterion,
                                        bootstrap: true,
                                    }));
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        ModelKind::Knn => {
            let mut out = Vec::new();
            for n_neighbors in 1..=20 {
                for metric in Metric::SEARCH_SPACE {
                    out.push(ModelSpec::Knn(KnnParams { n_neighbors, metric }));
                }
            }
            out
        }
        ModelKind::Svm => vec![ModelSpec::Svm(SvmParams::default())],
        ModelKind::Ensemble => vec![ModelSpec::Ensemble(EnsembleParams::default())],
    }
}

pub const DEFAULT_SEARCH_SAMPLES: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub spec: ModelSpec,
    pub cv: CvResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    pub best: usize,
}

impl SearchResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

/// The configurations a seeded search evaluates, in order: a prefix of a
/// seeded shuffle of the grid (the whole grid when `n_samples` covers it).
pub fn sample_configs(space: &[ModelSpec], n_samples: usize, seed: u64) -> Result<Vec<ModelSpec>> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    let mut order: Vec<usize> = (0..space.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.truncate(n_samples.clamp(1, space.len()));
    Ok(order.into_iter().map(|i| space[i]).collect())
}

/// Score sampled configurations by cross-validation on shared folds. The best
/// trial has the highest mean; ties prefer lower std, then earlier samples.
pub fn random_search(
    space: &[ModelSpec],
    n_samples: usize,
    x: &Matrix,
    y: &[u8],
    folds: &[Vec<usize>],
    seed: u64,
) -> Result<SearchResult> {
    let configs = sample_configs(space, n_samples, seed)?;
    let mut trials = Vec::with_capacity(configs.len());
    for (i, spec) in configs.into_iter().enumerate() {
        let cv = cross_validate(&spec, x, y, folds, derive_seed(seed, i as u64))?;
        log::info!("trial {i}: {} mean {:.4} std {:.4}", spec.kind(), cv.mean, cv.std);
        trials.push(Trial { spec, cv });
    }
    let mut best = 0;
    for (i, t) in trials.iter().enumerate().skip(1) {
        let b = &trials[best].cv;
        if t.cv.mean > b.mean || (t.cv.mean == b.mean && t.cv.std < b.std) {
            best = i;
        }
    }
    Ok(SearchResult { trials, best })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    /// Parasitized precision; 1 when nothing is predicted positive.
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSweep {
    pub points: Vec<SweepPoint>,
    pub target_recall: f64,
    /// Largest threshold whose Parasitized recall reaches the target.
    pub selected: Option<SweepPoint>,
    pub warning: String,
}

/// Precision/recall of the Parasitized class as the decision threshold
/// varies over `0`, every distinct predicted probability, and `1`. A sample
/// is called positive when its probability is at least the threshold.
pub fn threshold_sweep(model: &LogisticRegression, x: &Matrix, y: &[u8], target_recall: f64) -> ThresholdSweep {
    let mut scored: Vec<(f64, u8)> = x.iter_rows().map(|r| model.predict_proba(r)).zip(y.iter().copied()).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = y.iter().filter(|&&v| v == 1).count() as f64;

    let mut thresholds: Vec<f64> = scored.iter().map(|s| s.0).collect();
    thresholds.push(0.0);
    thresholds.push(1.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len());
    // walk thresholds from high to low, admitting samples with p >= t
    let (mut k, mut tp, mut fp) = (0usize, 0f64, 0f64);
    for &t in thresholds.iter().rev() {
        while k < scored.len() && scored[k].0 >= t {
            if scored[k].1 == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        points.push(SweepPoint {
            threshold: t,
            precision: if tp + fp > 0.0 { tp / (tp + fp) } else { 1.0 },
            recall: if positives > 0.0 { tp / positives } else { 0.0 },
        });
    }
    points.reverse();
    let selected = points.iter().rev().find(|p| p.recall >= target_recall).copied();
    ThresholdSweep {
        points,
        target_recall,
        selected,
        warning: "threshold chosen on the evaluation split; select it on a validation subset before deployment"
            .into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub mean_difference: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided paired t-test on `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: a.len(),
        });
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let df = n - 1.0;
    if var == 0.0 {
        let (t, p) = if mean == 0.0 { (0.0, 1.0) } else { (mean.signum() * f64::INFINITY, 0.0) };
        return Ok(PairedTTest {
            mean_difference: mean,
            t,
            df,
            p_value: p,
        });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p_value = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok(PairedTTest {
        mean_difference: mean,
        t,
        df,
        p_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// First classifier right, second wrong.
    pub b: u64,
    /// First classifier wrong, second right.
    pub c: u64,
    pub statistic: f64,
    pub p_value: f64,
}

/// McNemar's test with continuity correction on paired predictions.
pub fn mcnemar(y: &[u8], first: &[u8], second: &[u8]) -> McNemar {
    let (mut b, mut c) = (0u64, 0u64);
    for ((&t, &p1), &p2) in y.iter().zip(first).zip(second) {
        match (p1 == t, p2 == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    if b + c == 0 {
        return McNemar {
            b,
            c,
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let diff = (b as f64 - c as f64).abs() - 1.0;
    let statistic = diff.max(0.0).powi(2) / (b + c) as f64;
    let p_value = 1.0 - ChiSquared::new(1.0).expect("df 1").cdf(statistic);
    McNemar {
        b,
        c,
        statistic,
        p_value,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCv {
    pub ensemble: CvResult,
    pub logreg: CvResult,
    pub forest: CvResult,
    pub best_single: ModelKind,
    pub t_test: PairedTTest,
    pub mcnemar: McNemar,
    /// Ensemble predictions pooled over all held-out folds.
    pub pooled_confusion: ConfusionMatrix,
}

type Pick = fn(&FoldOutcome) -> &Vec<u8>;

struct FoldOutcome {
    truth: Vec<u8>,
    lr: Vec<u8>,
    rf: Vec<u8>,
    ens: Vec<u8>,
}

/// k-fold validation of the two-stage ensemble against its own stages.
pub fn evaluate_ensemble_cv(
    x: &Matrix,
    y: &[u8],
    folds: &[Vec<usize>],
    params: &EnsembleParams,
    seed: u64,
) -> Result<EnsembleCv> {
    let outcomes = folds
        .par_iter()
        .enumerate()
        .map(|(i, test)| {
            let train = fold_train(folds, i);
            let (xt, yt) = (x.select(&train), select(y, &train));
            let lr = train_logreg(&xt, &yt, &params.logreg).map_err(annotate(i))?;
            let rf = train_random_forest(&xt, &yt, &params.forest, derive_seed(seed, i as u64)).map_err(annotate(i))?;
            let xs = x.select(test);
            let lr_pred: Vec<u8> = xs.iter_rows().map(|r| lr.predict_row(r)).collect();
            let rf_pred: Vec<u8> = xs.iter_rows().map(|r| rf.predict_row(r)).collect();
            let ens = lr_pred.iter().zip(&rf_pred).map(|(&a, &b)| combine(a, || b)).collect();
            Ok(FoldOutcome {
                truth: select(y, test),
                lr: lr_pred,
                rf: rf_pred,
                ens,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let acc = |pick: Pick| -> Result<CvResult> {
        let scores = outcomes
            .iter()
            .map(|o| confusion(&o.truth, pick(o)).map(|cm| cm.accuracy()))
            .collect::<Result<Vec<_>>>()?;
        Ok(CvResult::from_scores(scores))
    };
    let ensemble = acc(|o| &o.ens)?;
    let logreg = acc(|o| &o.lr)?;
    let forest = acc(|o| &o.rf)?;
    let (best_single, best_cv, best_pick): (ModelKind, &CvResult, Pick) =
        if forest.mean > logreg.mean {
            (ModelKind::Rf, &forest, |o| &o.rf)
        } else {
            (ModelKind::LogReg, &logreg, |o| &o.lr)
        };
    let t_test = paired_t_test(&ensemble.folds, &best_cv.folds)?;

    let truth: Vec<u8> = outcomes.iter().flat_map(|o| o.truth.iter().copied()).collect();
    let ens_all: Vec<u8> = outcomes.iter().flat_map(|o| o.ens.iter().copied()).collect();
    let best_all: Vec<u8> = outcomes.iter().flat_map(|o| best_pick(o).iter().copied()).collect();
    let mcnemar = mcnemar(&truth, &ens_all, &best_all);
    let pooled_confusion = confusion(&truth, &ens_all)?;

    Ok(EnsembleCv {
        ensemble,
        logreg,
        forest,
        best_single,
        t_test,
        mcnemar,
        pooled_confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientStability {
    /// Standardized-unit weights per run.
    pub runs: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Per-coefficient maximum absolute deviation from the run mean.
    pub max_deviation: Vec<f64>,
    pub all_positive: bool,
    /// Sign pattern of each run, `+1`, `0` or `-1` per coefficient.
    pub signs: Vec<Vec<i8>>,
}

/// Retrain logistic regression on `n_runs` seeded row permutations.
pub fn coefficient_stability(
    x: &Matrix,
    y: &[u8],
    params: &LogRegParams,
    n_runs: usize,
    base_seed: u64,
) -> Result<CoefficientStability> {
    if n_runs == 0 {
        return Err(Error::EmptyInput);
    }
    let runs = (0..n_runs)
        .map(|run| {
            let mut order: Vec<usize> = (0..x.rows()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(base_seed, run as u64)));
            let m = train_logreg(&x.select(&order), &select(y, &order), params)?;
            Ok(m.weights)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(stability_summary(runs))
}

pub fn stability_summary(runs: Vec<Vec<f64>>) -> CoefficientStability {
    let d = runs[0].len();
    let n = runs.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| runs.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let max_deviation = (0..d)
        .map(|j| runs.iter().map(|r| (r[j] - mean[j]).abs()).fold(0.0, f64::max))
        .collect();
    let signs: Vec<Vec<i8>> = runs
        .iter()
        .map(|r| r.iter().map(|v| if *v > 0.0 { 1 } else if *v < 0.0 { -1 } else { 0 }).collect())
        .collect();
    let all_positive = signs.iter().flatten().all(|&s| s == 1);
    CoefficientStability {
        runs,
        mean,
        max_deviation,
        all_positive,
        signs,
    }
}

fn rule(out: &mut String, width: usize) {
    out.push_str(&"-".repeat(width));
    out.push('\n');
}

/// Confusion matrices laid out with actual classes as rows.
pub fn confusion_table(rows: &[(&str, ConfusionMatrix)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22}{:<14}{:>22}{:>22}", "Model", "Actual Class", "Predicted Parasitized", "Predicted Uninfected");
    rule(&mut out, 80);
    for (name, cm) in rows {
        let _ = writeln!(out, "{:<22}{:<14}{:>22}{:>22}", name, "Parasitized", cm.tp, cm.fn_);
        let _ = writeln!(out, "{:<22}{:<14}{:>22}{:>22}", "", "Uninfected", cm.fp, cm.tn);
    }
    out
}

/// Per-class precision/recall/F1 plus accuracy and averages.
pub fn report_table(rows: &[(&str, ClassificationReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<22}{:<14}{:>14}{:>12}{:>14}", "Model", "Class", "Precision (%)", "Recall (%)", "F1-Score (%)");
    rule(&mut out, 76);
    for (name, r) in rows {
        let line = |out: &mut String, model: &str, class: &str, m: &ClassMetrics| {
            let _ = writeln!(out, "{:<22}{:<14}{:>14.2}{:>12.2}{:>14.2}", model, class, m.precision, m.recall, m.f1);
        };
        line(&mut out, name, "Parasitized", &r.parasitized);
        line(&mut out, "", "Uninfected", &r.uninfected);
        let _ = writeln!(out, "{:<22}{:<14}{:>26.2}", "", "Accuracy", r.accuracy);
        line(&mut out, "", "Macro Avg", &r.macro_avg);
        line(&mut out, "", "Weighted Avg", &r.weighted_avg);
        rule(&mut out, 76);
    }
    out
}

pub fn cv_table(rows: &[(&str, &CvResult)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24}{:>16}{:>12}", "Model", "Mean Accuracy", "Std. Dev.");
    rule(&mut out, 52);
    for (name, cv) in rows {
        let _ = writeln!(out, "{:<24}{:>15.2}%{:>11.2}%", name, cv.mean_pct(), cv.std_pct());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_basics() {
        let y = [1, 1, 0, 0, 1];
        let cm = confusion(&y, &y).unwrap();
        assert_eq!((cm.fn_, cm.fp), (0, 0));
        let truth: Vec<u8> = (0..20).map(|i| u8::from(i < 10)).collect();
        let cm = confusion(&truth, &[1; 20]).unwrap();
        assert_eq!(cm, ConfusionMatrix { tp: 10, fn_: 0, fp: 10, tn: 0 });
        assert!(matches!(confusion(&[1], &[1, 0]), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn perfect_symmetric_report() {
        let r = report(&ConfusionMatrix { tp: 50, fn_: 0, fp: 0, tn: 50 }).unwrap();
        for m in [r.parasitized, r.uninfected, r.macro_avg, r.weighted_avg] {
            assert_eq!((m.precision, m.recall, m.f1), (100.0, 100.0, 100.0));
        }
        assert_eq!(r.accuracy, 100.0);
        assert!(r.undefined.is_empty());
    }

    #[test]
    fn undefined_metrics_are_flagged() {
        let r = report(&ConfusionMatrix { tp: 0, fn_: 5, fp: 0, tn: 5 }).unwrap();
        assert_eq!(r.parasitized.precision, 0.0);
        assert_eq!(r.undefined, vec!["parasitized.precision".to_string()]);
        assert!(report(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round2(94.925), 94.93);
        assert_eq!(round2(0.004), 0.0);
        assert_eq!(round2(12.345_000_1), 12.35);
    }

    #[test]
    fn search_space_sizes() {
        assert_eq!(search_space(ModelKind::LogReg).len(), 16);
        assert_eq!(search_space(ModelKind::Rf).len(), 432);
        assert_eq!(search_space(ModelKind::Knn).len(), 120);
    }

    #[test]
    fn sampling_is_seeded_and_distinct() {
        let space = search_space(ModelKind::Knn);
        let a = sample_configs(&space, 25, 42).unwrap();
        assert_eq!(a, sample_configs(&space, 25, 42).unwrap());
        assert_eq!(a.len(), 25);
        for (i, s) in a.iter().enumerate() {
            assert!(!a[..i].contains(s));
        }
        assert_eq!(sample_configs(&space[..1], 25, 1).unwrap(), vec![space[0]]);
        assert!(matches!(sample_configs(&[], 3, 1), Err(Error::EmptySpace)));
    }

    #[test]
    fn t_test_known_value() {
        // differences 1, 2, 3, 4: mean 2.5, sd 1.291, t = 3.873, df 3, p = 0.0305
        let a = [2.0, 4.0, 6.0, 8.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let t = paired_t_test(&a, &b).unwrap();
        assert!((t.t - 3.872_983).abs() < 1e-5);
        assert!((t.p_value - 0.030_466).abs() < 1e-4, "{}", t.p_value);
        let same = paired_t_test(&a, &a).unwrap();
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn mcnemar_counts() {
        let y = [1, 1, 1, 0, 0, 0];
        let first = [1, 1, 1, 0, 0, 1];
        let second = [0, 0, 1, 0, 1, 1];
        let m = mcnemar(&y, &first, &second);
        assert_eq!((m.b, m.c), (3, 0));
        assert!((m.statistic - 4.0 / 3.0).abs() < 1e-12);
        assert!(m.p_value > 0.2 && m.p_value < 0.3);
    }

    #[test]
    fn stability_summary_zero_deviation() {
        let s = stability_summary(vec![vec![2.0, 0.5]; 4]);
        assert_eq!(s.max_deviation, vec![0.0, 0.0]);
        assert!(s.all_positive);
    }

    #[test]
    fn tables_render() {
        let cm = ConfusionMatrix { tp: 2013, fn_: 164, fp: 51, tn: 1905 };
        let t = confusion_table(&[("Logistic Regression", cm)]);
        assert!(t.contains("2013") && t.contains("1905"));
        let r = report_table(&[("Logistic Regression", report(&cm).unwrap())]);
        assert!(r.contains("97.53") && r.contains("Weighted Avg"));
        let cv = CvResult::from_scores(vec![0.948, 0.95]);
        assert!(cv_table(&[("LR", &cv)]).contains("94.90%"));
    }
}
