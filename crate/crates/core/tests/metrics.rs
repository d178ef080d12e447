mod common;

use emfe::dataset::stratified_folds;
use emfe::dataset::Label;
use emfe::evaluation::{
    confusion, cross_validate, random_search, report, search_space, threshold_sweep, ConfusionMatrix, CvResult,
};
use emfe::learners::{train_logreg, LogRegParams, ModelKind, ModelSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const LR_TEST: ConfusionMatrix = ConfusionMatrix { tp: 2013, fn_: 164, fp: 51, tn: 1905 };
const RF_TEST: ConfusionMatrix = ConfusionMatrix { tp: 2140, fn_: 37, fp: 190, tn: 1766 };

#[test]
fn logistic_report_from_published_confusion() {
    let r = report(&LR_TEST).unwrap();
    assert_eq!((r.parasitized.precision, r.parasitized.recall, r.parasitized.f1), (97.53, 92.47, 94.93));
    assert_eq!((r.uninfected.precision, r.uninfected.recall, r.uninfected.f1), (92.07, 97.39, 94.66));
    assert_eq!(r.accuracy, 94.80);
    assert_eq!((r.macro_avg.precision, r.macro_avg.recall, r.macro_avg.f1), (94.80, 94.93, 94.79));
    assert_eq!((r.weighted_avg.recall, r.weighted_avg.f1), (94.80, 94.80));
    assert_eq!(r.parasitized.support + r.uninfected.support, 4133);
}

#[test]
fn forest_report_from_published_confusion() {
    let r = report(&RF_TEST).unwrap();
    assert_eq!((r.parasitized.precision, r.parasitized.recall, r.parasitized.f1), (91.85, 98.30, 94.96));
    assert_eq!((r.uninfected.precision, r.uninfected.recall, r.uninfected.f1), (97.95, 90.29, 93.96));
    assert_eq!((r.macro_avg.precision, r.macro_avg.f1), (94.90, 94.46));
    // 3906 / 4133
    assert_eq!(r.accuracy, 94.51);
}

#[test]
fn confusion_from_label_vectors() {
    let mut truth = vec![1u8; 2177];
    truth.extend(vec![0u8; 1956]);
    let mut pred = vec![1u8; 2013];
    pred.extend(vec![0u8; 164]);
    pred.extend(vec![1u8; 51]);
    pred.extend(vec![0u8; 1905]);
    assert_eq!(confusion(&truth, &pred).unwrap(), LR_TEST);
}

#[test]
fn cv_statistics_use_population_std() {
    let cv = CvResult::from_scores(vec![0.9, 0.92, 0.94]);
    assert!((cv.mean - 0.92).abs() < 1e-12);
    assert!((cv.std - (0.0008f64 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn cross_validation_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (x, y) = common::blobs(&mut rng, 300, 2, 1.5);
    let labels: Vec<Label> = y.iter().map(|&v| Label::try_from(v).unwrap()).collect();
    let folds = stratified_folds(&labels, 5, 42).unwrap();
    let spec = ModelSpec::default_for(ModelKind::Rf);
    let a = cross_validate(&spec, &x, &y, &folds, 42).unwrap();
    let b = cross_validate(&spec, &x, &y, &folds, 42).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.folds.len(), 5);
    assert!(a.mean > 0.7, "{}", a.mean);
}

#[test]
fn search_picks_highest_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (x, y) = common::blobs(&mut rng, 200, 2, 1.5);
    let labels: Vec<Label> = y.iter().map(|&v| Label::try_from(v).unwrap()).collect();
    let folds = stratified_folds(&labels, 3, 42).unwrap();
    let space = search_space(ModelKind::Knn);
    let res = random_search(&space, 8, &x, &y, &folds, 42).unwrap();
    assert_eq!(res.trials.len(), 8);
    let best = res.best_trial();
    assert!(res.trials.iter().all(|t| t.cv.mean <= best.cv.mean));
    let again = random_search(&space, 8, &x, &y, &folds, 42).unwrap();
    assert_eq!(res, again);
}

#[test]
fn threshold_sweep_matches_direct_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (x, y) = common::blobs(&mut rng, 400, 2, 1.2);
    let model = train_logreg(&x, &y, &LogRegParams::default()).unwrap();
    let sweep = threshold_sweep(&model, &x, &y, 0.95);
    let probs: Vec<f64> = x.iter_rows().map(|r| model.predict_proba(r)).collect();
    let positives = y.iter().filter(|&&v| v == 1).count() as f64;
    assert_eq!(sweep.points.first().unwrap().threshold, 0.0);
    assert_eq!(sweep.points.last().unwrap().threshold, 1.0);
    for p in &sweep.points {
        let tp = probs.iter().zip(&y).filter(|(q, &l)| **q >= p.threshold && l == 1).count() as f64;
        assert!((p.recall - tp / positives).abs() < 1e-12);
    }
    for w in sweep.points.windows(2) {
        assert!(w[0].threshold < w[1].threshold);
        assert!(w[0].recall >= w[1].recall);
    }
    let chosen = sweep.selected.unwrap();
    assert!(chosen.recall >= 0.95);
    assert!(sweep.points.iter().filter(|p| p.threshold > chosen.threshold).all(|p| p.recall < 0.95));
    assert_eq!(sweep.points[0].recall, 1.0);
}
