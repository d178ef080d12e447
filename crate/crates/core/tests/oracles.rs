mod common;

use emfe::dataset::{pearson_correlation_matrix, FeatureTable, Label, Sample, TableMetadata};
use emfe::imaging::{intensity_histogram, otsu_bin, otsu_threshold, GrayImage};
use emfe::learners::logistic::{objective, smooth_loss_and_grad};
use emfe::learners::{train_knn, train_random_forest, ForestParams, KnnParams, MaxFeatures, Metric, Penalty};
use emfe::learners::forest::Node;
use emfe::morphology::{count_holes, label_components, Connectivity, FeatureVector, Target};
use emfe::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn otsu_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let sparse = case % 3 == 0;
        let counts: Vec<u64> = (0..256)
            .map(|_| if sparse && rng.gen_bool(0.8) { 0 } else { rng.gen_range(0..1000) })
            .collect();
        assert_eq!(otsu_bin(&counts), otsu_brute(&counts), "case {case}");
    }
}

#[test]
fn otsu_ties_and_degenerate_histograms() {
    // symmetric two-spike histogram: every cut between the spikes is optimal
    let mut counts = vec![0u64; 256];
    counts[10] = 50;
    counts[200] = 50;
    assert_eq!(otsu_bin(&counts), Some(10));
    assert_eq!(otsu_brute(&counts), Some(10));
    let mut single = vec![0u64; 256];
    single[7] = 9;
    assert_eq!(otsu_bin(&single), None);
}

#[test]
fn otsu_threshold_on_bimodal_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data: Vec<f64> = (0..4096)
        .map(|i| if i % 3 == 0 { rng.gen_range(0.7..0.9) } else { rng.gen_range(0.1..0.3) })
        .collect();
    let img = GrayImage::new(64, 64, data).unwrap();
    let t = otsu_threshold(&img).unwrap();
    assert!(t > 0.3 && t < 0.7, "threshold {t}");
    let hist = intensity_histogram(&img).unwrap();
    assert_eq!(hist.bin_center(otsu_brute(&hist.counts).unwrap()), t);
}

#[test]
fn holes_match_border_flood() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..10_000 {
        let density = 0.2 + 0.6 * (case as f64 / 9_999.0);
        let mask = random_mask(&mut rng, 16, 16, density);
        for conn in [Connectivity::Four, Connectivity::Eight] {
            assert_eq!(count_holes(&mask, conn), holes_by_border_flood(&mask, conn), "case {case} {conn}");
        }
    }
}

#[test]
fn labels_match_flood_fill() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..500 {
        let (w, h) = (rng.gen_range(1..24), rng.gen_range(1..24));
        let density = rng.gen_range(0.2..0.8);
        let mask = random_mask(&mut rng, w, h, density);
        for conn in [Connectivity::Four, Connectivity::Eight] {
            for (target, want) in [(Target::Foreground, true), (Target::Background, false)] {
                let map = label_components(&mask, target, conn);
                let expected = labels_by_flood(&mask, want, conn);
                assert_eq!(map.labels(), expected.as_slice(), "case {case}");
                assert_eq!(map.component_count(), expected.iter().copied().max().unwrap_or(0));
            }
        }
    }
}

#[test]
fn correlation_matches_exact_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let samples: Vec<Sample> = (0..200)
            .map(|i| {
                let label = if rng.gen_bool(0.5) { Label::Parasitized } else { Label::Uninfected };
                let fg = rng.gen_range(2000..14000) + if label == Label::Parasitized { 800 } else { 0 };
                Sample {
                    path: format!("s{i}.png"),
                    label,
                    features: FeatureVector {
                        foreground: fg,
                        background: 16384 - fg,
                        holes: rng.gen_range(0..6),
                    },
                }
            })
            .collect();
        let table = FeatureTable::new(samples, TableMetadata::default()).unwrap();
        let m = pearson_correlation_matrix(&table).unwrap();
        let s = table.samples();
        let cols: [Vec<i64>; 4] = [
            s.iter().map(|v| v.features.foreground as i64).collect(),
            s.iter().map(|v| v.features.background as i64).collect(),
            s.iter().map(|v| v.features.holes as i64).collect(),
            s.iter().map(|v| v.label.as_u8() as i64).collect(),
        ];
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { pearson_exact(&cols[i], &cols[j]) };
                assert!((m.values[i][j] - want).abs() < 1e-12, "({i},{j}) {} vs {want}", m.values[i][j]);
            }
        }
        assert!((m.get("foreground", "background").unwrap() + 1.0).abs() < 1e-12);
    }
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-2))
        .fold(0.0, f64::max)
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (x, y) = blobs(&mut rng, 120, 3, 1.0);
    let h = 1e-6;
    for point in 0..20 {
        let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let c = [0.01, 0.1, 1.0, 10.0, 100.0][point % 5];
        for penalty in Penalty::ALL {
            let (loss, grad) = smooth_loss_and_grad(&x, &y, &theta, penalty, c);
            let fd: Vec<f64> = (0..theta.len())
                .map(|k| {
                    let (mut up, mut down) = (theta.clone(), theta.clone());
                    up[k] += h;
                    down[k] -= h;
                    (smooth_loss_and_grad(&x, &y, &up, penalty, c).0 - smooth_loss_and_grad(&x, &y, &down, penalty, c).0)
                        / (2.0 * h)
                })
                .collect();
            assert!(max_rel_err(&grad, &fd) < 1e-4, "{penalty} at point {point}");

            // the full objective agrees with its definition
            let full = objective(&x, &y, &theta, penalty, c);
            let want = logistic_objective(&x, &y, &theta, penalty, c);
            assert!((full - want).abs() < 1e-10, "{penalty}: {full} vs {want}");
            assert!(loss <= full + 1e-12);
        }
    }
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..30 {
        // coarse integer grid forces distance ties
        let rows: Vec<[f64; 2]> = (0..60).map(|_| [rng.gen_range(0..8) as f64, rng.gen_range(0..5) as f64]).collect();
        let y: Vec<u8> = (0..60).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let metric = Metric::SEARCH_SPACE[case % 6];
        let k = 1 + case % 20;
        let model = train_knn(&x, &y, &KnnParams { n_neighbors: k, metric }).unwrap();
        for _ in 0..40 {
            let q = [rng.gen_range(-1.0..9.0), rng.gen_range(-1.0..6.0)];
            let want = knn_brute(&x, &y, k, |a, b| metric.distance(a, b), &q);
            assert_eq!(model.predict_row(&q), want, "case {case} {metric} k={k}");
        }
    }
}

#[test]
fn stump_matches_exhaustive_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = ForestParams {
        n_estimators: 1,
        max_depth: Some(1),
        max_features: MaxFeatures::All,
        bootstrap: false,
        ..Default::default()
    };
    let mut checked = 0;
    for case in 0..200 {
        let rows: Vec<[f64; 3]> = (0..40)
            .map(|_| [rng.gen_range(0..30) as f64, rng.gen_range(0.0..1.0), rng.gen_range(0..4) as f64])
            .collect();
        let y: Vec<u8> = rows.iter().map(|r| u8::from(r[0] + 20.0 * r[1] + rng.gen_range(-8.0..8.0) > 25.0)).collect();
        if y.iter().all(|&v| v == y[0]) {
            continue;
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let forest = train_random_forest(&x, &y, &params, case).unwrap();
        let mut cands = stump_candidates(&x, &y);
        cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let Node::Split { feature, threshold, .. } = forest.trees[0].nodes[0] else {
            panic!("root should split");
        };
        let chosen = cands
            .iter()
            .find(|c| c.1 == feature as usize && c.2 == threshold)
            .expect("split is a candidate");
        assert!((chosen.0 - cands[0].0).abs() < 1e-9, "case {case}: not optimal");
        if cands.len() > 1 && cands[1].0 - cands[0].0 > 1e-9 {
            assert_eq!((feature as usize, threshold), (cands[0].1, cands[0].2));
            checked += 1;
        }
    }
    assert!(checked > 50);
}
