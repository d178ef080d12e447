mod common;

use emfe::learners::codec::{decode, encode, load_model, save_model};
use emfe::learners::{ForestParams, KnnParams, Model, ModelKind, ModelSpec, SvmParams, EnsembleParams};
use emfe::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(kind: ModelKind) -> ModelSpec {
    match kind {
        ModelKind::Rf => ModelSpec::Rf(ForestParams { n_estimators: 20, ..Default::default() }),
        ModelKind::Knn => ModelSpec::Knn(KnnParams { n_neighbors: 7, ..Default::default() }),
        ModelKind::Svm => ModelSpec::Svm(SvmParams { max_train_rows: 200, ..Default::default() }),
        ModelKind::Ensemble => ModelSpec::Ensemble(EnsembleParams {
            forest: ForestParams { n_estimators: 20, ..Default::default() },
            ..Default::default()
        }),
        ModelKind::LogReg => ModelSpec::default_for(kind),
    }
}

fn queries(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-4.0..5.0)).collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

#[test]
fn every_family_survives_save_and_load() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (x, y) = common::blobs(&mut rng, 300, 2, 1.5);
    let q = queries(&mut rng, 1000, 2);
    let dir = tempfile::tempdir().unwrap();
    for kind in ModelKind::ALL {
        let model = spec(kind).fit(&x, &y, 42).unwrap();
        let path = dir.path().join(format!("{kind}.emfe"));
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.kind(), kind);
        assert_eq!(loaded.predict(&q), model.predict(&q), "{kind}");
        assert_eq!(encode(&loaded), std::fs::read(&path).unwrap(), "{kind} re-encodes identically");
        if kind == ModelKind::LogReg {
            assert!(std::fs::metadata(&path).unwrap().len() <= 2048);
        }
    }
}

#[test]
fn training_is_byte_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (x, y) = common::blobs(&mut rng, 200, 3, 1.0);
    for kind in ModelKind::ALL {
        let a = encode(&spec(kind).fit(&x, &y, 7).unwrap());
        let b = encode(&spec(kind).fit(&x, &y, 7).unwrap());
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn corrupted_bytes_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (x, y) = common::blobs(&mut rng, 100, 2, 1.0);
    let bytes = encode(&spec(ModelKind::Rf).fit(&x, &y, 1).unwrap());
    for _ in 0..200 {
        let mut bad = bytes.clone();
        let i = rng.gen_range(0..bad.len());
        bad[i] ^= 1 << rng.gen_range(0..8);
        assert!(decode(&bad).is_err());
    }
    assert!(decode(&bytes[..bytes.len() / 2]).is_err());
}

#[test]
fn ensemble_never_overrides_stage_one_negatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (x, y) = common::blobs(&mut rng, 400, 2, 1.0);
    let Model::Ensemble(ens) = spec(ModelKind::Ensemble).fit(&x, &y, 3).unwrap() else {
        unreachable!()
    };
    let q = queries(&mut rng, 10_000, 2);
    let (mut negatives, mut overridden) = (0, 0);
    for row in q.iter_rows() {
        let s1 = ens.stage1.predict_row(row);
        let out = ens.predict_row(row);
        if s1 == 0 {
            negatives += 1;
            assert_eq!(out, 0);
        } else {
            assert_eq!(out, ens.stage2.predict_row(row));
            overridden += u32::from(out == 0);
        }
    }
    assert!(negatives > 1000);
    assert!(overridden > 0);
}
