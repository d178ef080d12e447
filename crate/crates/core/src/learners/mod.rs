//! From-scratch classical classifiers, their hyperparameter specs and a
//! compact binary model format.

pub mod codec;
pub mod ensemble;
pub mod forest;
pub mod knn;
pub mod logistic;
pub mod standardize;
pub mod svm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ensemble::{train_ensemble, EnsembleParams, TwoStageEnsemble};
pub use forest::{train_random_forest, Criterion, ForestParams, MaxFeatures, RandomForest};
pub use knn::{train_knn, Knn, KnnParams, Metric};
pub use logistic::{train_logreg, LogRegParams, LogisticRegression, Penalty};
pub use standardize::Standardizer;
pub use svm::{train_svm_rbf, SvmParams, SvmRbf};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub(crate) fn check_binary(y: &[u8]) -> Result<()> {
    if y.iter().any(|&v| v > 1) {
        return Err(Error::NonBinaryLabels);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    LogReg,
    Rf,
    Knn,
    Svm,
    Ensemble,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::LogReg,
        ModelKind::Rf,
        ModelKind::Knn,
        ModelKind::Svm,
        ModelKind::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "logreg",
            ModelKind::Rf => "rf",
            ModelKind::Knn => "knn",
            ModelKind::Svm => "svm",
            ModelKind::Ensemble => "ensemble",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::LogReg => "Logistic Regression",
            ModelKind::Rf => "Random Forest",
            ModelKind::Knn => "K-Nearest Neighbors",
            ModelKind::Svm => "SVM (RBF Kernel)",
            ModelKind::Ensemble => "Two-Stage Ensemble",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model family `{s}`")))
    }
}

/// A model family together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum ModelSpec {
    LogReg(LogRegParams),
    Rf(ForestParams),
    Knn(KnnParams),
    Svm(SvmParams),
    Ensemble(EnsembleParams),
}

impl ModelSpec {
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::LogReg => ModelSpec::LogReg(LogRegParams::default()),
            ModelKind::Rf => ModelSpec::Rf(ForestParams::default()),
            ModelKind::Knn => ModelSpec::Knn(KnnParams::default()),
            ModelKind::Svm => ModelSpec::Svm(SvmParams::default()),
            ModelKind::Ensemble => ModelSpec::Ensemble(EnsembleParams::default()),
        }
    }

    /// Parse hyperparameters for `kind` from a JSON object; missing keys
    /// take their defaults.
    pub fn from_json(kind: ModelKind, params: &serde_json::Value) -> Result<Self> {
        let bad = |e: serde_json::Error| Error::InvalidArgument(format!("bad {kind} parameters: {e}"));
        Ok(match kind {
            ModelKind::LogReg => ModelSpec::LogReg(serde_json::from_value(params.clone()).map_err(bad)?),
            ModelKind::Rf => ModelSpec::Rf(serde_json::from_value(params.clone()).map_err(bad)?),
            ModelKind::Knn => ModelSpec::Knn(serde_json::from_value(params.clone()).map_err(bad)?),
            ModelKind::Svm => ModelSpec::Svm(serde_json::from_value(params.clone()).map_err(bad)?),
            ModelKind::Ensemble => ModelSpec::Ensemble(serde_json::from_value(params.clone()).map_err(bad)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::LogReg(_) => ModelKind::LogReg,
            ModelSpec::Rf(_) => ModelKind::Rf,
            ModelSpec::Knn(_) => ModelKind::Knn,
            ModelSpec::Svm(_) => ModelKind::Svm,
            ModelSpec::Ensemble(_) => ModelKind::Ensemble,
        }
    }

    pub fn params_json(&self) -> serde_json::Value {
        match serde_json::to_value(self).expect("spec serializes") {
            serde_json::Value::Object(mut m) => m.remove("params").unwrap_or_default(),
            _ => serde_json::Value::Null,
        }
    }

    pub fn fit(&self, x: &Matrix, y: &[u8], seed: u64) -> Result<Model> {
        Ok(match self {
            ModelSpec::LogReg(p) => Model::LogReg(train_logreg(x, y, p)?),
            ModelSpec::Rf(p) => Model::Rf(train_random_forest(x, y, p, seed)?),
            ModelSpec::Knn(p) => Model::Knn(train_knn(x, y, p)?),
            ModelSpec::Svm(p) => Model::Svm(train_svm_rbf(x, y, p, seed)?),
            ModelSpec::Ensemble(p) => Model::Ensemble(train_ensemble(x, y, p, seed)?),
        })
    }
}

/// A fitted classifier. Models are immutable after training.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    LogReg(LogisticRegression),
    Rf(RandomForest),
    Knn(Knn),
    Svm(SvmRbf),
    Ensemble(TwoStageEnsemble),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::LogReg(_) => ModelKind::LogReg,
            Model::Rf(_) => ModelKind::Rf,
            Model::Knn(_) => ModelKind::Knn,
            Model::Svm(_) => ModelKind::Svm,
            Model::Ensemble(_) => ModelKind::Ensemble,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::LogReg(m) => m.weights.len(),
            Model::Rf(m) => m.n_features,
            Model::Knn(m) => m.train.cols(),
            Model::Svm(m) => m.standardizer.dim(),
            Model::Ensemble(m) => m.stage1.weights.len(),
        }
    }

    /// Predicted label, 1 = Parasitized.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        match self {
            Model::LogReg(m) => m.predict_row(row),
            Model::Rf(m) => m.predict_row(row),
            Model::Knn(m) => m.predict_row(row),
            Model::Svm(m) => m.predict_row(row),
            Model::Ensemble(m) => m.predict_row(row),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<u8> {
        use rayon::prelude::*;
        (0..x.rows()).into_par_iter().map(|i| self.predict_row(x.row(i))).collect()
    }

    pub fn as_logreg(&self) -> Option<&LogisticRegression> {
        match self {
            Model::LogReg(m) => Some(m),
            Model::Ensemble(e) => Some(&e.stage1),
            _ => None,
        }
    }
}
