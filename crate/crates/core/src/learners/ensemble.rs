use serde::{Deserialize, Serialize};

use super::forest::{train_random_forest, ForestParams, RandomForest};
use super::logistic::{train_logreg, LogRegParams, LogisticRegression};
use crate::error::Result;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleParams {
    pub logreg: LogRegParams,
    pub forest: ForestParams,
}

/// Logistic regression screens every sample; samples it calls Parasitized
/// are re-judged by the forest, whose verdict is final for that subset.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageEnsemble {
    pub stage1: LogisticRegression,
    pub stage2: RandomForest,
}

/// The sequential rule on raw stage outputs.
pub fn combine(stage1: u8, stage2: impl FnOnce() -> u8) -> u8 {
    if stage1 == 0 {
        0
    } else {
        stage2()
    }
}

pub fn train_ensemble(x: &Matrix, y: &[u8], params: &EnsembleParams, seed: u64) -> Result<TwoStageEnsemble> {
    Ok(TwoStageEnsemble {
        stage1: train_logreg(x, y, &params.logreg)?,
        stage2: train_random_forest(x, y, &params.forest, seed)?,
    })
}

impl TwoStageEnsemble {
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        combine(self.stage1.predict_row(row), || self.stage2.predict_row(row))
    }
}
