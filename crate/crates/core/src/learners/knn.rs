use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::check_binary;
use super::standardize::Standardizer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Metric {
    Euclidean,
    Manhattan,
    Chebyshev,
    Minkowski(u8),
}

impl Metric {
    pub const SEARCH_SPACE: [Metric; 6] = [
        Metric::Euclidean,
        Metric::Manhattan,
        Metric::Chebyshev,
        Metric::Minkowski(1),
        Metric::Minkowski(2),
        Metric::Minkowski(3),
    ];

    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Metric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Metric::Manhattan => diffs.sum(),
            Metric::Chebyshev => diffs.fold(0.0, f64::max),
            Metric::Minkowski(p) => {
                let p = f64::from(p.max(1));
                diffs.map(|d| d.powf(p)).sum::<f64>().powf(1.0 / p)
            }
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Euclidean => f.write_str("euclidean"),
            Metric::Manhattan => f.write_str("manhattan"),
            Metric::Chebyshev => f.write_str("chebyshev"),
            Metric::Minkowski(p) => write!(f, "minkowski{p}"),
        }
    }
}

impl TryFrom<String> for Metric {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Metric> for String {
    fn from(m: Metric) -> String {
        m.to_string()
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "manhattan" => Ok(Metric::Manhattan),
            "chebyshev" => Ok(Metric::Chebyshev),
            _ => s
                .strip_prefix("minkowski")
                .and_then(|p| p.parse::<u8>().ok())
                .filter(|p| *p >= 1)
                .map(Metric::Minkowski)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnParams {
    pub n_neighbors: usize,
    pub metric: Metric,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self {
            n_neighbors: 5,
            metric: Metric::Euclidean,
        }
    }
}

/// Exact k-nearest-neighbour vote over standardized training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Knn {
    pub params: KnnParams,
    pub standardizer: Standardizer,
    /// Standardized training rows.
    pub train: Matrix,
    pub labels: Vec<u8>,
}

pub fn train_knn(x: &Matrix, y: &[u8], params: &KnnParams) -> Result<Knn> {
    check_binary(y)?;
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch(x.rows(), y.len()));
    }
    if params.n_neighbors == 0 || params.n_neighbors > x.rows() {
        return Err(Error::KTooLarge {
            k: params.n_neighbors,
            n: x.rows(),
        });
    }
    let standardizer = Standardizer::fit(x)?;
    Ok(Knn {
        params: *params,
        train: standardizer.apply(x),
        standardizer,
        labels: y.to_vec(),
    })
}

impl Knn {
    /// Indices of the k nearest training rows to a standardized query,
    /// ordered by (distance, index).
    pub fn neighbors_standardized(&self, q: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .train
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (self.params.metric.distance(q, r), i))
            .collect();
        let k = self.params.n_neighbors;
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k - 1, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Majority label of the neighbours; ties go to class 0.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut q = vec![0.0; row.len()];
        self.standardizer.apply_row(row, &mut q);
        let pos = self
            .neighbors_standardized(&q)
            .into_iter()
            .filter(|&i| self.labels[i] == 1)
            .count();
        u8::from(2 * pos > self.params.n_neighbors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_definitions() {
        let (a, b) = ([0.0, 0.0], [3.0, 4.0]);
        assert_eq!(Metric::Chebyshev.distance(&a, &b), 4.0);
        assert_eq!(Metric::Manhattan.distance(&a, &b), 7.0);
        assert_eq!(Metric::Euclidean.distance(&a, &b), 5.0);
        assert_eq!(Metric::Minkowski(1).distance(&a, &b), 7.0);
        assert!((Metric::Minkowski(3).distance(&a, &b) - 91f64.powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn one_neighbor_recalls_training_label() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 5.0], [4.0, 2.0], [9.0, 9.0]]).unwrap();
        let y = [0, 1, 1, 0];
        let m = train_knn(&x, &y, &KnnParams { n_neighbors: 1, metric: Metric::Manhattan }).unwrap();
        for (r, &l) in x.iter_rows().zip(&y) {
            assert_eq!(m.predict_row(r), l);
        }
    }

    #[test]
    fn full_k_is_global_majority() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.0], [3.0], [4.0]]).unwrap();
        let y = [1, 1, 1, 0, 0];
        let m = train_knn(&x, &y, &KnnParams { n_neighbors: 5, metric: Metric::Chebyshev }).unwrap();
        for q in [-10.0, 0.0, 3.5, 100.0] {
            assert_eq!(m.predict_row(&[q]), 1);
        }
    }

    #[test]
    fn k_too_large() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(train_knn(&x, &[0, 1], &KnnParams { n_neighbors: 3, ..Default::default() }), Err(Error::KTooLarge { .. })));
    }

    #[test]
    fn metric_names() {
        for m in Metric::SEARCH_SPACE {
            assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        }
    }
}
