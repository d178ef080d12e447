//! Binary logistic regression trained by proximal gradient descent with
//! backtracking line search.
//!
//! The objective is the mean logistic loss plus `(1/C) * R(w)`:
//!
//! * `L2`: `R(w) = ||w||^2 / 2`
//! * `L1`: `R(w) = ||w||_1`
//! * `ElasticNet`: `R(w) = 0.5 * ||w||_1 + 0.5 * ||w||^2 / 2`
//!
//! The bias is never penalized. The l1 part is handled by soft-thresholding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::standardize::Standardizer;
use super::check_binary;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const ELASTIC_NET_MIX: f64 = 0.5;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    None,
    L1,
    L2,
    ElasticNet,
}

impl Penalty {
    pub const ALL: [Penalty; 4] = [Penalty::L1, Penalty::L2, Penalty::ElasticNet, Penalty::None];

    /// Weights of the (l1, squared-l2 / 2) terms.
    fn mix(self) -> (f64, f64) {
        match self {
            Penalty::None => (0.0, 0.0),
            Penalty::L1 => (1.0, 0.0),
            Penalty::L2 => (0.0, 1.0),
            Penalty::ElasticNet => (ELASTIC_NET_MIX, 1.0 - ELASTIC_NET_MIX),
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Penalty::None => 0,
            Penalty::L1 => 1,
            Penalty::L2 => 2,
            Penalty::ElasticNet => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Penalty::None,
            1 => Penalty::L1,
            2 => Penalty::L2,
            3 => Penalty::ElasticNet,
            _ => return None,
        })
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::None => "none",
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
            Penalty::ElasticNet => "elasticnet",
        })
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Penalty::None),
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            "elasticnet" | "elastic_net" => Ok(Penalty::ElasticNet),
            other => Err(Error::InvalidArgument(format!("unknown penalty `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegParams {
    pub penalty: Penalty,
    #[serde(rename = "C")]
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegParams {
    fn default() -> Self {
        Self {
            penalty: Penalty::L2,
            c: 1.0,
            max_iter: 5000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub penalty: Penalty,
    pub c: f64,
    pub threshold: f64,
    pub standardizer: Standardizer,
}

/// Fit diagnostics.
#[derive(Debug, Clone, Default)]
pub struct LogRegTrace {
    /// Objective value after every accepted step, starting with the initial point.
    pub objective: Vec<f64>,
    pub converged: bool,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Smooth part of the objective and its gradient for parameters
/// `theta = [w_0, ..., w_{d-1}, b]` on already-standardized data.
pub fn smooth_loss_and_grad(
    x: &Matrix,
    y: &[u8],
    theta: &[f64],
    penalty: Penalty,
    c: f64,
) -> (f64, Vec<f64>) {
    let d = x.cols();
    let n = x.rows() as f64;
    let (w, b) = theta.split_at(d);
    let b = b[0];
    let mut loss = 0.0;
    let mut grad = vec![0.0; d + 1];
    for (row, &yi) in x.iter_rows().zip(y) {
        let z = row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + b;
        loss += softplus(z) - f64::from(yi) * z;
        let r = sigmoid(z) - f64::from(yi);
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad[d] += r;
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    let (_, l2) = penalty.mix();
    if l2 > 0.0 {
        let lam = l2 / c;
        loss += 0.5 * lam * w.iter().map(|v| v * v).sum::<f64>();
        for (g, v) in grad.iter_mut().zip(w) {
            *g += lam * v;
        }
    }
    (loss, grad)
}

fn l1_term(w: &[f64], penalty: Penalty, c: f64) -> f64 {
    let (l1, _) = penalty.mix();
    if l1 > 0.0 {
        l1 / c * w.iter().map(|v| v.abs()).sum::<f64>()
    } else {
        0.0
    }
}

/// Full objective on standardized data.
pub fn objective(x: &Matrix, y: &[u8], theta: &[f64], penalty: Penalty, c: f64) -> f64 {
    let (smooth, _) = smooth_loss_and_grad(x, y, theta, penalty, c);
    smooth + l1_term(&theta[..x.cols()], penalty, c)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Minimize the objective on standardized inputs. Returns `theta` and a trace.
pub fn fit_standardized(x: &Matrix, y: &[u8], params: &LogRegParams) -> Result<(Vec<f64>, LogRegTrace)> {
    check_binary(y)?;
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch(x.rows(), y.len()));
    }
    if params.c <= 0.0 || !params.c.is_finite() {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", params.c)));
    }
    let d = x.cols();
    let (l1, _) = params.penalty.mix();
    let l1_strength = l1 / params.c;

    let mut theta = vec![0.0; d + 1];
    let (mut smooth, mut grad) = smooth_loss_and_grad(x, y, &theta, params.penalty, params.c);
    let mut obj = smooth + l1_term(&theta[..d], params.penalty, params.c);
    let mut trace = LogRegTrace {
        objective: vec![obj],
        converged: false,
    };
    let mut step = 1.0;

    for _ in 0..params.max_iter {
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .enumerate()
                .map(|(j, (t, g))| {
                    let v = t - step * g;
                    if j < d {
                        soft_threshold(v, step * l1_strength)
                    } else {
                        v
                    }
                })
                .collect();
            let (cand_smooth, cand_grad) = smooth_loss_and_grad(x, y, &cand, params.penalty, params.c);
            if !cand_smooth.is_finite() {
                step *= 0.5;
                continue;
            }
            let diff: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            let lin: f64 = diff.iter().zip(&grad).map(|(a, b)| a * b).sum();
            let sq: f64 = diff.iter().map(|v| v * v).sum();
            if cand_smooth <= smooth + lin + sq / (2.0 * step) + 1e-15 * smooth.abs() {
                accepted = Some((cand, cand_smooth, cand_grad));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_smooth, cand_grad)) = accepted else {
            // step underflowed: no descent direction left at machine precision
            trace.converged = true;
            break;
        };
        let cand_obj = cand_smooth + l1_term(&cand[..d], params.penalty, params.c);
        if !cand_obj.is_finite() {
            return Err(Error::Diverged(format!("objective became {cand_obj}")));
        }
        let delta = obj - cand_obj;
        theta = cand;
        smooth = cand_smooth;
        grad = cand_grad;
        obj = cand_obj;
        trace.objective.push(obj);
        if delta.abs() < params.tol {
            trace.converged = true;
            break;
        }
        step *= 2.0;
    }
    Ok((theta, trace))
}

/// Standardize `x`, then fit.
pub fn train_logreg(x: &Matrix, y: &[u8], params: &LogRegParams) -> Result<LogisticRegression> {
    train_logreg_traced(x, y, params).map(|(m, _)| m)
}

pub fn train_logreg_traced(
    x: &Matrix,
    y: &[u8],
    params: &LogRegParams,
) -> Result<(LogisticRegression, LogRegTrace)> {
    check_binary(y)?;
    let standardizer = Standardizer::fit(x)?;
    let z = standardizer.apply(x);
    let (theta, trace) = fit_standardized(&z, y, params)?;
    let d = x.cols();
    Ok((
        LogisticRegression {
            weights: theta[..d].to_vec(),
            bias: theta[d],
            penalty: params.penalty,
            c: params.c,
            threshold: DEFAULT_THRESHOLD,
            standardizer,
        },
        trace,
    ))
}

impl LogisticRegression {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let mut z = self.bias;
        for (j, w) in self.weights.iter().enumerate() {
            z += w * (row[j] - self.standardizer.means[j]) / self.standardizer.stds[j];
        }
        z
    }

    /// Probability of the Parasitized class.
    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        sigmoid(self.decision(row))
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.predict_proba(row) >= self.threshold)
    }

    pub fn predict_proba_all(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_proba(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn separable() -> (Matrix, Vec<u8>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..50 {
            let jitter = f64::from(i) * 1e-3;
            rows.push([-1.0, jitter]);
            y.push(0);
            rows.push([1.0, -jitter]);
            y.push(1);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    fn noisy(n: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            let p = sigmoid(1.5 * a + 0.4 * b - 0.2);
            y.push(u8::from(rng.gen::<f64>() < p));
            rows.push([a, b]);
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn separable_toy_set() {
        let (x, y) = separable();
        let m = train_logreg(&x, &y, &LogRegParams::default()).unwrap();
        let acc = x.iter_rows().zip(&y).filter(|(r, &t)| m.predict_row(r) == t).count();
        assert_eq!(acc, 100);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn origin_with_zero_bias_is_half() {
        let m = LogisticRegression {
            weights: vec![2.0, 1.0],
            bias: 0.0,
            penalty: Penalty::L2,
            c: 1.0,
            threshold: 0.5,
            standardizer: Standardizer { means: vec![5.0, 1.0], stds: vec![2.0, 1.0] },
        };
        assert_eq!(m.predict_proba(&[5.0, 1.0]), 0.5);
        let mut last = 0.0;
        for fg in 0..100 {
            let p = m.predict_proba(&[f64::from(fg), 1.0]);
            assert!(p >= last);
            last = p;
        }
    }

    #[test]
    fn objective_decreases_monotonically() {
        let (x, y) = noisy(300, 3);
        for penalty in Penalty::ALL {
            let params = LogRegParams { penalty, c: 0.1, ..Default::default() };
            let (_, trace) = train_logreg_traced(&x, &y, &params).unwrap();
            assert!(trace.converged);
            for w in trace.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{penalty}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn strong_l1_zeroes_weights() {
        let (x, y) = noisy(200, 5);
        let m = train_logreg(&x, &y, &LogRegParams { penalty: Penalty::L1, c: 0.01, ..Default::default() }).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn weaker_regularization_never_raises_training_loss() {
        let (x, y) = noisy(400, 11);
        let z = Standardizer::fit(&x).unwrap().apply(&x);
        for penalty in [Penalty::L1, Penalty::L2, Penalty::ElasticNet] {
            let mut prev = f64::INFINITY;
            for c in [0.01, 0.1, 1.0, 10.0, 100.0] {
                let params = LogRegParams { penalty, c, tol: 1e-12, max_iter: 20_000 };
                let (theta, _) = fit_standardized(&z, &y, &params).unwrap();
                let (loss, _) = smooth_loss_and_grad(&z, &y, &theta, Penalty::None, 1.0);
                assert!(loss <= prev + 1e-6, "{penalty} C={c}: {loss} > {prev}");
                prev = loss;
            }
        }
    }

    #[test]
    fn rejects_bad_labels() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(train_logreg(&x, &[0, 2], &LogRegParams::default()), Err(Error::NonBinaryLabels)));
    }

    #[test]
    fn penalty_names() {
        for p in Penalty::ALL {
            assert_eq!(p.to_string().parse::<Penalty>().unwrap(), p);
            assert_eq!(Penalty::from_code(p.code()), Some(p));
        }
    }
}
