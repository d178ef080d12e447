//! RBF-kernel SVM trained with SMO.
//!
//! The outer loop sweeps every multiplier; whenever one violates the KKT
//! conditions beyond `tol`, a partner is picked by the largest error gap
//! (falling back to seeded random partners) and the pair is optimized
//! analytically. Training stops after `max_passes` consecutive sweeps
//! without a change. Errors `E_k = f(x_k) - y_k` are cached and updated
//! incrementally after every step.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::check_binary;
use super::standardize::Standardizer;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    #[serde(rename = "C")]
    pub c: f64,
    /// Kernel width; `None` uses `1 / n_features` (unit variance after
    /// standardization).
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_passes: usize,
    /// Hard cap on sweeps; exceeding it is reported as divergence.
    pub max_sweeps: usize,
    /// Rows beyond this are subsampled (seeded) before training.
    pub max_train_rows: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tol: 1e-3,
            max_passes: 3,
            max_sweeps: 10_000,
            max_train_rows: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmRbf {
    pub c: f64,
    pub gamma: f64,
    pub bias: f64,
    pub standardizer: Standardizer,
    /// Standardized support vectors.
    pub support: Matrix,
    /// `alpha_i * y_i` per support vector, with `y_i` in {-1, +1}.
    pub coef: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SmoTrace {
    /// Dual objective after each successful pair update (first entry is 0).
    pub dual: Vec<f64>,
    pub sweeps: usize,
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij`.
pub fn dual_objective(x: &Matrix, y: &[f64], alpha: &[f64], gamma: f64) -> f64 {
    let mut quad = 0.0;
    for i in 0..x.rows() {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..x.rows() {
            if alpha[j] != 0.0 {
                quad += alpha[i] * alpha[j] * y[i] * y[j] * rbf(x.row(i), x.row(j), gamma);
            }
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

struct Smo<'a> {
    x: &'a Matrix,
    y: Vec<f64>,
    alpha: Vec<f64>,
    err: Vec<f64>,
    b: f64,
    c: f64,
    gamma: f64,
    tol: f64,
}

impl Smo<'_> {
    fn kernel(&self, i: usize, j: usize) -> f64 {
        rbf(self.x.row(i), self.x.row(j), self.gamma)
    }

    fn violates(&self, i: usize) -> bool {
        let r = self.err[i] * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn take_step(&mut self, i: usize, j: usize) -> bool {
        if i == j {
            return false;
        }
        let (yi, yj) = (self.y[i], self.y[j]);
        let (ai, aj) = (self.alpha[i], self.alpha[j]);
        let (ei, ej) = (self.err[i], self.err[j]);
        let (lo, hi) = if yi != yj {
            ((aj - ai).max(0.0), (self.c + aj - ai).min(self.c))
        } else {
            ((ai + aj - self.c).max(0.0), (ai + aj).min(self.c))
        };
        if hi - lo < 1e-12 {
            return false;
        }
        let kii = 1.0;
        let kjj = 1.0;
        let kij = self.kernel(i, j);
        let eta = kii + kjj - 2.0 * kij;
        if eta <= 1e-12 {
            return false;
        }
        let aj_new = (aj + yj * (ei - ej) / eta).clamp(lo, hi);
        if (aj_new - aj).abs() < 1e-12 * (aj_new + aj + 1e-12) {
            return false;
        }
        let ai_new = ai + yi * yj * (aj - aj_new);
        let (dai, daj) = (ai_new - ai, aj_new - aj);

        let b1 = self.b - ei - yi * dai * kii - yj * daj * kij;
        let b2 = self.b - ej - yi * dai * kij - yj * daj * kjj;
        let b_new = if ai_new > 0.0 && ai_new < self.c {
            b1
        } else if aj_new > 0.0 && aj_new < self.c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let db = b_new - self.b;

        for k in 0..self.x.rows() {
            let kik = if k == i { kii } else { self.kernel(i, k) };
            let kjk = if k == j { kjj } else { self.kernel(j, k) };
            self.err[k] += yi * dai * kik + yj * daj * kjk + db;
        }
        self.alpha[i] = ai_new;
        self.alpha[j] = aj_new;
        self.b = b_new;
        true
    }
}

pub fn train_svm_rbf(x: &Matrix, y: &[u8], params: &SvmParams, seed: u64) -> Result<SvmRbf> {
    train_svm_rbf_traced(x, y, params, seed, false).map(|(m, _)| m)
}

/// Train, optionally recording the dual objective after every update
/// (quadratic cost per record; meant for small problems).
pub fn train_svm_rbf_traced(
    x: &Matrix,
    y: &[u8],
    params: &SvmParams,
    seed: u64,
    record_dual: bool,
) -> Result<(SvmRbf, SmoTrace)> {
    check_binary(y)?;
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch(x.rows(), y.len()));
    }
    if params.c <= 0.0 {
        return Err(Error::InvalidArgument("C must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = if x.rows() > params.max_train_rows {
        let mut keep = sample(&mut rng, x.rows(), params.max_train_rows).into_vec();
        keep.sort_unstable();
        let ys: Vec<u8> = keep.iter().map(|&i| y[i]).collect();
        (x.select(&keep), ys)
    } else {
        (x.clone(), y.to_vec())
    };
    check_binary(&y)?;
    let standardizer = Standardizer::fit(&x)?;
    let z = standardizer.apply(&x);
    let gamma = params.gamma.unwrap_or(1.0 / z.cols() as f64);
    let n = z.rows();
    let ys: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();

    let mut smo = Smo {
        x: &z,
        err: ys.iter().map(|v| -v).collect(),
        y: ys,
        alpha: vec![0.0; n],
        b: 0.0,
        c: params.c,
        gamma,
        tol: params.tol,
    };
    let mut trace = SmoTrace::default();
    if record_dual {
        trace.dual.push(0.0);
    }

    let mut quiet_passes = 0;
    while quiet_passes < params.max_passes {
        if trace.sweeps >= params.max_sweeps {
            return Err(Error::Diverged(format!(
                "SMO did not reach KKT tolerance within {} sweeps",
                params.max_sweeps
            )));
        }
        trace.sweeps += 1;
        let mut changed = 0;
        for i in 0..n {
            if !smo.violates(i) {
                continue;
            }
            let ei = smo.err[i];
            let j = (0..n)
                .filter(|&j| j != i)
                .max_by(|&a, &b| (smo.err[a] - ei).abs().total_cmp(&(smo.err[b] - ei).abs()))
                .unwrap_or(i);
            let mut stepped = smo.take_step(i, j);
            if !stepped {
                let start = rng.gen_range(0..n);
                for off in 0..n.min(64) {
                    if smo.take_step(i, (start + off) % n) {
                        stepped = true;
                        break;
                    }
                }
            }
            if stepped {
                changed += 1;
                if record_dual {
                    trace.dual.push(dual_objective(&z, &smo.y, &smo.alpha, gamma));
                }
            }
        }
        if !smo.b.is_finite() || smo.err.iter().any(|e| !e.is_finite()) {
            return Err(Error::Diverged("non-finite SMO state".into()));
        }
        quiet_passes = if changed == 0 { quiet_passes + 1 } else { 0 };
    }

    let sv: Vec<usize> = (0..n).filter(|&i| smo.alpha[i] > 0.0).collect();
    let coef = sv.iter().map(|&i| smo.alpha[i] * smo.y[i]).collect();
    let bias = smo.b;
    Ok((
        SvmRbf {
            c: params.c,
            gamma,
            bias,
            standardizer,
            support: z.select(&sv),
            coef,
        },
        trace,
    ))
}

impl SvmRbf {
    pub fn decision(&self, row: &[f64]) -> f64 {
        let mut q = vec![0.0; row.len()];
        self.standardizer.apply_row(row, &mut q);
        self.decision_standardized(&q)
    }

    pub fn decision_standardized(&self, q: &[f64]) -> f64 {
        self.support
            .iter_rows()
            .zip(&self.coef)
            .map(|(s, c)| c * rbf(s, q, self.gamma))
            .sum::<f64>()
            + self.bias
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.decision(row) >= 0.0)
    }
}
