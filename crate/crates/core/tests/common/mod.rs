//! Brute-force reference implementations shared by the integration tests
//! and the acceptance suite.
#![allow(dead_code)]

use std::collections::VecDeque;

use emfe::imaging::BinaryMask;
use emfe::learners::Penalty;
use emfe::morphology::Connectivity;
use emfe::Matrix;
use rand::Rng;

/// Exhaustive Otsu search. Every cut recomputes its class sums from
/// scratch and candidates are compared as exact rationals
/// `(S*n0 - N*s0)^2 / (n0*n1)`.
pub fn otsu_brute(counts: &[u64]) -> Option<usize> {
    let n_total: i128 = counts.iter().map(|&c| c as i128).sum();
    let s_total: i128 = counts.iter().enumerate().map(|(i, &c)| i as i128 * c as i128).sum();
    let mut best: Option<(usize, i128, i128)> = None;
    for t in 0..counts.len().saturating_sub(1) {
        let n0: i128 = counts[..=t].iter().map(|&c| c as i128).sum();
        let s0: i128 = counts[..=t].iter().enumerate().map(|(i, &c)| i as i128 * c as i128).sum();
        let n1 = n_total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = s_total * n0 - n_total * s0;
        let (num, den) = (d * d, n0 * n1);
        match best {
            Some((_, bn, bd)) if num * bd <= bn * den => {}
            _ => best = Some((t, num, den)),
        }
    }
    best.map(|b| b.0)
}

fn neighbours(x: usize, y: usize, w: usize, h: usize, conn: Connectivity) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(8);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            if (dx, dy) == (0, 0) || (conn == Connectivity::Four && dx != 0 && dy != 0) {
                continue;
            }
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                out.push((nx as usize, ny as usize));
            }
        }
    }
    out
}

fn flood(mask: &BinaryMask, want: bool, seen: &mut [bool], start: (usize, usize), conn: Connectivity) -> Vec<usize> {
    let (w, h) = (mask.width(), mask.height());
    let mut queue = VecDeque::from([start]);
    let mut pixels = Vec::new();
    seen[start.1 * w + start.0] = true;
    while let Some((x, y)) = queue.pop_front() {
        pixels.push(y * w + x);
        for (nx, ny) in neighbours(x, y, w, h, conn) {
            let i = ny * w + nx;
            if !seen[i] && mask.get(nx, ny) == want {
                seen[i] = true;
                queue.push_back((nx, ny));
            }
        }
    }
    pixels
}

/// Flood the background from every border pixel, then count the background
/// regions that remain.
pub fn holes_by_border_flood(mask: &BinaryMask, conn: Connectivity) -> u32 {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let border = x == 0 || y == 0 || x == w - 1 || y == h - 1;
            if border && !mask.get(x, y) && !seen[y * w + x] {
                flood(mask, false, &mut seen, (x, y), conn);
            }
        }
    }
    let mut holes = 0;
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) && !seen[y * w + x] {
                flood(mask, false, &mut seen, (x, y), conn);
                holes += 1;
            }
        }
    }
    holes
}

/// BFS labeling; IDs follow the raster order of each component's first pixel.
pub fn labels_by_flood(mask: &BinaryMask, want: bool, conn: Connectivity) -> Vec<u32> {
    let (w, h) = (mask.width(), mask.height());
    let mut seen = vec![false; w * h];
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) == want && !seen[y * w + x] {
                next += 1;
                for p in flood(mask, want, &mut seen, (x, y), conn) {
                    labels[p] = next;
                }
            }
        }
    }
    labels
}

/// Pearson r for integer columns with exact integer moment sums.
pub fn pearson_exact(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len() as i128;
    let sa: i128 = a.iter().map(|&v| v as i128).sum();
    let sb: i128 = b.iter().map(|&v| v as i128).sum();
    let sab: i128 = a.iter().zip(b).map(|(&x, &y)| x as i128 * y as i128).sum();
    let saa: i128 = a.iter().map(|&v| v as i128 * v as i128).sum();
    let sbb: i128 = b.iter().map(|&v| v as i128 * v as i128).sum();
    let num = n * sab - sa * sb;
    let da = n * saa - sa * sa;
    let db = n * sbb - sb * sb;
    num as f64 / ((da as f64).sqrt() * (db as f64).sqrt())
}

fn zscore(x: &Matrix) -> Matrix {
    let n = x.rows() as f64;
    let mut cols = Vec::new();
    for j in 0..x.cols() {
        let col: Vec<f64> = x.column(j).collect();
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        cols.push((mean, sd));
    }
    let rows: Vec<Vec<f64>> = x
        .iter_rows()
        .map(|r| r.iter().zip(&cols).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Sort every training row by distance to the standardized query and vote
/// over the first `k`; ties in distance keep the lower index, vote ties go to 0.
pub fn knn_brute(x: &Matrix, y: &[u8], k: usize, dist: impl Fn(&[f64], &[f64]) -> f64, query: &[f64]) -> u8 {
    let n = x.rows() as f64;
    let mut stats = Vec::new();
    for j in 0..x.cols() {
        let col: Vec<f64> = x.column(j).collect();
        let mean = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        stats.push((mean, sd));
    }
    let q: Vec<f64> = query.iter().zip(&stats).map(|(v, (m, s))| (v - m) / s).collect();
    let z = zscore(x);
    let mut all: Vec<(f64, usize)> = z.iter_rows().enumerate().map(|(i, r)| (dist(&q, r), i)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let pos = all[..k].iter().filter(|(_, i)| y[*i] == 1).count();
    u8::from(2 * pos > k)
}

/// Exhaustive depth-one Gini split: every feature, every midpoint between
/// consecutive distinct values. Returns `(score, feature, threshold)` for all
/// candidates, with the score as size-weighted child Gini impurity.
pub fn stump_candidates(x: &Matrix, y: &[u8]) -> Vec<(f64, usize, f64)> {
    let gini = |rows: &[usize]| -> f64 {
        if rows.is_empty() {
            return 0.0;
        }
        let p = rows.iter().filter(|&&r| y[r] == 1).count() as f64 / rows.len() as f64;
        rows.len() as f64 * (1.0 - p * p - (1.0 - p) * (1.0 - p))
    };
    let mut out = Vec::new();
    for f in 0..x.cols() {
        let mut values: Vec<f64> = x.column(f).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (left, right): (Vec<usize>, Vec<usize>) = (0..x.rows()).partition(|&r| x.get(r, f) <= t);
            out.push((gini(&left) + gini(&right), f, t));
        }
    }
    out
}

/// Mean log-loss plus penalty, written from the definition.
pub fn logistic_objective(x: &Matrix, y: &[u8], theta: &[f64], penalty: Penalty, c: f64) -> f64 {
    let d = x.cols();
    let mut loss = 0.0;
    for (row, &yi) in x.iter_rows().zip(y) {
        let z: f64 = row.iter().zip(&theta[..d]).map(|(a, b)| a * b).sum::<f64>() + theta[d];
        let p = 1.0 / (1.0 + (-z).exp());
        loss -= if yi == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    loss /= x.rows() as f64;
    let w = &theta[..d];
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let r = match penalty {
        Penalty::None => 0.0,
        Penalty::L1 => l1,
        Penalty::L2 => l2,
        Penalty::ElasticNet => 0.5 * l1 + 0.5 * l2,
    };
    loss + r / c
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(density))
}

/// Two overlapping Gaussian-ish clouds; label 1 sits up and to the right.
pub fn blobs(rng: &mut impl Rng, n: usize, d: usize, shift: f64) -> (Matrix, Vec<u8>) {
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 2) as u8;
        let row: Vec<f64> = (0..d)
            .map(|_| {
                let g: f64 = (0..6).map(|_| rng.gen::<f64>()).sum::<f64>() - 3.0;
                g + shift * f64::from(label)
            })
            .collect();
        rows.push(row);
        y.push(label);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}
