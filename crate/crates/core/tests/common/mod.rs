//! Test-only reference implementations, written as plain loops over the
//! formulas and deliberately sharing no code with the library.
#![allow(dead_code)]

use std::collections::HashSet;

/// Tensor as nested `[c][y][x]` vectors.
pub type Naive3 = Vec<Vec<Vec<f64>>>;

pub fn to_naive(c: usize, h: usize, w: usize, flat: &[f64]) -> Naive3 {
    let mut t = vec![vec![vec![0.0; w]; h]; c];
    let mut i = 0;
    for ch in t.iter_mut() {
        for row in ch.iter_mut() {
            for v in row.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
    }
    t
}

pub fn naive_sum_pool(t: &Naive3) -> Vec<f64> {
    let mut out = Vec::new();
    for ch in t {
        let mut s = 0.0;
        for row in ch {
            for v in row {
                s += v;
            }
        }
        out.push(s);
    }
    out
}

/// Two-pass population variance of the sum-pooled vectors.
pub fn naive_variance(images: &[Naive3]) -> Vec<f64> {
    let pooled: Vec<Vec<f64>> = images.iter().map(naive_sum_pool).collect();
    let c = pooled[0].len();
    let d = pooled.len() as f64;
    let mut out = Vec::new();
    for ch in 0..c {
        let mut mean = 0.0;
        for g in &pooled {
            mean += g[ch];
        }
        mean /= d;
        let mut var = 0.0;
        for g in &pooled {
            var += (g[ch] - mean) * (g[ch] - mean);
        }
        out.push(var / d);
    }
    out
}

/// Top-n channels by variance, found by repeated linear scans for the max.
pub fn naive_top(variance: &[f64], n: usize) -> Vec<usize> {
    let mut taken = vec![false; variance.len()];
    let mut out = Vec::new();
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for (i, v) in variance.iter().enumerate() {
            if taken[i] {
                continue;
            }
            match best {
                Some(b) if variance[b] >= *v => {}
                _ => best = Some(i),
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out
}

pub fn naive_weights(channel: &[Vec<f64>], alpha: f64, beta: f64) -> Vec<Vec<f64>> {
    let mut denom = 0.0;
    for row in channel {
        for v in row {
            denom += v.max(0.0).powf(alpha);
        }
    }
    let denom = denom.powf(1.0 / alpha);
    channel
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    if denom == 0.0 {
                        0.0
                    } else {
                        (v.max(0.0) / denom).powf(1.0 / beta)
                    }
                })
                .collect()
        })
        .collect()
}

pub fn naive_weighted_pool(t: &Naive3, w: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for ch in t {
        let mut s = 0.0;
        for (y, row) in ch.iter().enumerate() {
            for (x, v) in row.iter().enumerate() {
                s += w[y][x] * v;
            }
        }
        out.push(s);
    }
    out
}

pub fn naive_aggregate(t: &Naive3, detectors: &[usize], alpha: f64, beta: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for &n in detectors {
        let w = naive_weights(&t[n], alpha, beta);
        out.extend(naive_weighted_pool(t, &w));
    }
    out
}

pub fn naive_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

/// Brute-force AP: precision at each positive's position after dropping junk.
pub fn naive_ap(ranking: &[String], positives: &HashSet<String>, junk: &HashSet<String>) -> f64 {
    let kept: Vec<&String> = ranking.iter().filter(|id| !junk.contains(*id)).collect();
    let mut total = 0.0;
    for (pos, id) in kept.iter().enumerate() {
        if positives.contains(*id) {
            let hits_so_far = kept[..=pos].iter().filter(|x| positives.contains(**x)).count();
            total += hits_so_far as f64 / (pos + 1) as f64;
        }
    }
    total / positives.len() as f64
}

/// Population covariance of the rows.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j] / n;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[a][b] += (r[a] - mean[a]) * (r[b] - mean[b]) / n;
            }
        }
    }
    cov
}
