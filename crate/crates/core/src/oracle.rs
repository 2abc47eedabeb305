//! Brute-force reference implementations.
//!
//! These are deliberately naive scalar loops over plain `Vec<Vec<f64>>` rows
//! and share no code with the engine they check. They exist for tests and
//! the acceptance suite; nothing in the engine calls them.

#![allow(clippy::needless_range_loop)]

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

fn norm(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in v {
        s += x * x;
    }
    s.sqrt()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    let mut d = 0.0;
    for k in 0..a.len() {
        d += a[k] * b[k];
    }
    d / (na * nb)
}

/// Every pair evaluated independently, no mirroring.
pub fn cosine_matrix(rows: &[Vec<f64>], indices: &[usize]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; indices.len()]; indices.len()];
    for a in 0..indices.len() {
        for b in 0..indices.len() {
            out[a][b] = cos(&rows[indices[a]], &rows[indices[b]]);
        }
    }
    out
}

pub fn row_means(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..n {
            if j != i {
                s += matrix[i][j];
            }
        }
        out.push(s / (n as f64 - 1.0));
    }
    out
}

/// Selection sort on (value desc, index asc).
pub fn sort_descending(values: &[f64]) -> Vec<usize> {
    let mut remaining: Vec<usize> = (0..values.len()).collect();
    let mut out = Vec::with_capacity(values.len());
    while !remaining.is_empty() {
        let mut best = 0;
        for k in 1..remaining.len() {
            let (i, b) = (remaining[k], remaining[best]);
            if values[i] > values[b] || (values[i] == values[b] && i < b) {
                best = k;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

/// Average similarity of `window[i]` to the other window tokens.
pub fn average_similarities(rows: &[Vec<f64>], window: &[usize]) -> Vec<f64> {
    let n = window.len();
    let mut out = Vec::with_capacity(n);
    for &i in window {
        let mut s = 0.0;
        for &j in window {
            if j != i {
                s += cos(&rows[i], &rows[j]);
            }
        }
        out.push(s / (n as f64 - 1.0));
    }
    out
}

/// Most representative token and the rest of the window ranked by
/// average similarity (desc), ties to the smaller token index.
pub fn oracle_select(rows: &[Vec<f64>], window: &[usize]) -> (usize, Vec<usize>) {
    let avg = average_similarities(rows, window);
    let mut pairs: Vec<(f64, usize)> = avg.into_iter().zip(window.iter().copied()).collect();
    // bubble sort, exhaustive comparisons
    for _ in 0..pairs.len() {
        for k in 0..pairs.len().saturating_sub(1) {
            let (va, ia) = pairs[k];
            let (vb, ib) = pairs[k + 1];
            if vb > va || (vb == va && ib < ia) {
                pairs.swap(k, k + 1);
            }
        }
    }
    let dest = pairs[0].1;
    (dest, pairs[1..].iter().map(|p| p.1).collect())
}

/// Least representative token: minimum average similarity, ties to the smaller index.
pub fn oracle_least(rows: &[Vec<f64>], window: &[usize]) -> usize {
    let avg = average_similarities(rows, window);
    let mut best = 0;
    for k in 1..window.len() {
        if avg[k] < avg[best] || (avg[k] == avg[best] && window[k] < window[best]) {
            best = k;
        }
    }
    window[best]
}

/// `alpha * dest + (1 - alpha) * (1/r) * sum(sources)`, entry by entry.
pub fn oracle_merge(dest: &[f64], sources: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    let r = sources.len() as f64;
    let mut out = vec![0.0; dest.len()];
    for k in 0..dest.len() {
        let mut s = 0.0;
        for src in sources {
            s += src[k];
        }
        out[k] = alpha * dest[k] + (1.0 - alpha) * (1.0 / r) * s;
    }
    out
}

/// Checks that `windows` is a disjoint exact cover of an `height × width`
/// grid by `side × side` tiles (clipped at the right and bottom edges).
pub fn oracle_cover_check(
    windows: &[Vec<usize>],
    height: usize,
    width: usize,
    side: usize,
) -> bool {
    let n = height * width;
    let mut hits = vec![0usize; n];
    for w in windows {
        if w.is_empty() {
            return false;
        }
        for &i in w {
            if i >= n {
                return false;
            }
            hits[i] += 1;
        }
        let rows: Vec<usize> = w.iter().map(|i| i / width).collect();
        let cols: Vec<usize> = w.iter().map(|i| i % width).collect();
        let (r0, r1) = (*rows.iter().min().unwrap(), *rows.iter().max().unwrap());
        let (c0, c1) = (*cols.iter().min().unwrap(), *cols.iter().max().unwrap());
        if r0 % side != 0 || c0 % side != 0 {
            return false;
        }
        let expect_h = side.min(height - r0);
        let expect_w = side.min(width - c0);
        if r1 - r0 + 1 != expect_h || c1 - c0 + 1 != expect_w || w.len() != expect_h * expect_w {
            return false;
        }
        // every cell of the rectangle present
        for r in r0..=r1 {
            for c in c0..=c1 {
                if !w.contains(&(r * width + c)) {
                    return false;
                }
            }
        }
    }
    hits.iter().all(|&h| h == 1)
}

/// Row-vector convention: `q = x·Wq`, weights `d × d` stored as rows.
fn project(x: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; w[0].len()];
    for (i, xi) in x.iter().enumerate() {
        for j in 0..out.len() {
            out[j] += xi * w[i][j];
        }
    }
    out
}

/// Softmax attention with value rows `x·Wv·Wo`.
pub fn oracle_attention(
    rows: &[Vec<f64>],
    wq: &[Vec<f64>],
    wk: &[Vec<f64>],
    wv: &[Vec<f64>],
    wo: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let d = rows[0].len() as f64;
    let q: Vec<Vec<f64>> = rows.iter().map(|x| project(x, wq)).collect();
    let k: Vec<Vec<f64>> = rows.iter().map(|x| project(x, wk)).collect();
    let v: Vec<Vec<f64>> = rows.iter().map(|x| project(&project(x, wv), wo)).collect();
    let mut out = Vec::new();
    for qi in &q {
        let logits: Vec<f64> = k
            .iter()
            .map(|kj| {
                let mut s = 0.0;
                for t in 0..qi.len() {
                    s += qi[t] * kj[t];
                }
                s / d.sqrt()
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let mut o = vec![0.0; v[0].len()];
        for (j, vj) in v.iter().enumerate() {
            for t in 0..o.len() {
                o[t] += e[j] / z * vj[t];
            }
        }
        out.push(o);
    }
    out
}

/// Outcome of one oracle comparison, serializable for replay.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub case_id: String,
    pub module_under_test: String,
    pub max_abs_diff: f64,
    pub passed: bool,
    pub inputs: serde_json::Value,
}

impl OracleReport {
    /// Writes `<dir>/<case_id>.json` and returns its path.
    pub fn write_replay(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.case_id));
        std::fs::write(&path, serde_json::to_vec_pretty(self)?)?;
        Ok(path)
    }
}
