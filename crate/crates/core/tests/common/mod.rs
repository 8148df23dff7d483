//! Independent reference implementations used by the integration tests.
//! They share no numeric code with the library: the encoder is a plain
//! f64 loop over the documented weight layout, the tree is an exhaustive
//! split search with two-pass squared errors.

#![allow(dead_code)]

use std::collections::HashMap;

/// Weights as `(name, shape, values)` in canonical order.
pub struct OracleWeights {
    pub tensors: HashMap<String, (Vec<usize>, Vec<f64>)>,
    pub vocab: Vec<char>,
}

impl OracleWeights {
    fn get(&self, name: &str) -> (&[usize], &[f64]) {
        let (s, d) = &self.tensors[name];
        (s, d)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn lstm(w: &OracleWeights, dir: &str, xs: &[Vec<f64>], reverse: bool) -> Vec<Vec<f64>> {
    let (wih_s, wih) = w.get(&format!("lstm.{dir}.w_ih"));
    let (_, whh) = w.get(&format!("lstm.{dir}.w_hh"));
    let (_, bias) = w.get(&format!("lstm.{dir}.bias"));
    let h4 = wih_s[0];
    let d = wih_s[1];
    let hd = h4 / 4;
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    let mut out = vec![Vec::new(); xs.len()];
    let order: Vec<usize> = if reverse { (0..xs.len()).rev().collect() } else { (0..xs.len()).collect() };
    for t in order {
        let mut g = vec![0.0; h4];
        for r in 0..h4 {
            let mut s = bias[r];
            for j in 0..d {
                s += wih[r * d + j] * xs[t][j];
            }
            for j in 0..hd {
                s += whh[r * hd + j] * h[j];
            }
            g[r] = s;
        }
        for j in 0..hd {
            let i = sigmoid(g[j]);
            let f = sigmoid(g[hd + j]);
            let cc = g[2 * hd + j].tanh();
            let o = sigmoid(g[3 * hd + j]);
            c[j] = f * c[j] + i * cc;
            h[j] = o * c[j].tanh();
        }
        out[t] = h.clone();
    }
    out
}

/// Forward and backward hidden states for every character of `text`.
pub fn oracle_encode(w: &OracleWeights, text: &str) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let (emb_s, emb) = w.get("embedding");
    let e = emb_s[1];
    let mut x: Vec<Vec<f64>> = text
        .chars()
        .map(|ch| {
            let id = w.vocab.iter().position(|v| *v == ch).expect("char in vocab");
            emb[id * e..(id + 1) * e].to_vec()
        })
        .collect();
    let len = x.len();
    for l in 1..=3 {
        let (ks, k) = w.get(&format!("conv{l}.weight"));
        let (_, b) = w.get(&format!("conv{l}.bias"));
        let (cout, cin, kw) = (ks[0], ks[1], ks[2]);
        let r = kw / 2;
        let mut y = vec![vec![0.0; cout]; len];
        for t in 0..len {
            for o in 0..cout {
                let mut s = b[o];
                for tap in 0..kw {
                    let src = t as isize + tap as isize - r as isize;
                    if src < 0 || src >= len as isize {
                        continue;
                    }
                    for i in 0..cin {
                        s += k[(o * cin + i) * kw + tap] * x[src as usize][i];
                    }
                }
                y[t][o] = s.max(0.0);
            }
        }
        x = y;
    }
    (lstm(w, "fwd", &x, false), lstm(w, "bwd", &x, true))
}

/// Character spans of the tokens of `raw`, split by hand: runs of letters
/// (with inner apostrophes or hyphens), single spaces, single punctuation.
pub fn oracle_token_spans(raw: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = raw.chars().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < chars.len() {
                let joiner = matches!(chars[i], '\'' | '\u{2019}' | '-')
                    && chars[i - 1].is_alphabetic()
                    && chars.get(i + 1).is_some_and(|n| n.is_alphabetic());
                if chars[i].is_alphanumeric() || joiner {
                    i += 1;
                } else {
                    break;
                }
            }
            spans.push((start, i));
        } else {
            spans.push((i, i + 1));
            i += 1;
        }
    }
    spans
}

pub fn oracle_cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

/// `d(n, k)` for `n = 1..=N`, `k = 0..=k_max`; `out[k][n - 1]`.
pub fn oracle_drift(w: &OracleWeights, raw: &str, k_max: usize) -> Vec<Vec<f64>> {
    let spans = oracle_token_spans(raw);
    let len = spans.len();
    let chars: Vec<char> = raw.chars().collect();
    let vector = |states: &(Vec<Vec<f64>>, Vec<Vec<f64>>), n: usize| {
        let (s, e) = spans[n - 1];
        let mut z = states.0[e - 1].clone();
        z.extend_from_slice(&states.1[s]);
        z
    };
    let full = oracle_encode(w, raw);
    let mut prefix_states: HashMap<usize, (Vec<Vec<f64>>, Vec<Vec<f64>>)> = HashMap::new();
    let mut out = vec![vec![0.0; len]; k_max + 1];
    for k in 0..=k_max {
        for n in 1..=len {
            let c = (n + k).min(len);
            let states = prefix_states.entry(c).or_insert_with(|| {
                let text: String = chars[..spans[c - 1].1].iter().collect();
                oracle_encode(w, &text)
            });
            out[k][n - 1] = oracle_cosine_distance(&vector(states, n), &vector(&full, n));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleTree {
    Leaf { value: f64, rows: Vec<usize> },
    Split { feature: usize, threshold: f64, left_rows: Vec<usize>, left: Box<OracleTree>, right: Box<OracleTree> },
}

fn sse(ys: &[f64]) -> f64 {
    let m = ys.iter().sum::<f64>() / ys.len() as f64;
    ys.iter().map(|y| (y - m) * (y - m)).sum()
}

/// Exhaustive regression tree: every feature, every boundary between
/// distinct sorted values, lowest summed child SSE wins; a later candidate
/// must improve by more than `1e-10 * sum(y^2)` to replace an earlier one.
pub fn oracle_tree(x: &[Vec<f64>], y: &[f64], rows: Vec<usize>) -> OracleTree {
    let ys: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let leaf = |rows: Vec<usize>| {
        let mut sorted = rows.clone();
        sorted.sort_unstable();
        let value = sorted.iter().map(|&r| y[r]).sum::<f64>() / sorted.len() as f64;
        OracleTree::Leaf { value, rows }
    };
    if rows.len() < 2 || ys.iter().all(|v| *v == ys[0]) {
        return leaf(rows);
    }
    let tol = 1e-10 * ys.iter().map(|v| v * v).sum::<f64>();
    let mut best: Option<(f64, usize, f64)> = None;
    for (f, col) in x.iter().enumerate() {
        let mut vals: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = {
                let m = (w[0] + w[1]) / 2.0;
                if m >= w[0] && m < w[1] { m } else { w[0] }
            };
            let (l, r): (Vec<f64>, Vec<f64>) = {
                let l = rows.iter().filter(|&&i| col[i] <= thr).map(|&i| y[i]).collect();
                let r = rows.iter().filter(|&&i| col[i] > thr).map(|&i| y[i]).collect();
                (l, r)
            };
            let cost = sse(&l) + sse(&r);
            if best.is_none_or(|(b, _, _)| cost < b - tol) {
                best = Some((cost, f, thr));
            }
        }
    }
    let Some((_, feature, threshold)) = best else { return leaf(rows) };
    let (lr, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[feature][i] <= threshold);
    OracleTree::Split {
        feature,
        threshold,
        left_rows: lr.clone(),
        left: Box::new(oracle_tree(x, y, lr)),
        right: Box::new(oracle_tree(x, y, rr)),
    }
}
