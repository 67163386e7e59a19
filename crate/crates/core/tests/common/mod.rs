//! Brute-force reference computations, written without the library.
#![allow(dead_code)]

use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug)]
pub enum Src {
    Uniform,
    /// Binary Markov chain with `P(X_j = X_{j-1}) = p`, stationary start.
    Markov(f64),
}

pub fn bits(v: u64, len: usize) -> Vec<u8> {
    (0..len).map(|k| (v >> (len - 1 - k) & 1) as u8).collect()
}

pub fn strings(len: usize) -> Vec<Vec<u8>> {
    (0..1u64 << len).map(|v| bits(v, len)).collect()
}

pub fn prob(src: Src, x: &[u8]) -> f64 {
    match src {
        Src::Uniform => 0.5f64.powi(x.len() as i32),
        Src::Markov(p) => {
            let mut q = if x.is_empty() { 1.0 } else { 0.5 };
            for w in x.windows(2) {
                q *= if w[0] == w[1] { p } else { 1.0 - p };
            }
            q
        }
    }
}

pub fn strip(y: &[u8]) -> Vec<u8> {
    let mut a = 0;
    let mut b = y.len();
    while a < b && y[a] == 0 {
        a += 1;
    }
    while b > a && y[b - 1] == 0 {
        b -= 1;
    }
    y[a..b].to_vec()
}

/// `W(y|x)` for every `y`, summing over all `2^N` deletion patterns.
pub fn deletion_law(x: &[u8], delta: f64) -> BTreeMap<Vec<u8>, f64> {
    let n = x.len();
    let mut out = BTreeMap::new();
    for mask in 0u64..1 << n {
        let mut y = Vec::new();
        let mut w = 1.0;
        for (k, &s) in x.iter().enumerate() {
            if mask >> k & 1 == 1 {
                y.push(s);
                w *= 1.0 - delta;
            } else {
                w *= delta;
            }
        }
        *out.entry(y).or_insert(0.0) += w;
    }
    out
}

/// `W*(y*|x)`: deletion followed by trimming.
pub fn trimmed_law(x: &[u8], delta: f64) -> BTreeMap<Vec<u8>, f64> {
    let mut out = BTreeMap::new();
    for (y, w) in deletion_law(x, delta) {
        *out.entry(strip(&y)).or_insert(0.0) += w;
    }
    out
}

/// Polar transform by recursion on halves: first half from pairwise XORs,
/// second half from the second element of each pair.
pub fn polar(x: &[u8]) -> Vec<u8> {
    if x.len() == 1 {
        return x.to_vec();
    }
    let xor: Vec<u8> = (0..x.len() / 2).map(|k| x[2 * k] ^ x[2 * k + 1]).collect();
    let odd: Vec<u8> = (0..x.len() / 2).map(|k| x[2 * k + 1]).collect();
    let mut u = polar(&xor);
    u.extend(polar(&odd));
    u
}

/// Joint table `P(X = x, Y = y)` keyed by `(x, y)`.
pub fn joint(src: Src, delta: f64, len: usize, trimmed: bool) -> Vec<(Vec<u8>, Vec<u8>, f64)> {
    let mut out = Vec::new();
    for x in strings(len) {
        let px = prob(src, &x);
        let law = if trimmed { trimmed_law(&x, delta) } else { deletion_law(&x, delta) };
        for (y, w) in law {
            if px * w > 0.0 {
                out.push((x.clone(), y, px * w));
            }
        }
    }
    out
}

fn h(p: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else {
        -p * p.log2()
    }
}

/// `H(X|Y)` in bits from a joint table.
pub fn conditional_entropy(table: &[(Vec<u8>, Vec<u8>, f64)]) -> f64 {
    let mut py: BTreeMap<&[u8], f64> = BTreeMap::new();
    for (_, y, p) in table {
        *py.entry(y).or_insert(0.0) += p;
    }
    let hxy: f64 = table.iter().map(|(_, _, p)| h(*p)).sum();
    let hy: f64 = py.values().map(|&p| h(p)).sum();
    hxy - hy
}

pub fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1e-300)
    }
}

/// Least-squares slope of `log2 t` against `log2 n`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
