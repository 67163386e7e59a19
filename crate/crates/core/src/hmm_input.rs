//! Finite-state input processes (FAIM: finite-state, aperiodic, irreducible,
//! Markov) and the dithered block construction.

use std::collections::{BTreeMap, HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspace::{ln, log_add, log_sum_exp, LOG_ZERO};

const ROW_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;

/// One kernel entry `P(s_next, x | s_prev)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub symbol: u8,
    pub prob: f64,
}

/// A joint state/symbol Markov process with stationary start.
#[derive(Clone, Debug, PartialEq)]
pub struct FaimProcess {
    names: Vec<String>,
    /// Positive-probability transitions per previous state, sorted by (next, symbol).
    out: Vec<Vec<Transition>>,
    stationary: Vec<f64>,
}

impl FaimProcess {
    /// Build a process from per-state transition lists. Duplicate
    /// `(next, symbol)` entries are summed and zero entries dropped. When
    /// `stationary` is `None` it is computed.
    pub fn new(
        names: Vec<String>,
        kernel: Vec<Vec<Transition>>,
        stationary: Option<Vec<f64>>,
    ) -> Result<Self> {
        let s = names.len();
        if s == 0 {
            return Err(Error::InvalidProcess("no states".into()));
        }
        if kernel.len() != s {
            return Err(Error::InvalidProcess(format!(
                "kernel has {} rows for {s} states",
                kernel.len()
            )));
        }
        let mut out = Vec::with_capacity(s);
        for row in kernel {
            let mut merged: BTreeMap<(usize, u8), f64> = BTreeMap::new();
            for t in row {
                if t.next >= s || t.symbol > 1 {
                    return Err(Error::InvalidProcess(format!("bad transition {t:?}")));
                }
                if !(t.prob >= 0.0 && t.prob <= 1.0) {
                    return Err(Error::InvalidProcess(format!("probability {} out of range", t.prob)));
                }
                *merged.entry((t.next, t.symbol)).or_default() += t.prob;
            }
            out.push(
                merged
                    .into_iter()
                    .filter(|&(_, p)| p > 0.0)
                    .map(|((next, symbol), prob)| Transition { next, symbol, prob })
                    .collect(),
            );
        }
        let mut p = Self {
            names,
            out,
            stationary: Vec::new(),
        };
        p.stationary = match stationary {
            Some(pi) if pi.len() == s => pi,
            Some(pi) => {
                return Err(Error::InvalidProcess(format!(
                    "stationary vector has length {}, expected {s}",
                    pi.len()
                )))
            }
            None => p.compute_stationary(),
        };
        Ok(p)
    }

    /// The uniform i.i.d. process: one state, each symbol with probability 1/2.
    pub fn uniform() -> Self {
        Self::new(
            vec!["s".into()],
            vec![vec![
                Transition { next: 0, symbol: 0, prob: 0.5 },
                Transition { next: 0, symbol: 1, prob: 0.5 },
            ]],
            Some(vec![1.0]),
        )
        .expect("uniform process is well formed")
    }

    /// First-order binary Markov source with `P(X_j = X_{j-1}) = p_same`;
    /// the state is the previous symbol.
    pub fn markov(p_same: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_same) {
            return Err(Error::InvalidProcess(format!("p_same = {p_same} outside [0,1]")));
        }
        let row = |a: usize| {
            vec![
                Transition { next: a, symbol: a as u8, prob: p_same },
                Transition { next: 1 - a, symbol: (1 - a) as u8, prob: 1.0 - p_same },
            ]
        };
        Self::new(vec!["0".into(), "1".into()], vec![row(0), row(1)], None)
    }

    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn transitions(&self, prev: usize) -> &[Transition] {
        &self.out[prev]
    }

    /// `P(s_next, x | s_prev)`.
    pub fn prob(&self, prev: usize, next: usize, symbol: u8) -> f64 {
        self.out[prev]
            .iter()
            .find(|t| t.next == next && t.symbol == symbol)
            .map_or(0.0, |t| t.prob)
    }

    /// True for a single-state process emitting each symbol with probability 1/2.
    pub fn is_uniform_iid(&self) -> bool {
        self.num_states() == 1
            && (self.prob(0, 0, 0) - 0.5).abs() < 1e-15
            && (self.prob(0, 0, 1) - 0.5).abs() < 1e-15
    }

    /// Marginal state transition matrix `M[a][b] = Σ_x P(b, x | a)`.
    pub fn state_matrix(&self) -> Vec<Vec<f64>> {
        let s = self.num_states();
        let mut m = vec![vec![0.0; s]; s];
        for (a, row) in self.out.iter().enumerate() {
            for t in row {
                m[a][t.next] += t.prob;
            }
        }
        m
    }

    fn step(&self, pi: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; pi.len()];
        for (a, row) in self.out.iter().enumerate() {
            for t in row {
                next[t.next] += pi[a] * t.prob;
            }
        }
        next
    }

    fn compute_stationary(&self) -> Vec<f64> {
        let s = self.num_states();
        let mut pi = vec![1.0 / s as f64; s];
        for _ in 0..200_000 {
            let next = self.step(&pi);
            let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if diff < 1e-13 {
                return pi;
            }
        }
        self.dense_stationary().unwrap_or(pi)
    }

    /// Solve `π (M - I) = 0`, `Σ π = 1` directly.
    fn dense_stationary(&self) -> Option<Vec<f64>> {
        let s = self.num_states();
        let m = self.state_matrix();
        let mut a = DMatrix::<f64>::zeros(s, s);
        for r in 0..s {
            for c in 0..s {
                a[(r, c)] = m[c][r] - if r == c { 1.0 } else { 0.0 };
            }
        }
        for c in 0..s {
            a[(s - 1, c)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(s);
        rhs[s - 1] = 1.0;
        a.lu().solve(&rhs).map(|v| v.iter().copied().collect())
    }

    pub fn validate(&self) -> Diagnostics {
        let s = self.num_states();
        let mut violations = Vec::new();
        let mut max_row_error: f64 = 0.0;
        for (a, row) in self.out.iter().enumerate() {
            let sum: f64 = row.iter().map(|t| t.prob).sum();
            max_row_error = max_row_error.max((sum - 1.0).abs());
            if (sum - 1.0).abs() > ROW_TOL {
                violations.push(format!("row of state {} sums to {sum}", self.names[a]));
            }
        }
        let pi_sum: f64 = self.stationary.iter().sum();
        let stepped = self.step(&self.stationary);
        let stationary_residual = stepped
            .iter()
            .zip(&self.stationary)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if self.stationary.iter().any(|&p| p < 0.0) || (pi_sum - 1.0).abs() > STATIONARY_TOL {
            violations.push(format!("stationary vector is not a distribution (sum {pi_sum})"));
        }
        if stationary_residual > STATIONARY_TOL {
            violations.push(format!("stationary residual {stationary_residual:e}"));
        }
        let adj: Vec<Vec<usize>> = self
            .out
            .iter()
            .map(|row| row.iter().map(|t| t.next).collect())
            .collect();
        let forward = bfs_levels(&adj, 0);
        let mut radj = vec![Vec::new(); s];
        for (a, row) in adj.iter().enumerate() {
            for &b in row {
                radj[b].push(a);
            }
        }
        let backward = bfs_levels(&radj, 0);
        let irreducible = forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some);
        if !irreducible {
            violations.push("state chain is not irreducible".into());
        }
        let period = if irreducible {
            let mut g = 0usize;
            for (a, row) in adj.iter().enumerate() {
                for &b in row {
                    let (la, lb) = (forward[a].unwrap(), forward[b].unwrap());
                    g = gcd(g, (la + 1).abs_diff(lb));
                }
            }
            Some(g)
        } else {
            None
        };
        if irreducible && period != Some(1) {
            violations.push(format!("state chain has period {}", period.unwrap_or(0)));
        }
        Diagnostics {
            passed: violations.is_empty(),
            violations,
            irreducible,
            period,
            reachable_from_first: forward.iter().filter(|l| l.is_some()).count(),
            max_row_error,
            stationary_residual,
        }
    }

    /// Draw `(x, s_0, s_N)` with `s_0 ~ π`.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> ProcessSample {
        let s0 = draw(rng, self.stationary.iter().copied()).unwrap_or(0);
        let mut state = s0;
        let mut x = Vec::with_capacity(len);
        for _ in 0..len {
            let row = &self.out[state];
            let k = draw(rng, row.iter().map(|t| t.prob)).unwrap_or(row.len() - 1);
            x.push(row[k].symbol);
            state = row[k].next;
        }
        ProcessSample { x, s0, s_n: state }
    }

    /// `ln P(X = x)` by the forward algorithm.
    pub fn log_probability(&self, x: &[u8]) -> f64 {
        let s = self.num_states();
        let mut f: Vec<f64> = self.stationary.iter().map(|&p| ln(p)).collect();
        let mut next = vec![LOG_ZERO; s];
        for &sym in x {
            next.iter_mut().for_each(|v| *v = LOG_ZERO);
            for (a, row) in self.out.iter().enumerate() {
                if f[a] == LOG_ZERO {
                    continue;
                }
                for t in row.iter().filter(|t| t.symbol == sym) {
                    next[t.next] = log_add(next[t.next], f[a] + t.prob.ln());
                }
            }
            std::mem::swap(&mut f, &mut next);
        }
        log_sum_exp(&f)
    }

    pub fn exact_probability(&self, x: &[u8]) -> f64 {
        self.log_probability(x).exp()
    }

    /// Parse the JSON process format used by the CLI.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProcessFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidProcess(e.to_string()))?;
        file.into_process()
    }

    pub fn to_file(&self) -> ProcessFile {
        let mut kernel = BTreeMap::new();
        for (a, row) in self.out.iter().enumerate() {
            kernel.insert(
                self.names[a].clone(),
                row.iter()
                    .map(|t| (self.names[t.next].clone(), t.symbol, t.prob))
                    .collect(),
            );
        }
        ProcessFile {
            states: self.names.clone(),
            kernel,
            stationary: Some(self.stationary.clone()),
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64>) -> Option<usize> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (k, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(k);
        if u < acc {
            return Some(k);
        }
    }
    last
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(a) = queue.pop_front() {
        let la = level[a].unwrap();
        for &b in &adj[a] {
            if level[b].is_none() {
                level[b] = Some(la + 1);
                queue.push_back(b);
            }
        }
    }
    level
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessSample {
    pub x: Vec<u8>,
    pub s0: usize,
    pub s_n: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub passed: bool,
    pub violations: Vec<String>,
    pub irreducible: bool,
    /// Period of the state chain, when irreducible.
    pub period: Option<usize>,
    pub reachable_from_first: usize,
    pub max_row_error: f64,
    pub stationary_residual: f64,
}

/// On-disk process description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessFile {
    pub states: Vec<String>,
    /// `s_prev -> [(s_next, symbol, prob), ...]`
    pub kernel: BTreeMap<String, Vec<(String, u8, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stationary: Option<Vec<f64>>,
}

impl ProcessFile {
    pub fn into_process(self) -> Result<FaimProcess> {
        let index: HashMap<&str, usize> = self
            .states
            .iter()
            .enumerate()
            .map(|(k, n)| (n.as_str(), k))
            .collect();
        if index.len() != self.states.len() {
            return Err(Error::InvalidProcess("duplicate state names".into()));
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::InvalidProcess(format!("unknown state {name:?}")))
        };
        let mut kernel = vec![Vec::new(); self.states.len()];
        for (prev, row) in &self.kernel {
            let a = lookup(prev)?;
            for (next, symbol, prob) in row {
                kernel[a].push(Transition {
                    next: lookup(next)?,
                    symbol: *symbol,
                    prob: *prob,
                });
            }
        }
        FaimProcess::new(self.states, kernel, self.stationary)
    }
}

/// Turn a block distribution into a regular hidden-Markov process.
///
/// `block_dist[k]` is the probability of the length-`n` block whose bits,
/// most significant first, spell `k`. States are the positive-probability
/// prefixes of length `0..n` plus a dither state `tau`; after each block the
/// chain returns to the empty prefix or enters `tau` with probability 1/2,
/// and `tau` emits a 0 before returning to the empty prefix.
pub fn build_dithered_block_process(n: usize, block_dist: &[f64]) -> Result<FaimProcess> {
    if n == 0 || n > 20 {
        return Err(Error::InvalidArgument(format!("block length {n} outside [1, 20]")));
    }
    if block_dist.len() != 1 << n {
        return Err(Error::InvalidArgument(format!(
            "block distribution has {} entries, expected {}",
            block_dist.len(),
            1usize << n
        )));
    }
    if block_dist.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::InvalidArgument("negative block probability".into()));
    }
    let total: f64 = block_dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "block distribution sums to {total}, expected 1"
        )));
    }
    // prefix_mass[len][value]: probability that the block starts with `value`.
    let mut prefix_mass: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    prefix_mass[n] = block_dist.to_vec();
    for len in (0..n).rev() {
        prefix_mass[len] = prefix_mass[len + 1]
            .chunks_exact(2)
            .map(|c| c[0] + c[1])
            .collect();
    }
    let mut names = Vec::new();
    let mut id: HashMap<(usize, usize), usize> = HashMap::new();
    for len in 0..n {
        for (value, &mass) in prefix_mass[len].iter().enumerate() {
            if mass > 0.0 {
                id.insert((len, value), names.len());
                names.push(if len == 0 {
                    "eps".to_string()
                } else {
                    crate::bits::BitString::from_index(value as u64, len).to_string()
                });
            }
        }
    }
    let eps = 0;
    let tau = names.len();
    names.push("tau".into());
    let mut kernel = vec![Vec::new(); names.len()];
    for len in 0..n {
        for (value, &mass) in prefix_mass[len].iter().enumerate() {
            if mass <= 0.0 {
                continue;
            }
            let from = id[&(len, value)];
            for symbol in 0..2u8 {
                let child = 2 * value + symbol as usize;
                let p = prefix_mass[len + 1][child] / mass;
                if p <= 0.0 {
                    continue;
                }
                if len + 1 < n {
                    kernel[from].push(Transition { next: id[&(len + 1, child)], symbol, prob: p });
                } else {
                    kernel[from].push(Transition { next: eps, symbol, prob: p / 2.0 });
                    kernel[from].push(Transition { next: tau, symbol, prob: p / 2.0 });
                }
            }
        }
    }
    kernel[tau].push(Transition { next: eps, symbol: 0, prob: 1.0 });
    FaimProcess::new(names, kernel, None)
}
