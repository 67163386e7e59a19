//! Code construction: per-index statistics, information-set selection,
//! information-rate estimates and polarization profiles.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::arikan;
use crate::bits::{all_strings, index_bits};
use crate::channels::{transmit, trim, DeletionParams};
use crate::error::{invalid, Error, Result};
use crate::guardband::GuardLayout;
use crate::hmm_input::{FaimProcess, ProcessFile};
use crate::logspace::{h2, ln_pow};
use crate::parallel::{map_range, Execution};
use crate::rng::{stream_rng, Stream};
use crate::sc_decoder::{conditional_probability, run_sc, FrozenMap, GenieRule, IndexPosterior, Node, ScOptions};
use crate::trellis::{build_hmm_trellis, build_input_trellis, build_tdc_trellis, Trellis};

/// Input process named in a configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpec {
    Uniform,
    Markov { p_same: f64 },
    Inline { process: ProcessFile },
}

impl ProcessSpec {
    pub fn build(&self) -> Result<FaimProcess> {
        match self {
            ProcessSpec::Uniform => Ok(FaimProcess::uniform()),
            ProcessSpec::Markov { p_same } => FaimProcess::markov(*p_same),
            ProcessSpec::Inline { process } => process.clone().into_process(),
        }
    }

    /// `uniform` or `markov:<p_same>`; anything else is not a keyword.
    pub fn from_keyword(s: &str) -> Option<Result<Self>> {
        if s == "uniform" {
            return Some(Ok(ProcessSpec::Uniform));
        }
        let p = s.strip_prefix("markov:")?;
        Some(
            p.parse::<f64>()
                .map_err(|e| Error::InvalidProcess(format!("markov parameter {p:?}: {e}")))
                .and_then(|p_same| FaimProcess::markov(p_same).map(|_| ProcessSpec::Markov { p_same })),
        )
    }
}

/// Every scheme parameter. `information_set` is 1-based and sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeConfig {
    pub n: u32,
    pub n0: u32,
    pub nu: f64,
    pub nu_prime: f64,
    pub xi: f64,
    pub delta: f64,
    pub process: ProcessSpec,
    pub information_set: Vec<usize>,
    pub common_seed: u64,
    pub target_rate: f64,
}

/// `n0 = ⌊ν n⌋`, tolerant of `ν = n0 / n` round trips.
pub fn block_depth(n: u32, nu: f64) -> u32 {
    (nu * f64::from(n) + 1e-9).floor() as u32
}

/// `ν'' = (ν + ν') / 2`.
pub fn nu_double_prime(nu: f64, nu_prime: f64) -> f64 {
    (nu + nu_prime) / 2.0
}

/// `ξ = (1 - ν''/ν) / 4`.
pub fn default_xi(nu: f64, nu_prime: f64) -> f64 {
    (1.0 - nu_double_prime(nu, nu_prime) / nu) / 4.0
}

impl CodeConfig {
    /// Defaults: `ν' = ν/2`, `ξ` from `(ν, ν'')`, no information indices.
    pub fn new(n: u32, nu: f64, delta: f64, process: ProcessSpec) -> Result<Self> {
        let nu_prime = nu / 2.0;
        let cfg = Self {
            n,
            n0: block_depth(n, nu),
            nu,
            nu_prime,
            xi: default_xi(nu, nu_prime),
            delta,
            process,
            information_set: Vec::new(),
            common_seed: 0,
            target_rate: 0.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Override the block depth, keeping `n0 = ⌊ν n⌋` by setting `ν = n0 / n`.
    pub fn with_block_depth(mut self, n0: u32) -> Result<Self> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive to set n0".into()));
        }
        let ratio = self.nu_prime / self.nu;
        self.nu = f64::from(n0) / f64::from(self.n);
        self.nu_prime = self.nu * ratio;
        self.n0 = n0;
        self.validate()?;
        Ok(self)
    }

    /// Check the configuration; returns warnings for legal but unusual values.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n > 24 {
            return bad(format!("n = {} is too large", self.n));
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return bad(format!("nu = {} outside (0, 1]", self.nu));
        }
        if !(self.nu_prime > 0.0 && self.nu_prime < self.nu) {
            return bad(format!("nu' = {} outside (0, nu)", self.nu_prime));
        }
        if self.n0 != block_depth(self.n, self.nu) {
            return bad(format!("n0 = {} but floor(nu * n) = {}", self.n0, block_depth(self.n, self.nu)));
        }
        GuardLayout::new(self.n, self.n0, self.xi).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        DeletionParams::new(self.delta).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        self.process.build().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.target_rate) {
            return bad(format!("target rate {} outside [0, 1]", self.target_rate));
        }
        let len = self.len();
        if self.information_set.windows(2).any(|w| w[0] >= w[1]) {
            return bad("information set must be strictly increasing".into());
        }
        if let Some(&i) = self.information_set.iter().find(|&&i| i == 0 || i > len) {
            return bad(format!("information index {i} outside [1, {len}]"));
        }
        let mut warnings = Vec::new();
        if self.nu > 1.0 / 3.0 {
            warnings.push(format!("nu = {} exceeds 1/3", self.nu));
        }
        if self.n0 < 2 && self.n0 < self.n {
            warnings.push("guard-band length bound needs n0 > 1".to_string());
        }
        Ok(warnings)
    }

    /// `N = 2^n`.
    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nu_double_prime(&self) -> f64 {
        nu_double_prime(self.nu, self.nu_prime)
    }

    pub fn layout(&self) -> Result<GuardLayout> {
        GuardLayout::new(self.n, self.n0, self.xi)
    }

    pub fn params(&self) -> Result<DeletionParams> {
        DeletionParams::new(self.delta)
    }

    pub fn input_process(&self) -> Result<FaimProcess> {
        self.process.build()
    }

    pub fn frozen_map(&self) -> Result<FrozenMap> {
        FrozenMap::from_information_set(self.len(), &self.information_set)
    }

    /// Payload bits per codeword symbol before guard bands.
    pub fn rate(&self) -> f64 {
        self.information_set.len() as f64 / self.len() as f64
    }
}

/// Per-index estimates in bits (entropies) or unitless (`Z`, `K`). `count`
/// is the number of Monte Carlo samples, 0 for exact values. `h` and
/// `h_hat` are absent when not requested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexStats {
    pub index: usize,
    pub h: Option<f64>,
    pub h_hat: Option<f64>,
    pub h_star: f64,
    #[serde(rename = "Z")]
    pub z: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub se_h: Option<f64>,
    pub se_h_hat: Option<f64>,
    pub se_h_star: f64,
    #[serde(rename = "se_Z")]
    pub se_z: f64,
    #[serde(rename = "se_K")]
    pub se_k: f64,
    pub count: u64,
}

/// Which conditional entropies to estimate besides `h*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StatsOptions {
    pub trials: u64,
    pub seed: u64,
    pub exec: Execution,
    /// `h`, over the untrimmed per-block deletion channel.
    pub untrimmed: bool,
    /// `ĥ`, additionally conditioned on the block boundary states.
    pub state_informed: bool,
}

impl StatsOptions {
    pub fn new(trials: u64, seed: u64) -> Self {
        Self { trials, seed, exec: Execution::default(), untrimmed: true, state_informed: true }
    }
}

const CHUNK: usize = 32;

// Slots in the accumulator.
const H_STAR: usize = 0;
const Z: usize = 1;
const K: usize = 2;
const H: usize = 3;
const H_HAT: usize = 4;
const SLOTS: usize = 5;

#[derive(Clone)]
struct Accumulator {
    sum: Vec<[f64; SLOTS]>,
    sumsq: Vec<[f64; SLOTS]>,
    weight: f64,
    count: u64,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Self { sum: vec![[0.0; SLOTS]; len], sumsq: vec![[0.0; SLOTS]; len], weight: 0.0, count: 0 }
    }

    fn add(&mut self, w: f64, values: &[[f64; SLOTS]]) {
        for (k, v) in values.iter().enumerate() {
            for s in 0..SLOTS {
                self.sum[k][s] += w * v[s];
                self.sumsq[k][s] += w * v[s] * v[s];
            }
        }
        self.weight += w;
        self.count += 1;
    }

    fn merge(&mut self, other: &Accumulator) {
        for k in 0..self.sum.len() {
            for s in 0..SLOTS {
                self.sum[k][s] += other.sum[k][s];
                self.sumsq[k][s] += other.sumsq[k][s];
            }
        }
        self.weight += other.weight;
        self.count += other.count;
    }

    fn finish(&self, layout: Streams, exact: bool) -> Vec<IndexStats> {
        let count = if exact { 0 } else { self.count };
        (0..self.sum.len())
            .map(|k| {
                let mean = |s: usize| (self.sum[k][s] / self.weight).clamp(0.0, 1.0);
                let se = |s: usize| {
                    if exact || self.count < 2 {
                        return 0.0;
                    }
                    let m = self.sum[k][s] / self.weight;
                    let var = (self.sumsq[k][s] / self.weight - m * m).max(0.0);
                    (var / (self.count - 1) as f64).sqrt()
                };
                let hat = if layout.states { H_HAT } else { H };
                IndexStats {
                    index: k + 1,
                    h: layout.untrimmed.then(|| mean(H)),
                    h_hat: layout.state_informed.then(|| mean(hat)),
                    h_star: mean(H_STAR),
                    z: mean(Z),
                    k: if layout.prior { mean(K) } else { 0.0 },
                    se_h: layout.untrimmed.then(|| se(H)),
                    se_h_hat: layout.state_informed.then(|| se(hat)),
                    se_h_star: se(H_STAR),
                    se_z: se(Z),
                    se_k: if layout.prior { se(K) } else { 0.0 },
                    count,
                }
            })
            .collect()
    }
}

/// Evidence streams fed to one genie-aided SC pass. The TDC stream always
/// comes first.
#[derive(Clone, Copy, Debug)]
struct Streams {
    /// Input-process stream for `K`; skipped for uniform input, where `K = 0`.
    prior: bool,
    untrimmed: bool,
    /// Separate state-informed stream; with one state `ĥ = h`.
    states: bool,
    state_informed: bool,
}

impl Streams {
    fn new(p: &FaimProcess, untrimmed: bool, state_informed: bool) -> Self {
        let single = p.num_states() == 1;
        let uniform = p.is_uniform_iid();
        // ĥ needs the untrimmed evidence, and reuses h when there is one state.
        let untrimmed = untrimmed || state_informed;
        Self { prior: !uniform, untrimmed, states: state_informed && !single, state_informed }
    }

    /// Per-index functionals from the posteriors of one pass.
    fn values(&self, records: &[Vec<IndexPosterior>]) -> Vec<[f64; SLOTS]> {
        records
            .iter()
            .map(|posts| {
                let mut v = [0.0; SLOTS];
                let mut next = 0;
                let mut take = || {
                    let p = conditional_probability(&posts[next]);
                    next += 1;
                    p
                };
                let p = take();
                v[H_STAR] = h2(p);
                v[Z] = bhattacharyya_term(p);
                if self.prior {
                    v[K] = (2.0 * take() - 1.0).abs();
                }
                if self.untrimmed {
                    v[H] = h2(take());
                }
                if self.states {
                    v[H_HAT] = h2(take());
                }
                v
            })
            .collect()
    }
}

/// `2 √(p (1-p))`.
pub fn bhattacharyya_term(p0: f64) -> f64 {
    2.0 * (p0 * (1.0 - p0)).max(0.0).sqrt()
}

/// `Z(X|Y) = 2 Σ_y √(P(0,y) P(1,y))` from joint pairs.
pub fn bhattacharyya(joint: &[(f64, f64)]) -> f64 {
    2.0 * joint.iter().map(|&(a, b)| (a * b).sqrt()).sum::<f64>()
}

/// `K(X|Y) = Σ_y |P(0,y) - P(1,y)|` from joint pairs.
pub fn total_variation(joint: &[(f64, f64)]) -> f64 {
    joint.iter().map(|&(a, b)| (a - b).abs()).sum()
}

/// `Σ_{x,y} P(y) |P(x|y) - 1/2|` from joint pairs.
pub fn distance_from_uniform(joint: &[(f64, f64)]) -> f64 {
    joint
        .iter()
        .filter(|&&(a, b)| a + b > 0.0)
        .map(|&(a, b)| {
            let py = a + b;
            py * ((a / py - 0.5).abs() + (b / py - 0.5).abs())
        })
        .sum()
}

/// `H(X|Y)` in bits from joint pairs.
pub fn conditional_entropy(joint: &[(f64, f64)]) -> f64 {
    joint
        .iter()
        .filter(|&&(a, b)| a + b > 0.0)
        .map(|&(a, b)| (a + b) * h2(a / (a + b)))
        .sum()
}

/// One sampled input with its per-block channel outputs.
struct BlockSample {
    x: Vec<u8>,
    states: Vec<(usize, usize)>,
    outputs: Vec<Vec<u8>>,
}

fn sample_trial(p: &FaimProcess, params: DeletionParams, n: u32, n0: u32, seed: u64, trial: u64) -> BlockSample {
    let mut src = stream_rng(seed, Stream::Source, trial);
    let mut chan = stream_rng(seed, Stream::Channel, trial);
    let blocks = 1usize << (n - n0);
    let mut s = BlockSample { x: Vec::with_capacity(1 << n), states: Vec::new(), outputs: Vec::new() };
    for _ in 0..blocks {
        let b = p.sample(1 << n0, &mut src);
        s.outputs.push(transmit(&b.x, params, &mut chan).y);
        s.states.push((b.s0, b.s_n));
        s.x.extend(b.x);
    }
    s
}

fn genie_pass(
    p: &FaimProcess,
    params: DeletionParams,
    n0: u32,
    streams: Streams,
    x: &[u8],
    outputs: &[Vec<u8>],
    states: &[(usize, usize)],
) -> Result<Vec<[f64; SLOTS]>> {
    let len0 = 1usize << n0;
    let mut nodes = Vec::with_capacity(4);
    let tdc: Vec<Trellis> = outputs
        .iter()
        .map(|y| build_tdc_trellis(len0, trim(y), params, p))
        .collect::<Result<_>>()?;
    nodes.push(Node::blocks(tdc)?);
    if streams.prior {
        let t = build_input_trellis(len0, p);
        nodes.push(Node::blocks(vec![t; outputs.len()])?);
    }
    let untrimmed: Vec<Trellis> = if streams.untrimmed || streams.states {
        outputs.iter().map(|y| build_hmm_trellis(len0, y, params, p)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    if streams.states {
        let informed = untrimmed.iter().zip(states).map(|(t, &(a, b))| t.with_boundary_states(a, b)).collect();
        if streams.untrimmed {
            nodes.push(Node::blocks(untrimmed)?);
        }
        nodes.push(Node::blocks(informed)?);
    } else if streams.untrimmed {
        nodes.push(Node::blocks(untrimmed)?);
    }
    let u = arikan::transform(x)?;
    let mut rule = GenieRule::new(&u);
    run_sc(nodes, &mut rule, &ScOptions::default())?;
    Ok(streams.values(&rule.records))
}

/// Genie-aided Monte Carlo estimates of `h*`, `Z`, `K` and optionally `h`,
/// `ĥ` for the block code of depth `n` built from blocks of depth `n0`.
/// Trials are reduced in a fixed order, so the result does not depend on
/// `opts.exec`.
pub fn estimate_block_stats(
    p: &FaimProcess,
    params: DeletionParams,
    n: u32,
    n0: u32,
    opts: &StatsOptions,
) -> Result<Vec<IndexStats>> {
    if opts.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if n0 > n || n > 24 {
        return Err(invalid(format!("unsupported depths n = {n}, n0 = {n0}")));
    }
    let streams = Streams::new(p, opts.untrimmed, opts.state_informed);
    let len = 1usize << n;
    let trials = opts.trials as usize;
    let chunks = trials.div_ceil(CHUNK);
    let partials = map_range(opts.exec, 0..chunks, |c| -> Result<Accumulator> {
        let mut acc = Accumulator::new(len);
        for trial in c * CHUNK..((c + 1) * CHUNK).min(trials) {
            let s = sample_trial(p, params, n, n0, opts.seed, trial as u64);
            acc.add(1.0, &genie_pass(p, params, n0, streams, &s.x, &s.outputs, &s.states)?);
        }
        Ok(acc)
    });
    let mut total = Accumulator::new(len);
    for part in partials {
        total.merge(&part?);
    }
    Ok(total.finish(streams, false))
}

/// [`estimate_block_stats`] for a configuration.
pub fn estimate_index_stats(cfg: &CodeConfig, opts: &StatsOptions) -> Result<Vec<IndexStats>> {
    cfg.validate()?;
    estimate_block_stats(&cfg.input_process()?, cfg.params()?, cfg.n, cfg.n0, opts)
}

/// Largest `N` accepted by the exhaustive routines.
pub const EXACT_LIMIT: usize = 12;

/// `P(X = x, S_0 = a, S_N = b)` for every state pair.
pub fn joint_with_states(p: &FaimProcess, x: &[u8]) -> Vec<Vec<f64>> {
    let s = p.num_states();
    (0..s)
        .map(|a| {
            let mut f = vec![0.0; s];
            f[a] = p.stationary()[a];
            for &sym in x {
                let mut next = vec![0.0; s];
                for (from, &mass) in f.iter().enumerate().filter(|(_, &m)| m > 0.0) {
                    for t in p.transitions(from).iter().filter(|t| t.symbol == sym) {
                        next[t.next] += mass * t.prob;
                    }
                }
                f = next;
            }
            f
        })
        .collect()
}

/// Exact per-index statistics of the monolithic code of length `2^n`,
/// evaluating leaf posteriors on every reachable `(x, y)` weighted by its
/// probability.
pub fn exact_index_stats(p: &FaimProcess, params: DeletionParams, n: u32) -> Result<Vec<IndexStats>> {
    let len = 1usize << n;
    if len > 8 {
        return Err(invalid(format!("exact statistics limited to N <= 8, got {len}")));
    }
    // Group (x, s0, sN, kept mask) by the evidence each stream needs.
    let mut by_star: HashMap<Vec<u8>, HashMap<Vec<u8>, f64>> = HashMap::new();
    let mut by_y: HashMap<Vec<u8>, HashMap<Vec<u8>, f64>> = HashMap::new();
    let mut by_state: HashMap<(Vec<u8>, usize, usize), HashMap<Vec<u8>, f64>> = HashMap::new();
    let mut prior: HashMap<Vec<u8>, f64> = HashMap::new();
    for x in all_strings(len) {
        let joint = joint_with_states(p, &x);
        let px: f64 = joint.iter().flatten().sum();
        if px == 0.0 {
            continue;
        }
        prior.insert(x.clone(), px);
        for mask in 0u32..1 << len {
            let y: Vec<u8> = (0..len).filter(|k| mask >> k & 1 == 1).map(|k| x[k]).collect();
            let w = (ln_pow(1.0 - params.delta, y.len()) + ln_pow(params.delta, len - y.len())).exp();
            if w == 0.0 {
                continue;
            }
            *by_star.entry(trim(&y).to_vec()).or_default().entry(x.clone()).or_default() += px * w;
            *by_y.entry(y.clone()).or_default().entry(x.clone()).or_default() += px * w;
            for (a, row) in joint.iter().enumerate() {
                for (b, &pj) in row.iter().enumerate().filter(|(_, &v)| v > 0.0) {
                    *by_state.entry((y.clone(), a, b)).or_default().entry(x.clone()).or_default() += pj * w;
                }
            }
        }
    }
    let single = |t: Trellis, x: &[u8]| -> Result<Vec<f64>> {
        let u = arikan::transform(x)?;
        let mut rule = GenieRule::new(&u);
        run_sc(vec![Node::blocks(vec![t])?], &mut rule, &ScOptions::default())?;
        Ok(rule.records.iter().map(|r| conditional_probability(&r[0])).collect())
    };
    let mut acc = Accumulator::new(len);
    let mut add = |slot: &[usize], w: f64, probs: &[f64]| {
        let mut v = vec![[0.0; SLOTS]; len];
        for (k, &q) in probs.iter().enumerate() {
            for &s in slot {
                v[k][s] = match s {
                    Z => bhattacharyya_term(q),
                    K => (2.0 * q - 1.0).abs(),
                    _ => h2(q),
                };
            }
        }
        for k in 0..len {
            for &s in slot {
                acc.sum[k][s] += w * v[k][s];
            }
        }
    };
    for (y, xs) in sorted(&by_star) {
        let t = build_tdc_trellis(len, y, params, p)?;
        for (x, w) in sorted(xs) {
            add(&[H_STAR, Z], *w, &single(t.clone(), x)?);
        }
    }
    for (y, xs) in sorted(&by_y) {
        let t = build_hmm_trellis(len, y, params, p)?;
        for (x, w) in sorted(xs) {
            add(&[H], *w, &single(t.clone(), x)?);
        }
    }
    for ((y, a, b), xs) in sorted(&by_state) {
        let t = build_hmm_trellis(len, y, params, p)?.with_boundary_states(*a, *b);
        for (x, w) in sorted(xs) {
            add(&[H_HAT], *w, &single(t.clone(), x)?);
        }
    }
    let input = build_input_trellis(len, p);
    for (x, w) in sorted(&prior) {
        add(&[K], *w, &single(input.clone(), x)?);
    }
    acc.weight = 1.0;
    let all = Streams { prior: true, untrimmed: true, states: true, state_informed: true };
    Ok(acc.finish(all, true))
}

fn sorted<K: Ord, V>(m: &HashMap<K, V>) -> Vec<(&K, &V)> {
    let mut v: Vec<_> = m.iter().collect();
    v.sort_by(|a, b| a.0.cmp(b.0));
    v
}

/// How to pick information indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selection {
    /// Fraction of `N` in `[0, 1]`; the best `⌊rate · N⌋` indices by `Z + K`.
    Rate(f64),
    /// Every index with both `Z < ε` and `K < ε`.
    Threshold(f64),
}

/// Rank by `Z + K` ascending, ties by index, and return the selected
/// 1-based indices in increasing order.
pub fn select_information_set(stats: &[IndexStats], selection: Selection) -> Result<Vec<usize>> {
    let mut picked: Vec<usize> = match selection {
        Selection::Rate(r) => {
            if !(0.0..=1.0).contains(&r) {
                return Err(invalid(format!("rate {r} outside [0, 1]")));
            }
            let take = (r * stats.len() as f64 + 1e-9).floor() as usize;
            let mut order: Vec<&IndexStats> = stats.iter().collect();
            order.sort_by(|a, b| (a.z + a.k).total_cmp(&(b.z + b.k)).then(a.index.cmp(&b.index)));
            order.into_iter().take(take).map(|s| s.index).collect()
        }
        Selection::Threshold(eps) => stats.iter().filter(|s| s.z < eps && s.k < eps).map(|s| s.index).collect(),
    };
    picked.sort_unstable();
    Ok(picked)
}

/// Exhaustive or sampled information-rate estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateMethod {
    Exact,
    MonteCarlo { trials: u64, seed: u64, bootstrap: u32, exec: Execution },
}

/// All entropies in bits per input symbol.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateEstimate {
    pub len: usize,
    pub method: &'static str,
    /// `I(X; Y) / N`.
    pub info_rate: f64,
    /// `H(X) / N`.
    pub input_entropy: f64,
    /// `H(X | Y) / N`.
    pub equivocation: f64,
    /// Bootstrap standard error of `info_rate` (0 for exact).
    pub std_error: f64,
    /// Bootstrap standard error of `equivocation` (0 for exact).
    pub equivocation_std_error: f64,
    pub samples: u64,
}

pub fn estimate_information_rate(
    p: &FaimProcess,
    params: DeletionParams,
    len: usize,
    method: RateMethod,
) -> Result<RateEstimate> {
    if len == 0 {
        return Err(invalid("length must be positive"));
    }
    match method {
        RateMethod::Exact => exact_rate(p, params, len),
        RateMethod::MonteCarlo { trials, seed, bootstrap, exec } => {
            sampled_rate(p, params, len, trials, seed, bootstrap, exec)
        }
    }
}

fn entropy_bits<'a>(probs: impl IntoIterator<Item = &'a f64>) -> f64 {
    probs.into_iter().filter(|&&q| q > 0.0).map(|&q| -q * q.log2()).sum()
}

fn exact_rate(p: &FaimProcess, params: DeletionParams, len: usize) -> Result<RateEstimate> {
    if len > EXACT_LIMIT {
        return Err(invalid(format!("exact rate limited to N <= {EXACT_LIMIT}, got {len}")));
    }
    let mut h_x = 0.0;
    let mut h_y_given_x = 0.0;
    let mut p_y: HashMap<(usize, u64), f64> = HashMap::new();
    let mut w_x: HashMap<(usize, u64), f64> = HashMap::new();
    for v in 0..1u64 << len {
        let x = index_bits(v, len);
        let px = p.exact_probability(&x);
        if px == 0.0 {
            continue;
        }
        h_x -= px * px.log2();
        w_x.clear();
        for mask in 0u64..1 << len {
            let (m, bits) = (0..len)
                .filter(|k| mask >> k & 1 == 1)
                .fold((0usize, 0u64), |(m, b), k| (m + 1, b << 1 | u64::from(x[k])));
            let w = (ln_pow(1.0 - params.delta, m) + ln_pow(params.delta, len - m)).exp();
            *w_x.entry((m, bits)).or_default() += w;
        }
        h_y_given_x += px * entropy_bits(w_x.values());
        for (y, w) in &w_x {
            *p_y.entry(*y).or_default() += px * w;
        }
    }
    let mut ys: Vec<_> = p_y.into_iter().collect();
    ys.sort_by_key(|e| e.0);
    let h_y = entropy_bits(ys.iter().map(|e| &e.1));
    let info = h_y - h_y_given_x;
    let n = len as f64;
    Ok(RateEstimate {
        len,
        method: "exact",
        info_rate: info / n,
        input_entropy: h_x / n,
        equivocation: (h_x - info) / n,
        std_error: 0.0,
        equivocation_std_error: 0.0,
        samples: 0,
    })
}

fn sampled_rate(
    p: &FaimProcess,
    params: DeletionParams,
    len: usize,
    trials: u64,
    seed: u64,
    bootstrap: u32,
    exec: Execution,
) -> Result<RateEstimate> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let l2 = std::f64::consts::LN_2;
    // Per sample: log2 P(x), log2 P(x|y).
    let samples = map_range(exec, 0..trials as usize, |t| -> Result<(f64, f64)> {
        let x = p.sample(len, &mut stream_rng(seed, Stream::Source, t as u64)).x;
        let y = transmit(&x, params, &mut stream_rng(seed, Stream::Channel, t as u64)).y;
        let tr = build_hmm_trellis(len, &y, params, p)?;
        let joint = tr.log_path_sum(&x)?;
        let evidence = tr.log_total_mass();
        Ok((p.log_probability(&x) / l2, (joint - evidence) / l2))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = len as f64;
    let info: Vec<f64> = samples.iter().map(|&(lx, lxy)| (lxy - lx) / n).collect();
    let equiv: Vec<f64> = samples.iter().map(|&(_, lxy)| -lxy / n).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (se_info, se_equiv) = bootstrap_se(&info, &equiv, bootstrap, seed);
    Ok(RateEstimate {
        len,
        method: "monte-carlo",
        info_rate: mean(&info),
        input_entropy: mean(&samples.iter().map(|&(lx, _)| -lx / n).collect::<Vec<_>>()),
        equivocation: mean(&equiv),
        std_error: se_info,
        equivocation_std_error: se_equiv,
        samples: trials,
    })
}

/// Bootstrap standard errors of two paired sample means.
fn bootstrap_se(a: &[f64], b: &[f64], reps: u32, seed: u64) -> (f64, f64) {
    use rand::Rng;
    if reps < 2 || a.len() < 2 {
        return (0.0, 0.0);
    }
    let mut rng = stream_rng(seed, Stream::Bootstrap, 0);
    let len = a.len();
    let mut ma = Vec::with_capacity(reps as usize);
    let mut mb = Vec::with_capacity(reps as usize);
    for _ in 0..reps {
        let (mut sa, mut sb) = (0.0, 0.0);
        for _ in 0..len {
            let k = rng.gen_range(0..len);
            sa += a[k];
            sb += b[k];
        }
        ma.push(sa / len as f64);
        mb.push(sb / len as f64);
    }
    (std_dev(&ma), std_dev(&mb))
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Fractions of indices with `h*` below `ε`, inside `[ε, 1-ε]`, above `1-ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub n: u32,
    pub low: f64,
    pub mid: f64,
    pub high: f64,
    /// `Σ_i h*_i / N`.
    pub mean_h_star: f64,
    pub trials: u64,
}

pub fn profile_row(n: u32, stats: &[IndexStats], eps: f64, trials: u64) -> ProfileRow {
    let len = stats.len() as f64;
    let count = |f: &dyn Fn(f64) -> bool| stats.iter().filter(|s| f(s.h_star)).count() as f64 / len;
    let low = count(&|h| h < eps);
    let high = count(&|h| h > 1.0 - eps);
    ProfileRow {
        n,
        low,
        mid: 1.0 - low - high,
        high,
        mean_h_star: stats.iter().map(|s| s.h_star).sum::<f64>() / len,
        trials,
    }
}

/// Monolithic TDC polarization profile over a range of depths, each depth
/// estimated from its own streams of `opts.seed`.
pub fn polarization_profile(
    p: &FaimProcess,
    params: DeletionParams,
    depths: impl IntoIterator<Item = u32>,
    eps: f64,
    opts: &StatsOptions,
) -> Result<Vec<ProfileRow>> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(invalid(format!("epsilon {eps} outside (0, 1/2)")));
    }
    let opts = StatsOptions { untrimmed: false, state_informed: false, ..*opts };
    depths
        .into_iter()
        .map(|n| {
            let stats = estimate_block_stats(p, params, n, n, &opts)?;
            Ok(profile_row(n, &stats, eps, opts.trials))
        })
        .collect()
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(fmt)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// CSV with header `index,h,h_hat,h_star,Z,K,se_h,se_h_hat,se_h_star,se_Z,se_K,count`;
/// absent entropies are empty fields.
pub fn stats_to_csv(stats: &[IndexStats]) -> Result<String> {
    to_csv(stats)
}

pub fn stats_from_csv(text: &str) -> Result<Vec<IndexStats>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<IndexStats>, _>>()
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn profile_to_csv(rows: &[ProfileRow]) -> Result<String> {
    to_csv(rows)
}
