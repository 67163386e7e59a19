//! Successive cancellation over trellises.
//!
//! The recursion keeps one node per depth: it builds the minus child,
//! decodes it, re-encodes the hard decisions into `z = x^[0]`, builds the
//! plus child conditioned on `z`, and returns `x` for the parent. A node is
//! either a set of per-block trellises (stage one) or, once the blocks are
//! reduced to single symbols, a vector of probability pairs (stage two).

use crate::arikan::{self, combine, plus_condition, BranchPath};
use crate::error::{invalid, Error, Result};
use crate::logspace::{log_add, LOG_ZERO};
use crate::parallel::{map_vec, Execution};
use crate::rng::CommonRandomness;
use crate::trellis::Trellis;

/// `ln P(U_i = u, U_1^{i-1} = û, evidence)` for `u = 0, 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndexPosterior {
    pub log_p0: f64,
    pub log_p1: f64,
}

impl IndexPosterior {
    pub fn from_log(v: [f64; 2]) -> Self {
        Self { log_p0: v[0], log_p1: v[1] }
    }

    pub fn p0(&self) -> f64 {
        self.log_p0.exp()
    }

    pub fn p1(&self) -> f64 {
        self.log_p1.exp()
    }

    /// The conditioning event has probability zero.
    pub fn is_null(&self) -> bool {
        self.log_p0 == LOG_ZERO && self.log_p1 == LOG_ZERO
    }
}

/// `P(U_i = 0 | past, evidence)`, or exactly 1/2 for a null event.
pub fn conditional_probability(post: &IndexPosterior) -> f64 {
    if post.is_null() {
        return 0.5;
    }
    1.0 / (1.0 + (post.log_p1 - post.log_p0).exp())
}

/// Leaf path sums along branch `b` with past decisions `û`, applying the
/// transforms one at a time.
pub fn leaf_posterior(base: &Trellis, b: &BranchPath, u_hat: &[u8]) -> Result<IndexPosterior> {
    let n = arikan::log2_exact(base.n_sections())?;
    if b.depth() != n as usize {
        return Err(invalid(format!("branch depth {} != {n}", b.depth())));
    }
    let i = arikan::branch_to_index(b);
    if u_hat.len() != i - 1 {
        return Err(Error::LengthMismatch { expected: i - 1, got: u_hat.len() });
    }
    let mut t = base.clone();
    for lambda in 1..=n as usize {
        t = if b.bits()[lambda - 1] == 0 {
            t.minus_transform()?
        } else {
            t.plus_transform(&plus_condition(&b.prefix(lambda), n, u_hat)?)?
        };
    }
    Ok(IndexPosterior::from_log(t.leaf_log_values()?))
}

/// Which indices carry payload; the rest are shaped by common randomness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrozenMap {
    info: Vec<bool>,
}

impl FrozenMap {
    pub fn all_frozen(n: usize) -> Self {
        Self { info: vec![false; n] }
    }

    /// `set` holds 1-based information indices.
    pub fn from_information_set(n: usize, set: &[usize]) -> Result<Self> {
        let mut info = vec![false; n];
        for &i in set {
            if i == 0 || i > n {
                return Err(invalid(format!("information index {i} outside [1, {n}]")));
            }
            info[i - 1] = true;
        }
        Ok(Self { info })
    }

    pub fn len(&self) -> usize {
        self.info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.info.is_empty()
    }

    pub fn is_information(&self, i: usize) -> bool {
        self.info[i - 1]
    }

    pub fn information_indices(&self) -> Vec<usize> {
        (1..=self.len()).filter(|&i| self.is_information(i)).collect()
    }
}

/// Shaped-index rule: `u_i = 0` iff `r_i < P(U_i = 0 | past)`.
pub fn shaped_bit(common: &CommonRandomness, i: usize, p0: f64) -> u8 {
    u8::from(common.r(i) >= p0)
}

/// Decides `u_i` from the leaf posteriors of every evidence stream.
pub trait DecisionRule {
    fn decide(&mut self, i: usize, posts: &[IndexPosterior]) -> u8;
}

/// The decoder rule. Stream 0 carries channel evidence; the optional stream 1
/// is the input process alone and drives shaped indices.
pub struct DecoderRule<'a> {
    pub frozen: &'a FrozenMap,
    pub common: CommonRandomness,
    /// Information indices decided from a zero-probability event.
    pub zero_mass: Vec<usize>,
}

impl DecisionRule for DecoderRule<'_> {
    fn decide(&mut self, i: usize, posts: &[IndexPosterior]) -> u8 {
        if self.frozen.is_information(i) {
            if posts[0].is_null() {
                self.zero_mass.push(i);
            }
            u8::from(conditional_probability(&posts[0]) < 0.5)
        } else {
            let p0 = posts.get(1).map_or(0.5, conditional_probability);
            shaped_bit(&self.common, i, p0)
        }
    }
}

/// Genie rule: always takes the true value and records every posterior.
pub struct GenieRule<'a> {
    pub truth: &'a [u8],
    pub records: Vec<Vec<IndexPosterior>>,
}

impl<'a> GenieRule<'a> {
    pub fn new(truth: &'a [u8]) -> Self {
        Self { truth, records: Vec::with_capacity(truth.len()) }
    }
}

impl DecisionRule for GenieRule<'_> {
    fn decide(&mut self, i: usize, posts: &[IndexPosterior]) -> u8 {
        self.records.push(posts.to_vec());
        self.truth[i - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScOptions {
    /// Prune dead vertices after every transform.
    pub prune: bool,
    /// Parallelism across blocks inside one transform step.
    pub exec: Execution,
}

impl Default for ScOptions {
    fn default() -> Self {
        Self { prune: true, exec: Execution::Sequential }
    }
}

/// One evidence stream at some depth of the recursion.
#[derive(Clone, Debug)]
pub enum Node {
    /// Independent per-block trellises, all with the same section count.
    Blocks(Vec<Trellis>),
    /// One `[ln P(0), ln P(1)]` pair per symbol; the joint law is the product
    /// of the pairs times `exp(log_scale)`.
    Pairs { pairs: Vec<[f64; 2]>, log_scale: f64 },
}

impl Node {
    pub fn blocks(blocks: Vec<Trellis>) -> Result<Node> {
        let first = blocks.first().ok_or_else(|| invalid("no blocks"))?.n_sections();
        if blocks.iter().any(|t| t.n_sections() != first) {
            return Err(invalid("blocks differ in length"));
        }
        arikan::log2_exact(first)?;
        arikan::log2_exact(blocks.len())?;
        Ok(Node::Blocks(blocks))
    }

    pub fn len(&self) -> usize {
        match self {
            Node::Blocks(ts) => ts.len() * ts[0].n_sections(),
            Node::Pairs { pairs, .. } => pairs.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn to_pairs(&self) -> Result<Node> {
        match self {
            Node::Pairs { .. } => Ok(self.clone()),
            Node::Blocks(ts) => {
                let mut pairs = Vec::with_capacity(ts.len());
                let mut log_scale = 0.0;
                for t in ts {
                    let v = t.leaf_log_values()?;
                    let m = v[0].max(v[1]);
                    if m == LOG_ZERO {
                        return Ok(null_pairs(ts.len()));
                    }
                    log_scale += m;
                    pairs.push([v[0] - m, v[1] - m]);
                }
                Ok(Node::Pairs { pairs, log_scale })
            }
        }
    }

    fn stage_one(&self) -> Option<&[Trellis]> {
        match self {
            Node::Blocks(ts) if ts[0].n_sections() > 1 => Some(ts),
            _ => None,
        }
    }

    fn minus(&self, opts: &ScOptions) -> Result<(Node, u64)> {
        if let Some(ts) = self.stage_one() {
            return transform_blocks(ts, opts, |t| t.minus_with_work());
        }
        let Node::Pairs { pairs, log_scale } = self.to_pairs()? else { unreachable!() };
        let mut out = Vec::with_capacity(pairs.len() / 2);
        let mut scale = log_scale;
        for p in pairs.chunks_exact(2) {
            let (a, b) = (p[0], p[1]);
            let c = [log_add(a[0] + b[0], a[1] + b[1]), log_add(a[0] + b[1], a[1] + b[0])];
            match renormalise(c) {
                Some((c, m)) => {
                    scale += m;
                    out.push(c);
                }
                None => return Ok((null_pairs(pairs.len() / 2), 0)),
            }
        }
        Ok((Node::Pairs { pairs: out, log_scale: scale }, pairs.len() as u64 * 2))
    }

    fn plus(&self, z: &[u8], opts: &ScOptions) -> Result<(Node, u64)> {
        if let Some(ts) = self.stage_one() {
            let per = ts[0].n_sections() / 2;
            let jobs: Vec<(&Trellis, &[u8])> = ts.iter().zip(z.chunks_exact(per)).collect();
            let results = map_vec(opts.exec, jobs, |(t, zs)| {
                t.plus_with_work(zs).map(|(c, w)| (if opts.prune { c.prune() } else { c }, w))
            });
            return collect_blocks(results);
        }
        let Node::Pairs { pairs, log_scale } = self.to_pairs()? else { unreachable!() };
        if z.len() * 2 != pairs.len() {
            return Err(Error::LengthMismatch { expected: pairs.len() / 2, got: z.len() });
        }
        let mut out = Vec::with_capacity(z.len());
        let mut scale = log_scale;
        for (p, &zj) in pairs.chunks_exact(2).zip(z) {
            let (a, b) = (p[0], p[1]);
            let zj = zj as usize;
            let c = [a[zj] + b[0], a[zj ^ 1] + b[1]];
            match renormalise(c) {
                Some((c, m)) => {
                    scale += m;
                    out.push(c);
                }
                None => return Ok((null_pairs(z.len()), 0)),
            }
        }
        Ok((Node::Pairs { pairs: out, log_scale: scale }, pairs.len() as u64))
    }

    fn leaf(&self) -> Result<IndexPosterior> {
        match self {
            Node::Blocks(ts) if ts.len() == 1 => Ok(IndexPosterior::from_log(ts[0].leaf_log_values()?)),
            Node::Pairs { pairs, log_scale } if pairs.len() == 1 => Ok(IndexPosterior {
                log_p0: pairs[0][0] + log_scale,
                log_p1: pairs[0][1] + log_scale,
            }),
            _ => Err(invalid("leaf requested on a node of length > 1")),
        }
    }
}

fn renormalise(c: [f64; 2]) -> Option<([f64; 2], f64)> {
    let m = c[0].max(c[1]);
    (m > LOG_ZERO).then(|| ([c[0] - m, c[1] - m], m))
}

fn null_pairs(len: usize) -> Node {
    Node::Pairs { pairs: vec![[0.0; 2]; len], log_scale: LOG_ZERO }
}

fn transform_blocks(
    ts: &[Trellis],
    opts: &ScOptions,
    f: impl Fn(&Trellis) -> Result<(Trellis, u64)> + Sync + Send,
) -> Result<(Node, u64)> {
    let results = map_vec(opts.exec, ts.iter().collect(), |t| {
        f(t).map(|(c, w)| (if opts.prune { c.prune() } else { c }, w))
    });
    collect_blocks(results)
}

fn collect_blocks(results: Vec<Result<(Trellis, u64)>>) -> Result<(Node, u64)> {
    let mut blocks = Vec::with_capacity(results.len());
    let mut work = 0;
    for r in results {
        let (t, w) = r?;
        work += w;
        blocks.push(t);
    }
    Ok((Node::Blocks(blocks), work))
}

/// Result of a full successive-cancellation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ScRun {
    pub u: Vec<u8>,
    /// 2-step paths visited by stage-one transforms plus pair operations in stage two.
    pub work: u64,
}

/// Run successive cancellation over several evidence streams of equal length.
pub fn run_sc(streams: Vec<Node>, rule: &mut dyn DecisionRule, opts: &ScOptions) -> Result<ScRun> {
    let len = streams.first().ok_or_else(|| invalid("no evidence streams"))?.len();
    if streams.iter().any(|s| s.len() != len) {
        return Err(invalid("evidence streams differ in length"));
    }
    arikan::log2_exact(len)?;
    let mut state = Recursion { rule, opts, u: Vec::with_capacity(len), work: 0 };
    state.descend(streams)?;
    Ok(ScRun { u: state.u, work: state.work })
}

struct Recursion<'r> {
    rule: &'r mut dyn DecisionRule,
    opts: &'r ScOptions,
    u: Vec<u8>,
    work: u64,
}

impl Recursion<'_> {
    /// Decode every index under `nodes` and return their common `x`.
    fn descend(&mut self, nodes: Vec<Node>) -> Result<Vec<u8>> {
        if nodes[0].len() == 1 {
            let posts = nodes.iter().map(Node::leaf).collect::<Result<Vec<_>>>()?;
            let bit = self.rule.decide(self.u.len() + 1, &posts);
            self.u.push(bit);
            return Ok(vec![bit]);
        }
        let mut minus = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let (child, w) = node.minus(self.opts)?;
            self.work += w;
            minus.push(child);
        }
        let z = self.descend(minus)?;
        let mut plus = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let (child, w) = node.plus(&z, self.opts)?;
            self.work += w;
            plus.push(child);
        }
        drop(nodes);
        let z_plus = self.descend(plus)?;
        Ok(combine(&z, &z_plus))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeOutcome {
    pub u: Vec<u8>,
    /// Information indices whose evidence had probability zero.
    pub zero_mass: Vec<usize>,
    pub work: u64,
}

/// Decode one codeword from a single base trellis. `prior`, when given, is
/// the input-process trellis used to regenerate shaped indices; without it
/// they are treated as uniform.
pub fn sc_decode_single_trellis(
    base: &Trellis,
    prior: Option<&Trellis>,
    frozen: &FrozenMap,
    common: CommonRandomness,
    opts: &ScOptions,
) -> Result<DecodeOutcome> {
    two_stage_decode(
        vec![base.clone()],
        prior.map(|p| vec![p.clone()]),
        frozen,
        common,
        opts,
    )
}

/// Decode a codeword made of `Φ` blocks: per-block trellis transforms for
/// the first `n0` levels, then the probability-pair butterfly for the rest.
pub fn two_stage_decode(
    blocks: Vec<Trellis>,
    priors: Option<Vec<Trellis>>,
    frozen: &FrozenMap,
    common: CommonRandomness,
    opts: &ScOptions,
) -> Result<DecodeOutcome> {
    if !blocks.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(blocks.len()));
    }
    let mut streams = vec![Node::blocks(blocks)?];
    if let Some(p) = priors {
        streams.push(Node::blocks(p)?);
    }
    if frozen.len() != streams[0].len() {
        return Err(Error::LengthMismatch { expected: streams[0].len(), got: frozen.len() });
    }
    let mut rule = DecoderRule { frozen, common, zero_mass: Vec::new() };
    let run = run_sc(streams, &mut rule, opts)?;
    Ok(DecodeOutcome { u: run.u, zero_mass: rule.zero_mass, work: run.work })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::DeletionParams;
    use crate::trellis::build_uniform_trellis;

    #[test]
    fn quotient() {
        let post = IndexPosterior { log_p0: 0.3f64.ln(), log_p1: 0.1f64.ln() };
        assert!((conditional_probability(&post) - 0.75).abs() < 1e-15);
        let null = IndexPosterior { log_p0: LOG_ZERO, log_p1: LOG_ZERO };
        assert_eq!(conditional_probability(&null), 0.5);
        let sure = IndexPosterior { log_p0: LOG_ZERO, log_p1: -3.0 };
        assert_eq!(conditional_probability(&sure), 0.0);
    }

    #[test]
    fn noiseless_decode_is_exact() {
        let params = DeletionParams::new(0.0).unwrap();
        let frozen = FrozenMap::from_information_set(8, &(1..=8).collect::<Vec<_>>()).unwrap();
        for v in 0..256u64 {
            let u = crate::bits::index_bits(v, 8);
            let x = arikan::inverse_transform(&u).unwrap();
            let t = build_uniform_trellis(8, &x, params).unwrap();
            let out = sc_decode_single_trellis(&t, None, &frozen, CommonRandomness::new(1), &ScOptions::default())
                .unwrap();
            assert_eq!(out.u, u);
            assert!(out.zero_mass.is_empty());
        }
    }

    #[test]
    fn frozen_map_bounds() {
        assert!(FrozenMap::from_information_set(4, &[0]).is_err());
        assert!(FrozenMap::from_information_set(4, &[5]).is_err());
        let f = FrozenMap::from_information_set(4, &[4, 2]).unwrap();
        assert_eq!(f.information_indices(), vec![2, 4]);
    }

    #[test]
    fn block_count_must_be_power_of_two() {
        let params = DeletionParams::new(0.1).unwrap();
        let t = build_uniform_trellis(2, &[1], params).unwrap();
        let frozen = FrozenMap::all_frozen(6);
        let err = two_stage_decode(vec![t.clone(), t.clone(), t], None, &frozen, CommonRandomness::new(0), &ScOptions::default());
        assert_eq!(err.unwrap_err(), Error::NotPowerOfTwo(3));
    }
}
