//! Guard bands and midpoint segmentation.
//!
//! A codeword of length `2^n` is halved recursively down to blocks of length
//! `2^n0`, with `ℓ_t` zeros inserted between the halves at level `t`. The
//! receiver trims the channel output, cuts it in the middle, trims each half
//! and recurses, which recovers the per-block trimmed outputs whenever every
//! cut lands inside its guard band.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{transmit, trim, DeletionParams};
use crate::error::{invalid, Error, Result};
use crate::hmm_input::FaimProcess;
use crate::parallel::{map_range, Execution};
use crate::rng::{stream_rng, Stream};

/// Largest total depth accepted by [`GuardLayout::new`].
pub const MAX_DEPTH: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuardLayout {
    pub n: u32,
    pub n0: u32,
    pub xi: f64,
}

/// Origin of a symbol of `g(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Position {
    /// 0-based index into `x`.
    Data(usize),
    /// Guard band of level `level` between the halves of node `node`.
    Guard { level: u32, node: usize },
}

impl GuardLayout {
    pub fn new(n: u32, n0: u32, xi: f64) -> Result<Self> {
        if n > MAX_DEPTH {
            return Err(invalid(format!("n = {n} exceeds {MAX_DEPTH}")));
        }
        if n0 > n {
            return Err(invalid(format!("n0 = {n0} exceeds n = {n}")));
        }
        if !(xi > 0.0 && xi < 0.5) {
            return Err(invalid(format!("xi = {xi} outside (0, 1/2)")));
        }
        Ok(Self { n, n0, xi })
    }

    pub fn len(&self) -> usize {
        1 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn block_len(&self) -> usize {
        1 << self.n0
    }

    /// `Φ = 2^(n - n0)`.
    pub fn num_blocks(&self) -> usize {
        1 << (self.n - self.n0)
    }

    /// `ℓ_t = ⌊2^((1-ξ)(t-1))⌋`, or 0 for `t ≤ n0`.
    pub fn guard_len(&self, t: u32) -> usize {
        if t <= self.n0 {
            return 0;
        }
        let mut e = (1.0 - self.xi) * f64::from(t - 1);
        // Keep integral exponents such as 0.75 * 4 from landing just below.
        if (e - e.round()).abs() < 1e-9 {
            e = e.round();
        }
        e.exp2().floor() as usize
    }

    /// `|g(x)|` for `|x| = 2^t`: `2^t + Σ_{s=n0+1}^{t} 2^(t-s) ℓ_s`.
    pub fn encoded_len_at(&self, t: u32) -> usize {
        (self.n0 + 1..=t).fold(1usize << t, |acc, s| acc + (self.guard_len(s) << (t - s)))
    }

    /// `Λ = |g(x)|`.
    pub fn encoded_len(&self) -> usize {
        self.encoded_len_at(self.n)
    }

    /// `1 + 2^-(ξ n0 + 1) / (1 - 2^-ξ)`, a strict upper bound on `Λ / N`
    /// once `n > n0`.
    pub fn length_ratio_bound(&self) -> f64 {
        1.0 + (-(self.xi * f64::from(self.n0) + 1.0)).exp2() / (1.0 - (-self.xi).exp2())
    }

    /// Range of `g(x)` covered by node `node` at level `t`.
    pub fn node_range(&self, t: u32, node: usize) -> Range<usize> {
        debug_assert!(t >= self.n0 && t <= self.n && node < 1 << (self.n - t));
        let span = self.encoded_len_at(t);
        let mut start = 0;
        let mut level = self.n;
        while level > t {
            level -= 1;
            // Bit of `node` choosing the half at this level, most significant first.
            if node >> (level - t) & 1 == 1 {
                start += self.encoded_len_at(level) + self.guard_len(level + 1);
            }
        }
        start..start + span
    }

    /// Origin of every symbol of `g(x)`.
    pub fn positions(&self) -> Vec<Position> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.push_positions(self.n, 0, 0, &mut out);
        out
    }

    fn push_positions(&self, t: u32, node: usize, offset: usize, out: &mut Vec<Position>) {
        if t <= self.n0 {
            out.extend((offset..offset + (1 << t)).map(Position::Data));
            return;
        }
        let half = 1 << (t - 1);
        self.push_positions(t - 1, 2 * node, offset, out);
        out.extend(std::iter::repeat(Position::Guard { level: t, node }).take(self.guard_len(t)));
        self.push_positions(t - 1, 2 * node + 1, offset + half, out);
    }
}

/// `g(x)`: halve, insert `ℓ_t` zeros, recurse on both halves.
pub fn insert_guard_bands(x: &[u8], layout: &GuardLayout) -> Result<Vec<u8>> {
    if x.len() != layout.len() {
        return Err(Error::LengthMismatch { expected: layout.len(), got: x.len() });
    }
    let mut out = Vec::with_capacity(layout.encoded_len());
    insert_rec(x, layout.n, layout, &mut out);
    Ok(out)
}

fn insert_rec(x: &[u8], t: u32, layout: &GuardLayout, out: &mut Vec<u8>) {
    if t <= layout.n0 {
        out.extend_from_slice(x);
        return;
    }
    let (a, b) = x.split_at(x.len() / 2);
    insert_rec(a, t - 1, layout, out);
    out.resize(out.len() + layout.guard_len(t), 0);
    insert_rec(b, t - 1, layout, out);
}

/// Noiseless inverse of [`insert_guard_bands`].
pub fn strip_guard_bands(g: &[u8], layout: &GuardLayout) -> Result<Vec<u8>> {
    if g.len() != layout.encoded_len() {
        return Err(Error::LengthMismatch { expected: layout.encoded_len(), got: g.len() });
    }
    let mut x = vec![0; layout.len()];
    for (pos, &bit) in layout.positions().iter().zip(g) {
        match *pos {
            Position::Data(k) => x[k] = bit,
            Position::Guard { .. } if bit != 0 => return Err(invalid("non-zero symbol in a guard band")),
            Position::Guard { .. } => {}
        }
    }
    Ok(x)
}

/// Recover the `Φ` trimmed block outputs from the raw channel output.
pub fn segment(y: &[u8], layout: &GuardLayout) -> Vec<Vec<u8>> {
    let mut blocks = Vec::with_capacity(layout.num_blocks());
    split_rec(trim(y), &|b: &u8| *b, layout.n, 0, layout.n0, &mut blocks, &mut |_, _, _, _| {});
    blocks
}

/// Recursive cut shared by [`segment`] and the genie-checked variant. `z` is
/// already trimmed; the cut keeps `z[..⌊ζ/2⌋]` on the left.
fn split_rec<T: Clone>(
    z: &[T],
    bit: &impl Fn(&T) -> u8,
    t: u32,
    node: usize,
    n0: u32,
    blocks: &mut Vec<Vec<T>>,
    on_split: &mut impl FnMut(u32, usize, &[T], usize),
) {
    if t <= n0 {
        blocks.push(z.to_vec());
        return;
    }
    let k = z.len() / 2;
    on_split(t, node, z, k);
    let (a, b) = z.split_at(k);
    split_rec(trim_by(a, bit), bit, t - 1, 2 * node, n0, blocks, on_split);
    split_rec(trim_by(b, bit), bit, t - 1, 2 * node + 1, n0, blocks, on_split);
}

fn trim_by<'a, T>(z: &'a [T], bit: &impl Fn(&T) -> u8) -> &'a [T] {
    match (z.iter().position(|s| bit(s) == 1), z.iter().rposition(|s| bit(s) == 1)) {
        (Some(a), Some(b)) => &z[a..=b],
        _ => &[],
    }
}

/// Ground-truth view of one cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SplitRecord {
    pub level: u32,
    pub node: usize,
    /// The segment handed to this cut was itself correct.
    pub evaluated: bool,
    /// Both trimmed halves equal the true trimmed outputs of the two children.
    pub correct: bool,
    /// The middle symbol `Z_s`, `s = ⌊(ζ+1)/2⌋`, came from this cut's guard band.
    pub middle_in_guard: bool,
    /// `|Z_I|, |Z_△|, |Z_II|` of the true trimmed segment; zero when the
    /// segment is right bitwise but its symbols come from other positions.
    pub parts: [usize; 3],
}

impl SplitRecord {
    /// Both length inequalities that force the middle symbol into the guard.
    pub fn lengths_condition(&self) -> bool {
        let [a, g, b] = self.parts;
        a < g + b && b < a + g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenieSegmentation {
    pub blocks: Vec<Vec<u8>>,
    /// True trimmed output of each block.
    pub truth: Vec<Vec<u8>>,
    /// In recursion order (pre-order, left before right).
    pub splits: Vec<SplitRecord>,
}

impl GenieSegmentation {
    pub fn success(&self) -> bool {
        self.splits.iter().all(|s| !s.evaluated || s.correct)
    }
}

/// [`segment`] with every cut checked against the channel's kept mask.
pub fn segment_with_genie(g: &[u8], kept: &[bool], layout: &GuardLayout) -> Result<GenieSegmentation> {
    if g.len() != layout.encoded_len() || kept.len() != g.len() {
        return Err(Error::LengthMismatch { expected: layout.encoded_len(), got: kept.len() });
    }
    let items: Vec<(u8, usize)> = (0..g.len()).filter(|&p| kept[p]).map(|p| (g[p], p)).collect();
    let bit = |s: &(u8, usize)| s.0;
    let truth_of = |t: u32, node: usize| -> Vec<u8> {
        let r = layout.node_range(t, node);
        let inside: Vec<u8> = items.iter().filter(|s| r.contains(&s.1)).map(|s| s.0).collect();
        trim(&inside).to_vec()
    };
    let bits = |z: &[(u8, usize)]| z.iter().map(|s| s.0).collect::<Vec<u8>>();

    let mut splits = Vec::with_capacity(layout.num_blocks().saturating_sub(1));
    let mut raw_blocks = Vec::with_capacity(layout.num_blocks());
    split_rec(trim_by(&items, &bit), &bit, layout.n, 0, layout.n0, &mut raw_blocks, &mut |t, node, z, k| {
        let mut rec = SplitRecord { level: t, node, evaluated: false, correct: false, middle_in_guard: false, parts: [0; 3] };
        if bits(z) == truth_of(t, node) {
            rec.evaluated = true;
            rec.correct = bits(trim_by(&z[..k], &bit)) == truth_of(t - 1, 2 * node)
                && bits(trim_by(&z[k..], &bit)) == truth_of(t - 1, 2 * node + 1);
            let r = layout.node_range(t, node);
            let inside: Vec<(u8, usize)> = items.iter().filter(|s| r.contains(&s.1)).copied().collect();
            // Equal bits can still come from the wrong positions; the parts
            // are only meaningful when the origins match too.
            if trim_by(&inside, &bit) != z {
                splits.push(rec);
                return;
            }
            let left = layout.node_range(t - 1, 2 * node);
            let right = layout.node_range(t - 1, 2 * node + 1);
            for s in z {
                let part = if left.contains(&s.1) { 0 } else if right.contains(&s.1) { 2 } else { 1 };
                rec.parts[part] += 1;
            }
            if !z.is_empty() {
                let origin = z[(z.len() + 1) / 2 - 1].1;
                rec.middle_in_guard = !left.contains(&origin) && !right.contains(&origin);
            }
        }
        splits.push(rec);
    });
    let blocks = raw_blocks.iter().map(|b| bits(b)).collect();
    let truth = (0..layout.num_blocks()).map(|node| truth_of(layout.n0, node)).collect();
    Ok(GenieSegmentation { blocks, truth, splits })
}

/// Per-level split counters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LevelFailures {
    pub level: u32,
    pub evaluated: u64,
    pub failures: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureReport {
    pub trials: u64,
    /// Trials where some cut went wrong.
    pub failures: u64,
    pub rate: f64,
    /// Levels from `n` down to `n0 + 1`.
    pub per_level: Vec<LevelFailures>,
}

impl FailureReport {
    /// `failures ≤ Σ_levels failures`.
    pub fn union_bound_holds(&self) -> bool {
        self.failures <= self.per_level.iter().map(|l| l.failures).sum::<u64>()
    }
}

/// Sample one input of `Φ` independent process blocks.
pub fn sample_blocks<R: Rng + ?Sized>(layout: &GuardLayout, process: &FaimProcess, rng: &mut R) -> Vec<u8> {
    let mut x = Vec::with_capacity(layout.len());
    for _ in 0..layout.num_blocks() {
        x.extend(process.sample(layout.block_len(), rng).x);
    }
    x
}

/// Monte Carlo probability that segmentation fails on `g(X)` sent over the
/// deletion channel, with `X` made of independent process blocks.
pub fn segmentation_failure_rate(
    layout: &GuardLayout,
    process: &FaimProcess,
    params: DeletionParams,
    trials: u64,
    seed: u64,
    exec: Execution,
) -> Result<FailureReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let outcomes = map_range(exec, 0..trials as usize, |trial| {
        let x = sample_blocks(layout, process, &mut stream_rng(seed, Stream::Source, trial as u64));
        let g = insert_guard_bands(&x, layout)?;
        let out = transmit(&g, params, &mut stream_rng(seed, Stream::Channel, trial as u64));
        segment_with_genie(&g, &out.kept, layout)
    });
    let mut per_level: Vec<LevelFailures> = (layout.n0 + 1..=layout.n)
        .rev()
        .map(|level| LevelFailures { level, evaluated: 0, failures: 0 })
        .collect();
    let mut failures = 0;
    for o in outcomes {
        let o = o?;
        failures += u64::from(!o.success());
        for s in o.splits.iter().filter(|s| s.evaluated) {
            let l = &mut per_level[(layout.n - s.level) as usize];
            l.evaluated += 1;
            l.failures += u64::from(!s.correct);
        }
    }
    Ok(FailureReport { trials, failures, rate: failures as f64 / trials as f64, per_level })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_layout_by_hand() {
        let l = GuardLayout::new(3, 2, 0.25).unwrap();
        assert_eq!(l.guard_len(3), 2);
        assert_eq!(l.encoded_len(), 10);
        let x = [1, 0, 1, 1, 0, 1, 1, 1];
        assert_eq!(insert_guard_bands(&x, &l).unwrap(), vec![1, 0, 1, 1, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn base_case_is_identity() {
        let l = GuardLayout::new(3, 3, 0.2).unwrap();
        let x = [0, 1, 1, 0, 1, 0, 0, 1];
        assert_eq!(insert_guard_bands(&x, &l).unwrap(), x.to_vec());
        assert_eq!(segment(&x, &l), vec![trim(&x).to_vec()]);
    }

    #[test]
    fn node_ranges_tile_the_word() {
        let l = GuardLayout::new(6, 3, 0.3).unwrap();
        let pos = l.positions();
        assert_eq!(pos.len(), l.encoded_len());
        for node in 0..l.num_blocks() {
            let r = l.node_range(3, node);
            let expect: Vec<Position> = (node * 8..node * 8 + 8).map(Position::Data).collect();
            assert_eq!(pos[r], expect[..]);
        }
        assert_eq!(l.node_range(6, 0), 0..l.encoded_len());
    }

    #[test]
    fn empty_output_gives_empty_blocks() {
        let l = GuardLayout::new(5, 2, 0.25).unwrap();
        assert_eq!(segment(&[], &l), vec![Vec::<u8>::new(); 8]);
        assert_eq!(segment(&[0, 0, 0], &l), vec![Vec::<u8>::new(); 8]);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(GuardLayout::new(3, 4, 0.25).is_err());
        assert!(GuardLayout::new(5, 2, 0.5).is_err());
        assert!(GuardLayout::new(5, 2, 0.0).is_err());
        let l = GuardLayout::new(3, 2, 0.25).unwrap();
        assert!(insert_guard_bands(&[0; 7], &l).is_err());
    }
}
