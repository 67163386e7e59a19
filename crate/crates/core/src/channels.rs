//! Deletion channel, trimmed deletion channel (TDC) and the block-TDC.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::hmm_input::FaimProcess;
use crate::logspace::{ln, ln_pow, log_add, LOG_ZERO};
use crate::trellis::build_tdc_trellis;

/// Largest input length for which [`tdc_exact_law`] enumerates deletion patterns.
pub const TDC_ENUMERATION_LIMIT: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeletionParams {
    pub delta: f64,
}

impl DeletionParams {
    pub fn new(delta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(invalid(format!("deletion probability {delta} outside [0, 1)")));
        }
        Ok(Self { delta })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelOutput {
    pub y: Vec<u8>,
    /// `kept[k]` is true when input `k` survived. Simulation-side only.
    pub kept: Vec<bool>,
}

impl ChannelOutput {
    /// Input positions of the received symbols, in order.
    pub fn kept_positions(&self) -> Vec<usize> {
        self.kept
            .iter()
            .enumerate()
            .filter_map(|(k, &keep)| keep.then_some(k))
            .collect()
    }
}

pub fn transmit<R: Rng + ?Sized>(x: &[u8], params: DeletionParams, rng: &mut R) -> ChannelOutput {
    let kept: Vec<bool> = x.iter().map(|_| rng.gen::<f64>() >= params.delta).collect();
    let y = x
        .iter()
        .zip(&kept)
        .filter_map(|(&b, &keep)| keep.then_some(b))
        .collect();
    ChannelOutput { y, kept }
}

/// Number of ways `y` occurs as a subsequence of `x`, or `None` on `u64` overflow.
pub fn embedding_count(x: &[u8], y: &[u8]) -> Option<u64> {
    if y.len() > x.len() {
        return Some(0);
    }
    let mut dp = vec![0u64; y.len() + 1];
    dp[0] = 1;
    for &xi in x {
        for j in (0..y.len()).rev() {
            if y[j] == xi {
                dp[j + 1] = dp[j + 1].checked_add(dp[j])?;
            }
        }
    }
    Some(dp[y.len()])
}

/// Natural log of the embedding count, without overflow.
pub fn log_embedding_count(x: &[u8], y: &[u8]) -> f64 {
    if y.len() > x.len() {
        return LOG_ZERO;
    }
    let mut dp = vec![LOG_ZERO; y.len() + 1];
    dp[0] = 0.0;
    for &xi in x {
        for j in (0..y.len()).rev() {
            if y[j] == xi {
                dp[j + 1] = log_add(dp[j + 1], dp[j]);
            }
        }
    }
    dp[y.len()]
}

/// `ln W(y|x)`.
pub fn log_exact_law(x: &[u8], y: &[u8], params: DeletionParams) -> f64 {
    let (n, m) = (x.len(), y.len());
    if m > n {
        return LOG_ZERO;
    }
    let log_count = match embedding_count(x, y) {
        Some(0) => return LOG_ZERO,
        Some(c) => (c as f64).ln(),
        None => log_embedding_count(x, y),
    };
    log_count + ln_pow(1.0 - params.delta, m) + ln_pow(params.delta, n - m)
}

/// `W(y|x) = #embeddings · (1-δ)^M · δ^(N-M)`.
pub fn exact_law(x: &[u8], y: &[u8], params: DeletionParams) -> f64 {
    log_exact_law(x, y, params).exp()
}

/// Strip leading and trailing zeros.
pub fn trim(y: &[u8]) -> &[u8] {
    match (y.iter().position(|&b| b == 1), y.iter().rposition(|&b| b == 1)) {
        (Some(a), Some(b)) => &y[a..=b],
        _ => &[],
    }
}

pub fn is_trimmed(y: &[u8]) -> bool {
    y.is_empty() || (y[0] == 1 && y[y.len() - 1] == 1)
}

/// Independent deletion and trimming per block, boundaries preserved.
pub fn transmit_block_tdc<R: Rng + ?Sized>(
    blocks: &[Vec<u8>],
    params: DeletionParams,
    rng: &mut R,
) -> Vec<Vec<u8>> {
    blocks
        .iter()
        .map(|b| trim(&transmit(b, params, rng).y).to_vec())
        .collect()
}

/// `W*(y*|x)`, the TDC law. Enumerates deletion patterns up to
/// [`TDC_ENUMERATION_LIMIT`] inputs and evaluates the TDC trellis beyond.
pub fn tdc_exact_law(x: &[u8], y_star: &[u8], params: DeletionParams) -> Result<f64> {
    if !is_trimmed(y_star) {
        return Err(Error::NotTrimmed);
    }
    if x.len() <= TDC_ENUMERATION_LIMIT {
        return Ok(tdc_law_by_patterns(x, y_star, params));
    }
    let t = build_tdc_trellis(x.len(), y_star, params, &FaimProcess::uniform())?;
    let log_joint = t.log_path_sum(x)?;
    Ok((log_joint + x.len() as f64 * std::f64::consts::LN_2).exp())
}

fn tdc_law_by_patterns(x: &[u8], y_star: &[u8], params: DeletionParams) -> f64 {
    let n = x.len();
    let mut total = LOG_ZERO;
    let mut y = Vec::with_capacity(n);
    for mask in 0u32..1 << n {
        y.clear();
        y.extend((0..n).filter(|k| mask >> k & 1 == 1).map(|k| x[k]));
        if trim(&y) == y_star {
            let m = y.len();
            total = log_add(total, ln_pow(1.0 - params.delta, m) + ln_pow(params.delta, n - m));
        }
    }
    total.exp()
}

/// `ln(1-δ)` and `ln δ`, shared by trellis builders.
pub(crate) fn log_rates(params: DeletionParams) -> (f64, f64) {
    (ln(1.0 - params.delta), ln(params.delta))
}
