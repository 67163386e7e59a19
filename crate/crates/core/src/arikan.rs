//! The Arıkan transform and index bookkeeping.
//!
//! For `x` of length `2^n`, `x^[0] = (x1⊕x2, x3⊕x4, ...)` and
//! `x^[1] = (x2, x4, ...)`; repeated application along a branch `b` yields a
//! scalar that lands at index `i(b) = 1 + Σ b_j 2^(n-j)` of `u`.

use crate::error::{invalid, Error, Result};

pub fn log2_exact(len: usize) -> Result<u32> {
    if len.is_power_of_two() {
        Ok(len.trailing_zeros())
    } else {
        Err(Error::NotPowerOfTwo(len))
    }
}

/// `(x^[0], x^[1])` for an even-length `x`.
pub fn split(x: &[u8]) -> (Vec<u8>, Vec<u8>) {
    let minus = x.chunks_exact(2).map(|p| p[0] ^ p[1]).collect();
    let plus = x.chunks_exact(2).map(|p| p[1]).collect();
    (minus, plus)
}

/// Inverse of [`split`]: interleave `(z ⊕ z', z')`.
pub fn combine(minus: &[u8], plus: &[u8]) -> Vec<u8> {
    debug_assert_eq!(minus.len(), plus.len());
    minus
        .iter()
        .zip(plus)
        .flat_map(|(&m, &p)| [m ^ p, p])
        .collect()
}

/// `u = A_n(x)`.
pub fn transform(x: &[u8]) -> Result<Vec<u8>> {
    log2_exact(x.len())?;
    let mut cur = x.to_vec();
    let mut next = vec![0u8; x.len()];
    let mut width = x.len();
    while width > 1 {
        let half = width / 2;
        for (src, dst) in cur.chunks_exact(width).zip(next.chunks_exact_mut(width)) {
            for j in 0..half {
                dst[j] = src[2 * j] ^ src[2 * j + 1];
                dst[half + j] = src[2 * j + 1];
            }
        }
        std::mem::swap(&mut cur, &mut next);
        width = half;
    }
    Ok(cur)
}

/// `A_n^{-1}`, which equals `A_n`.
pub fn inverse_transform(u: &[u8]) -> Result<Vec<u8>> {
    log2_exact(u.len())?;
    let mut cur = u.to_vec();
    let mut width = 2;
    while width <= u.len() {
        let half = width / 2;
        let next: Vec<u8> = cur
            .chunks_exact(width)
            .flat_map(|blk| combine(&blk[..half], &blk[half..]))
            .collect();
        cur = next;
        width *= 2;
    }
    Ok(cur)
}

/// A branch `b_1 … b_λ` of the transform recursion.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BranchPath {
    bits: Vec<u8>,
}

impl BranchPath {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("branch bits must be binary"));
        }
        Ok(Self { bits })
    }

    /// The depth-`n` branch leading to 1-based index `i`.
    pub fn from_index(i: usize, n: u32) -> Result<Self> {
        if i == 0 || i > 1 << n {
            return Err(invalid(format!("index {i} outside [1, 2^{n}]")));
        }
        Ok(Self {
            bits: crate::bits::index_bits((i - 1) as u64, n as usize),
        })
    }

    pub fn depth(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn prefix(&self, lambda: usize) -> BranchPath {
        BranchPath {
            bits: self.bits[..lambda].to_vec(),
        }
    }
}

/// `i(b) = 1 + Σ_j b_j 2^(n-j)` for a depth-`n` branch.
pub fn branch_to_index(b: &BranchPath) -> usize {
    1 + b.bits.iter().fold(0usize, |acc, &bit| (acc << 1) | bit as usize)
}

/// `(τ, θ)` locating the past decisions consumed by the plus step at the end
/// of `b`, with `n` the full depth. Both are 1-based and inclusive.
pub fn prefix_decisions_slice(b: &BranchPath, n: u32) -> Result<(usize, usize)> {
    let lambda = b.depth();
    if lambda == 0 || lambda > n as usize {
        return Err(invalid("branch depth must be in [1, n]"));
    }
    if b.bits[lambda - 1] != 1 {
        return Err(invalid("last branch bit must be 1 for a plus step"));
    }
    let theta: usize = b
        .bits
        .iter()
        .enumerate()
        .map(|(j, &bit)| (bit as usize) << (n as usize - 1 - j))
        .sum();
    let tau = theta - (1 << (n as usize - lambda)) + 1;
    Ok((tau, theta))
}

/// `z = A_{n-λ}^{-1}(û_τ^θ)`, the hard minus-branch vector for a plus step.
pub fn plus_condition(b: &BranchPath, n: u32, u_hat: &[u8]) -> Result<Vec<u8>> {
    let (tau, theta) = prefix_decisions_slice(b, n)?;
    if u_hat.len() < theta {
        return Err(Error::LengthMismatch {
            expected: theta,
            got: u_hat.len(),
        });
    }
    inverse_transform(&u_hat[tau - 1..theta])
}
