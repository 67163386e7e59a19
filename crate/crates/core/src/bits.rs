use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A binary string. Every element is 0 or 1; the empty string is allowed.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct BitString(Vec<u8>);

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(invalid(format!("symbol {b} is not binary")));
        }
        Ok(Self(bits))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// The `len` low bits of `value`, most significant first.
    pub fn from_index(value: u64, len: usize) -> Self {
        Self(index_bits(value, len))
    }

    /// Inverse of [`BitString::from_index`].
    pub fn to_index(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    /// Parse a string of `0`/`1` characters; whitespace is ignored.
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(invalid(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

pub(crate) fn index_bits(value: u64, len: usize) -> Vec<u8> {
    (0..len).map(|k| ((value >> (len - 1 - k)) & 1) as u8).collect()
}

impl Deref for BitString {
    type Target = [u8];
    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl TryFrom<Vec<u8>> for BitString {
    type Error = crate::Error;
    fn try_from(v: Vec<u8>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BitString> for Vec<u8> {
    fn from(b: BitString) -> Self {
        b.0
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("-");
        }
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Every binary string of length `len`, in lexicographic order.
pub fn all_strings(len: usize) -> impl Iterator<Item = Vec<u8>> {
    assert!(len < 64);
    (0..1u64 << len).map(move |v| index_bits(v, len))
}
