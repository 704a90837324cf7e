use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{BssError, Result};

/// Binary selection vector over the `p` columns of `X`.
///
/// Ordering is lexicographic on the bits (`0 < 1`), which is the same as
/// comparing the `"0101..."` strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Subset {
    bits: Vec<bool>,
}

impl Subset {
    pub fn empty(p: usize) -> Self {
        Subset {
            bits: vec![false; p],
        }
    }

    pub fn full(p: usize) -> Self {
        Subset { bits: vec![true; p] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Subset { bits }
    }

    pub fn from_indices(p: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; p];
        for &j in indices {
            if j >= p {
                return Err(BssError::dimension(format!(
                    "index {j} out of range for {p} columns"
                )));
            }
            bits[j] = true;
        }
        Ok(Subset { bits })
    }

    /// Parses a `0/1` string such as `"0110"`.
    pub fn parse_bits(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(BssError::config(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Subset::from_bits)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of selected columns.
    pub fn size(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.bits[j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(j, &b)| b.then_some(j))
            .collect()
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Reorders the bits so that new position `i` holds old position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Subset {
        Subset {
            bits: perm.iter().map(|&j| self.bits[j]).collect(),
        }
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bit_string())
    }
}
