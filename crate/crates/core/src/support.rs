//! Coordinate restrictions imposed by branch-and-bound nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordStatus {
    Free,
    /// Indicator fixed to one: the coordinate is always "on".
    One,
    /// Indicator fixed to zero: the coordinate must vanish.
    Zero,
}

/// A partition of `0..p` into free, fixed-one and fixed-zero coordinates,
/// together with the cardinality budget left for the free ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restriction {
    status: Vec<CoordStatus>,
    free: Vec<usize>,
    ones: Vec<usize>,
    k_remaining: usize,
}

impl Restriction {
    pub fn unrestricted(p: usize, k: usize) -> Self {
        Self {
            status: vec![CoordStatus::Free; p],
            free: (0..p).collect(),
            ones: Vec::new(),
            k_remaining: k,
        }
    }

    pub fn new(p: usize, k: usize, fixed_one: &[usize], fixed_zero: &[usize]) -> Result<Self> {
        let mut status = vec![CoordStatus::Free; p];
        for (set, tag) in [(fixed_one, CoordStatus::One), (fixed_zero, CoordStatus::Zero)] {
            for &j in set {
                if j >= p {
                    return Err(Error::invalid(format!("fixed index {j} out of range for p = {p}")));
                }
                if status[j] != CoordStatus::Free {
                    return Err(Error::invalid(format!("coordinate {j} fixed twice")));
                }
                status[j] = tag;
            }
        }
        let ones: Vec<usize> = (0..p).filter(|&j| status[j] == CoordStatus::One).collect();
        if ones.len() > k {
            return Err(Error::InfeasibleNode { fixed_one: ones.len(), k });
        }
        let free = (0..p).filter(|&j| status[j] == CoordStatus::Free).collect();
        Ok(Self { k_remaining: k - ones.len(), status, free, ones })
    }

    pub fn p(&self) -> usize {
        self.status.len()
    }

    pub fn status(&self, j: usize) -> CoordStatus {
        self.status[j]
    }

    pub fn statuses(&self) -> &[CoordStatus] {
        &self.status
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed_one(&self) -> &[usize] {
        &self.ones
    }

    pub fn fixed_zero(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.status[j] == CoordStatus::Zero).collect()
    }

    pub fn k_remaining(&self) -> usize {
        self.k_remaining
    }

    pub fn is_unrestricted(&self) -> bool {
        self.ones.is_empty() && self.free.len() == self.p()
    }
}
