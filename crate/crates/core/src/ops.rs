//! Operation counting for the online stage.
//!
//! Online routines report the flops they perform and the longest vector they
//! read. Counts are derived from the dimensions actually touched, so they are
//! deterministic and comparable across problem sizes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub flops: u64,
    pub max_len: usize,
}

impl OpCount {
    pub fn read(&mut self, len: usize) {
        self.max_len = self.max_len.max(len);
    }

    pub fn add(&mut self, flops: u64) {
        self.flops += flops;
    }

    pub fn merge(&mut self, other: OpCount) {
        self.flops += other.flops;
        self.max_len = self.max_len.max(other.max_len);
    }

    /// Householder QR least squares on an `m x n` block plus the
    /// back-substitution.
    pub(crate) fn lstsq(&mut self, m: usize, n: usize) {
        let (m, n) = (m as u64, n as u64);
        self.add(2 * m * n * n + 4 * m * n + n * n);
    }
}
