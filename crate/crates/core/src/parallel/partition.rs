//! One-dimensional slab decomposition along x.

use crate::error::{Error, Result};

/// Decomposition of `N` interior x-planes into `M` equal slabs of width `N / M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlabPartition {
    n: usize,
    workers: usize,
}

/// The slab owned by one rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlabExtent {
    pub rank: usize,
    /// First owned global plane (1-based).
    pub first: usize,
    pub width: usize,
    /// `None` where the slab touches the Dirichlet boundary.
    pub left: Option<usize>,
    pub right: Option<usize>,
}

impl SlabExtent {
    pub fn last(&self) -> usize {
        self.first + self.width - 1
    }

    pub fn owns(&self, plane: usize) -> bool {
        (self.first..=self.last()).contains(&plane)
    }
}

impl SlabPartition {
    pub fn new(n: usize, workers: usize) -> Result<Self> {
        if workers == 0 || !n.is_multiple_of(workers) {
            return Err(Error::IndivisiblePartition { n, m: workers });
        }
        Ok(Self { n, workers })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    pub fn width(&self) -> usize {
        self.n / self.workers
    }

    pub fn extent(&self, rank: usize) -> SlabExtent {
        assert!(rank < self.workers, "rank {rank} outside 0..{}", self.workers);
        let w = self.width();
        SlabExtent {
            rank,
            first: rank * w + 1,
            width: w,
            left: rank.checked_sub(1),
            right: (rank + 1 < self.workers).then_some(rank + 1),
        }
    }

    pub fn extents(&self) -> impl Iterator<Item = SlabExtent> + '_ {
        (0..self.workers).map(|r| self.extent(r))
    }

    /// Rank owning global interior plane `plane`.
    pub fn owner(&self, plane: usize) -> usize {
        assert!((1..=self.n).contains(&plane), "plane {plane} outside 1..={}", self.n);
        (plane - 1) / self.width()
    }

    /// Number of halo planes exchanged per sweep.
    pub fn messages_per_sweep(&self) -> usize {
        2 * (self.workers - 1)
    }
}
