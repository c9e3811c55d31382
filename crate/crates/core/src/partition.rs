use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, pairwise-disjoint, nonempty site intervals of a chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    blocks: Vec<Range<usize>>,
}

impl Partition {
    /// Builds a partition for a chain of `n_sites`, sorting the blocks and
    /// rejecting empty, overlapping or out-of-range intervals.
    pub fn new(mut blocks: Vec<Range<usize>>, n_sites: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidPartition("no blocks".into()));
        }
        blocks.sort_by_key(|b| b.start);
        for b in &blocks {
            if b.start >= b.end {
                return Err(Error::InvalidPartition(format!("empty block {b:?}")));
            }
            if b.end > n_sites {
                return Err(Error::IndexOutOfRange { index: b.end - 1, len: n_sites });
            }
        }
        for w in blocks.windows(2) {
            if w[1].start < w[0].end {
                return Err(Error::OverlappingPartitions(w[1].start));
            }
        }
        Ok(Self { blocks })
    }

    /// A single contiguous block.
    pub fn block(range: Range<usize>, n_sites: usize) -> Result<Self> {
        Self::new(vec![range], n_sites)
    }

    /// Arbitrary site set; adjacent sites are merged into blocks.
    pub fn from_sites(sites: &[usize], n_sites: usize) -> Result<Self> {
        let mut s = sites.to_vec();
        s.sort_unstable();
        for w in s.windows(2) {
            if w[0] == w[1] {
                return Err(Error::OverlappingPartitions(w[0]));
            }
        }
        let mut blocks: Vec<Range<usize>> = Vec::new();
        for &i in &s {
            match blocks.last_mut() {
                Some(b) if b.end == i => b.end += 1,
                _ => blocks.push(i..i + 1),
            }
        }
        Self::new(blocks, n_sites)
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().flat_map(|b| b.clone())
    }

    pub fn site_vec(&self) -> Vec<usize> {
        self.sites().collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, site: usize) -> bool {
        self.blocks.iter().any(|b| b.contains(&site))
    }

    pub fn first(&self) -> usize {
        self.blocks[0].start
    }

    pub fn last(&self) -> usize {
        self.blocks[self.blocks.len() - 1].end - 1
    }

    /// Checks that the two partitions share no site.
    pub fn ensure_disjoint(&self, other: &Partition) -> Result<()> {
        match self.sites().find(|&s| other.contains(s)) {
            Some(s) => Err(Error::OverlappingPartitions(s)),
            None => Ok(()),
        }
    }

    pub fn union(&self, other: &Partition, n_sites: usize) -> Result<Partition> {
        self.ensure_disjoint(other)?;
        let mut sites = self.site_vec();
        sites.extend(other.sites());
        Partition::from_sites(&sites, n_sites)
    }

    /// The four equal quarters `A B C D` of a chain (block length `n / 4`).
    pub fn quarters(n_sites: usize) -> Result<[Partition; 4]> {
        let l = n_sites / 4;
        if l == 0 {
            return Err(Error::InvalidPartition(format!("chain of {n_sites} sites too short for quarters")));
        }
        Ok([
            Partition::block(0..l, n_sites)?,
            Partition::block(l..2 * l, n_sites)?,
            Partition::block(2 * l..3 * l, n_sites)?,
            Partition::block(n_sites - l..n_sites, n_sites)?,
        ])
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.blocks.iter().map(|b| format!("[{},{})", b.start, b.end)).collect();
        write!(f, "{}", parts.join("u"))
    }
}

/// Two-block layouts used in the partition-scaling experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionScheme {
    /// Adjacent bulk blocks `B`, `C`.
    Bc,
    /// Boundary block `A` and bulk block `C`, separated by `n / 4`.
    Ac,
    /// Both boundary blocks `A`, `D`, separated by `n / 2`.
    Ad,
}

impl PartitionScheme {
    pub fn blocks(self, n_sites: usize) -> Result<(Partition, Partition)> {
        let [a, b, c, d] = Partition::quarters(n_sites)?;
        Ok(match self {
            PartitionScheme::Bc => (b, c),
            PartitionScheme::Ac => (a, c),
            PartitionScheme::Ad => (a, d),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            PartitionScheme::Bc => "BC",
            PartitionScheme::Ac => "AC",
            PartitionScheme::Ad => "AD",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_overlap_and_out_of_range() {
        assert!(matches!(Partition::new(vec![0..3, 2..4], 6), Err(Error::OverlappingPartitions(2))));
        assert!(matches!(Partition::new(vec![4..7], 6), Err(Error::IndexOutOfRange { .. })));
        assert!(Partition::new(vec![2..2], 6).is_err());
        assert!(Partition::new(vec![], 6).is_err());
    }

    #[test]
    fn from_sites_merges_runs() {
        let p = Partition::from_sites(&[5, 0, 1, 4], 6).unwrap();
        assert_eq!(p.blocks(), &[0..2, 4..6]);
        assert_eq!(p.len(), 4);
        assert!(p.contains(4) && !p.contains(2));
    }

    #[test]
    fn schemes_use_quarter_blocks() {
        let (a, b) = PartitionScheme::Ac.blocks(16).unwrap();
        assert_eq!(a.blocks(), &[0..4]);
        assert_eq!(b.blocks(), &[8..12]);
        let (a, d) = PartitionScheme::Ad.blocks(16).unwrap();
        assert_eq!(d.blocks(), &[12..16]);
        assert!(a.ensure_disjoint(&d).is_ok());
        let u = a.union(&d, 16).unwrap();
        assert_eq!(u.blocks(), &[0..4, 12..16]);
    }
}
