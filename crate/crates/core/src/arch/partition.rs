use std::ops::Range;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{ArchError, ArchitectureSpec, BlockKind, FORMAT_VERSION};

/// Contiguous, non-overlapping block ranges covering every block exactly once.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "PartitionDoc", into = "PartitionDoc")]
pub struct SubnetPartition {
    ranges: Vec<Range<usize>>,
}

impl SubnetPartition {
    pub fn new(ranges: Vec<Range<usize>>) -> Result<Self, ArchError> {
        if ranges.is_empty() {
            return Err(ArchError::Partition("no sub-networks".into()));
        }
        let mut next = 0;
        for (i, r) in ranges.iter().enumerate() {
            if r.start != next {
                return Err(ArchError::Partition(format!(
                    "sub-network {i} starts at block {}, expected {next}",
                    r.start
                )));
            }
            if r.is_empty() {
                return Err(ArchError::Partition(format!("sub-network {i} is empty")));
            }
            next = r.end;
        }
        Ok(Self { ranges })
    }

    /// A single sub-network spanning the whole network (whole-network search).
    pub fn whole(num_blocks: usize) -> Result<Self, ArchError> {
        Self::new(std::iter::once(0..num_blocks).collect())
    }

    /// Build from explicit sizes, e.g. `[3, 4, 6, 3]`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self, ArchError> {
        let mut start = 0;
        let ranges = sizes
            .iter()
            .map(|&n| {
                let r = start..start + n;
                start += n;
                r
            })
            .collect();
        Self::new(ranges)
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn range(&self, index: usize) -> Range<usize> {
        self.ranges[index].clone()
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn num_blocks(&self) -> usize {
        self.ranges.last().map_or(0, |r| r.end)
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    /// Sub-network containing `block`.
    pub fn subnet_of(&self, block: usize) -> Option<usize> {
        self.ranges.iter().position(|r| r.contains(&block))
    }
}

/// Groups consecutive blocks by the spatial resolution of their outputs.
///
/// Adjacent groups made only of plain (`VBlock`) stages with the same output
/// width are then merged, which folds VGG's two trailing 512-wide stages into
/// one sub-network.
pub fn partition_by_resolution(arch: &ArchitectureSpec) -> SubnetPartition {
    let blocks = arch.blocks();
    let mut groups: Vec<Range<usize>> = Vec::new();
    for (i, block) in blocks.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if blocks[g.start].output_size() == block.output_size() => g.end = i + 1,
            _ => groups.push(i..i + 1),
        }
    }

    let plain_width = |r: &Range<usize>| -> Option<u32> {
        let bs = &blocks[r.clone()];
        if bs.iter().all(|b| b.kind == BlockKind::VBlock) {
            let w = bs[0].out_channels();
            bs.iter().all(|b| b.out_channels() == w).then_some(w)
        } else {
            None
        }
    };
    let mut merged: Vec<Range<usize>> = Vec::with_capacity(groups.len());
    for g in groups {
        match merged.last_mut() {
            Some(prev) if plain_width(prev).is_some() && plain_width(prev) == plain_width(&g) => prev.end = g.end,
            _ => merged.push(g),
        }
    }
    SubnetPartition::new(merged).expect("resolution groups are contiguous and non-empty")
}

#[derive(Serialize, Deserialize, JsonSchema)]
struct PartitionDoc {
    format_version: u32,
    /// Half-open `[start, end)` block ranges.
    ranges: Vec<[usize; 2]>,
}

impl TryFrom<PartitionDoc> for SubnetPartition {
    type Error = ArchError;

    fn try_from(doc: PartitionDoc) -> Result<Self, ArchError> {
        if doc.format_version != FORMAT_VERSION {
            return Err(ArchError::FormatVersion {
                found: doc.format_version,
            });
        }
        SubnetPartition::new(doc.ranges.into_iter().map(|[a, b]| a..b).collect())
    }
}

impl From<SubnetPartition> for PartitionDoc {
    fn from(p: SubnetPartition) -> Self {
        PartitionDoc {
            format_version: FORMAT_VERSION,
            ranges: p.ranges.into_iter().map(|r| [r.start, r.end]).collect(),
        }
    }
}
