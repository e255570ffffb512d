use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{ResotError, Result};

/// How samples are grouped into blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SplitMode {
    /// `folds` equal contiguous blocks; the remainder joins the last block.
    Blocks,
    /// One block per event, given by each event's onset sample. Block
    /// boundaries fall midway between consecutive onsets, and there is one
    /// fold per event (leave-one-event-out).
    Events(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_blocks: Vec<usize>,
    pub test_blocks: Vec<usize>,
}

/// Contiguous, unshuffled blocks and the fold that tests each one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSplit {
    pub blocks: Vec<Range<usize>>,
    pub folds: Vec<Fold>,
}

impl BlockSplit {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn n_samples(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.end)
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.folds[fold].train_blocks.iter().flat_map(|&b| self.blocks[b].clone()).collect()
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.folds[fold].test_blocks.iter().flat_map(|&b| self.blocks[b].clone()).collect()
    }

    /// Everything for training, nothing held out.
    pub fn whole(n_samples: usize) -> Self {
        Self {
            blocks: std::iter::once(0..n_samples).collect(),
            folds: vec![Fold { train_blocks: vec![0], test_blocks: vec![0] }],
        }
    }

    fn leave_one_out(blocks: Vec<Range<usize>>) -> Self {
        let n = blocks.len();
        let folds = (0..n).map(|f| Fold { train_blocks: (0..n).filter(|&b| b != f).collect(), test_blocks: vec![f] }).collect();
        Self { blocks, folds }
    }
}

pub fn block_split(n_samples: usize, folds: usize, mode: &SplitMode) -> Result<BlockSplit> {
    match mode {
        SplitMode::Blocks => {
            if folds < 2 {
                return Err(ResotError::InvalidArgument(format!("need at least 2 folds, got {folds}")));
            }
            if n_samples < folds {
                return Err(ResotError::TooFewSamples { samples: n_samples, folds });
            }
            let size = n_samples / folds;
            let blocks = (0..folds).map(|b| b * size..if b + 1 == folds { n_samples } else { (b + 1) * size }).collect();
            Ok(BlockSplit::leave_one_out(blocks))
        }
        SplitMode::Events(onsets) => {
            if onsets.len() < 2 {
                return Err(ResotError::InvalidArgument(format!("need at least 2 events, got {}", onsets.len())));
            }
            if onsets.windows(2).any(|w| w[1] <= w[0]) || onsets.last().is_some_and(|&o| o >= n_samples) {
                return Err(ResotError::InvalidArgument("event onsets must increase and lie inside the recording".into()));
            }
            let mut cuts = vec![0];
            cuts.extend(onsets.windows(2).map(|w| (w[0] + w[1]).div_ceil(2)));
            cuts.push(n_samples);
            Ok(BlockSplit::leave_one_out(cuts.windows(2).map(|c| c[0]..c[1]).collect()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ten_into_five() {
        let s = block_split(10, 5, &SplitMode::Blocks).unwrap();
        assert_eq!(s.blocks, vec![0..2, 2..4, 4..6, 6..8, 8..10]);
        for f in 0..5 {
            assert_eq!(s.test_indices(f), vec![2 * f, 2 * f + 1]);
            assert_eq!(s.train_indices(f).len(), 8);
        }
    }

    #[test]
    fn remainder_goes_last() {
        let s = block_split(11, 5, &SplitMode::Blocks).unwrap();
        assert_eq!(s.blocks.last(), Some(&(8..11)));
    }

    #[test]
    fn three_events_three_folds() {
        let s = block_split(300, 5, &SplitMode::Events(vec![40, 150, 260])).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.blocks, vec![0..95, 95..205, 205..300]);
        assert_eq!(s.folds[1].train_blocks, vec![0, 2]);
        for (b, onset) in [40, 150, 260].into_iter().enumerate() {
            assert!(s.blocks[b].contains(&onset));
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(block_split(3, 5, &SplitMode::Blocks), Err(ResotError::TooFewSamples { .. })));
        assert!(block_split(10, 1, &SplitMode::Blocks).is_err());
        assert!(block_split(10, 2, &SplitMode::Events(vec![5])).is_err());
        assert!(block_split(10, 2, &SplitMode::Events(vec![5, 5])).is_err());
        assert!(block_split(10, 2, &SplitMode::Events(vec![5, 10])).is_err());
    }

    proptest! {
        #[test]
        fn each_sample_tested_once(n in 2usize..500, folds in 2usize..12) {
            prop_assume!(n >= folds);
            let s = block_split(n, folds, &SplitMode::Blocks).unwrap();
            let mut seen = vec![0; n];
            for f in 0..s.len() {
                let test = s.test_indices(f);
                let train = s.train_indices(f);
                prop_assert!(test.iter().all(|i| !train.contains(i)));
                prop_assert_eq!(test.len() + train.len(), n);
                prop_assert!(test.windows(2).all(|w| w[1] == w[0] + 1));
                test.iter().for_each(|&i| seen[i] += 1);
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert!(s.blocks[..folds - 1].iter().all(|b| b.len() == n / folds));
        }
    }
}
