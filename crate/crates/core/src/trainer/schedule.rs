use crate::error::{Error, Result};

/// Interleaving of sentence-classification updates between tagging updates.
///
/// With N tagging batches and M classification batches per epoch, each of
/// the N outer iterations performs `alpha = M / N` (floored) classification
/// updates, and the first `M mod N` iterations perform one more, so all M
/// batches are used exactly once per epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateSchedule {
    pub adr_batches: usize,
    pub ade_batches: usize,
    pub alpha: usize,
    pub remainder: usize,
}

impl UpdateSchedule {
    pub fn new(adr_batches: usize, ade_batches: usize) -> Result<Self> {
        if adr_batches == 0 {
            return Err(Error::Config("at least one ADR batch per epoch is required".into()));
        }
        if ade_batches == 0 {
            return Err(Error::Config("at least one ADE batch per epoch is required".into()));
        }
        Ok(UpdateSchedule {
            adr_batches,
            ade_batches,
            alpha: ade_batches / adr_batches,
            remainder: ade_batches % adr_batches,
        })
    }

    /// Classification updates preceding tagging update `i` (0-based).
    pub fn ade_updates_before(&self, i: usize) -> usize {
        self.alpha + usize::from(i < self.remainder)
    }

    pub fn ade_updates_per_epoch(&self) -> usize {
        (0..self.adr_batches).map(|i| self.ade_updates_before(i)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn integral_ratio() {
        let s = UpdateSchedule::new(4, 12).unwrap();
        assert_eq!(s.alpha, 3);
        assert_eq!((0..4).map(|i| s.ade_updates_before(i)).collect::<Vec<_>>(), [3, 3, 3, 3]);
    }

    #[test]
    fn remainder_goes_to_first_iterations() {
        let s = UpdateSchedule::new(4, 10).unwrap();
        assert_eq!(s.alpha, 2);
        assert_eq!((0..4).map(|i| s.ade_updates_before(i)).collect::<Vec<_>>(), [3, 3, 2, 2]);
        let s = UpdateSchedule::new(5, 2).unwrap();
        assert_eq!(s.alpha, 0);
        assert_eq!(s.ade_updates_per_epoch(), 2);
    }

    #[test]
    fn empty_sides_rejected() {
        assert!(UpdateSchedule::new(0, 3).is_err());
        assert!(UpdateSchedule::new(3, 0).is_err());
    }

    proptest! {
        #[test]
        fn every_ade_batch_used_once(n in 1usize..50, m in 1usize..500) {
            let s = UpdateSchedule::new(n, m).unwrap();
            prop_assert_eq!(s.ade_updates_per_epoch(), m);
            prop_assert_eq!(s.alpha, m / n);
        }
    }
}
