use rand::seq::SliceRandom;

use crate::rng::{self, Domain};

/// One epoch of mini-batches over `0..n`: a permutation seeded by
/// `(seed, epoch)` cut into chunks of `batch_size` (the last may be short).
///
/// `domain` keeps the labeled and unlabeled orders independent.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: u64, domain: Domain) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, domain, epoch));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: Domain = Domain::UnlabeledBatches;

    #[test]
    fn oversized_batch_is_one_permutation() {
        let b = epoch_batches(10, 64, 1, 0, D);
        assert_eq!(b.len(), 1);
        let mut v = b[0].clone();
        v.sort();
        assert_eq!(v, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn partition_property() {
        let b = epoch_batches(130, 64, 1, 2, D);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![64, 64, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..130).collect::<Vec<_>>());
    }

    #[test]
    fn order_depends_on_seed_and_epoch_only() {
        assert_eq!(epoch_batches(50, 8, 7, 3, D), epoch_batches(50, 8, 7, 3, D));
        assert_ne!(epoch_batches(50, 8, 7, 3, D), epoch_batches(50, 8, 7, 4, D));
        assert_ne!(epoch_batches(50, 8, 7, 3, D), epoch_batches(50, 8, 8, 3, D));
    }

    #[test]
    fn empty_set_has_no_batches() {
        assert!(epoch_batches(0, 4, 0, 0, D).is_empty());
    }
}
