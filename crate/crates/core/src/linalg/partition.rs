use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::Real;

/// Random equal-size split of `0..n` into `k` disjoint index sets.
///
/// Each index set is stored in ascending order, so shard rows keep the
/// relative order of the original dataset and `k = 1` is the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    k: usize,
    n: usize,
    index_sets: Vec<Vec<usize>>,
    seed: u64,
}

impl Partition {
    /// Seeded Fisher-Yates shuffle followed by contiguous chunking.
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::InvalidConfig(format!("cannot split n = {n} rows into k = {k} shards")));
        }
        if k > n {
            return Err(Error::InvalidConfig(format!("k = {k} exceeds n = {n}")));
        }
        if !n.is_multiple_of(k) {
            return Err(Error::InvalidConfig(format!("k = {k} does not divide n = {n}")));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        if k > 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            perm.shuffle(&mut rng);
        }
        let nk = n / k;
        let index_sets = perm
            .chunks(nk)
            .map(|c| {
                let mut c = c.to_vec();
                c.sort_unstable();
                c
            })
            .collect();
        Ok(Self {
            k,
            n,
            index_sets,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shard_size(&self) -> usize {
        self.n / self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index_sets(&self) -> &[Vec<usize>] {
        &self.index_sets
    }

    pub fn indices(&self, j: usize) -> Result<&[usize]> {
        self.index_sets
            .get(j)
            .map(Vec::as_slice)
            .ok_or(Error::Index { index: j, len: self.k })
    }

    /// All shards of `dataset`, in partition order.
    pub fn split<T: Real>(&self, dataset: &Dataset<T>) -> Result<Vec<Dataset<T>>> {
        (0..self.k).map(|j| shard(dataset, self, j)).collect()
    }
}

/// Rows of `dataset` indexed by shard `j` (zero-based).
pub fn shard<T: Real>(dataset: &Dataset<T>, partition: &Partition, j: usize) -> Result<Dataset<T>> {
    if dataset.n() != partition.n() {
        return Err(Error::Dimension(format!(
            "partition covers {} rows, dataset has {}",
            partition.n(),
            dataset.n()
        )));
    }
    Ok(dataset.select_rows(partition.indices(j)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Family;
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;

    #[test]
    fn identity_for_single_shard() {
        let p = Partition::new(4, 1, 0).unwrap();
        assert_eq!(p.index_sets(), &[vec![0, 1, 2, 3]]);
    }

    #[test]
    fn many_divisor_design_has_equal_shards() {
        let p = Partition::new(840, 24, 3).unwrap();
        assert_eq!(p.k(), 24);
        assert!(p.index_sets().iter().all(|s| s.len() == 35));
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(Partition::new(6, 2, 7).unwrap(), Partition::new(6, 2, 7).unwrap());
    }

    #[test]
    fn seeds_differ() {
        let base = Partition::new(16, 2, 0).unwrap();
        assert!((1..=100).any(|s| Partition::new(16, 2, s).unwrap().index_sets() != base.index_sets()));
    }

    #[test]
    fn rejects_bad_k() {
        assert!(Partition::new(10, 3, 0).is_err());
        assert!(Partition::new(4, 8, 0).is_err());
        assert!(Partition::new(4, 0, 0).is_err());
    }

    #[test]
    fn shard_index_out_of_range() {
        let ds = Dataset::new(Array2::<f64>::zeros((4, 1)), Array1::zeros(4), Family::GaussianLinear).unwrap();
        let p = Partition::new(4, 2, 1).unwrap();
        assert!(matches!(shard(&ds, &p, 2), Err(Error::Index { index: 2, len: 2 })));
    }

    #[test]
    fn shard_rows_match_partition_indices() {
        let x = Array2::from_shape_fn((12, 3), |(i, j)| (i * 10 + j) as f64);
        let y = Array1::from_shape_fn(12, |i| i as f64 * 0.5);
        let ds = Dataset::new(x, y, Family::GaussianLinear).unwrap();
        let p = Partition::new(12, 3, 99).unwrap();
        for j in 0..3 {
            let s = shard(&ds, &p, j).unwrap();
            for (r, &i) in p.indices(j).unwrap().iter().enumerate() {
                assert_eq!(s.y()[r], ds.y()[i]);
                for c in 0..3 {
                    assert_eq!(s.x()[[r, c]], ds.x()[[i, c]]);
                }
            }
        }
    }

    #[test]
    fn single_shard_is_full_dataset() {
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i + 2 * j) as f64);
        let ds = Dataset::new(x, Array1::linspace(0.0, 1.0, 5), Family::GaussianLinear).unwrap();
        let p = Partition::new(5, 1, 42).unwrap();
        assert_eq!(shard(&ds, &p, 0).unwrap(), ds);
    }

    proptest! {
        #[test]
        fn shards_cover_rows_exactly(nk in 1usize..8, k in 1usize..7, seed in any::<u64>()) {
            let n = nk * k;
            let x = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
            let y = Array1::from_shape_fn(n, |i| i as f64);
            let ds = Dataset::new(x, y, Family::GaussianLinear).unwrap();
            let p = Partition::new(n, k, seed).unwrap();
            let mut seen: Vec<(u64, u64, u64)> = Vec::new();
            for s in p.split(&ds).unwrap() {
                prop_assert_eq!(s.n(), nk);
                for r in 0..s.n() {
                    seen.push((s.x()[[r, 0]] as u64, s.x()[[r, 1]] as u64, s.y()[r] as u64));
                }
            }
            seen.sort_unstable();
            let expected: Vec<_> = (0..n).map(|i| ((2 * i) as u64, (2 * i + 1) as u64, i as u64)).collect();
            prop_assert_eq!(seen, expected);
        }
    }
}
