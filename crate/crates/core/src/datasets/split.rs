use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Fraction of records assigned to training by default.
pub const DEFAULT_TRAIN_RATIO: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub ratio: f64,
    pub seed: u64,
}

/// Seeded shuffle followed by a size-exact cut at `round(ratio * n)`.
pub fn split_dataset<T: Clone>(records: &[T], ratio: f64, seed: u64) -> Result<DatasetSplit<T>, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::BadRatio(ratio));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratio * records.len() as f64).round() as usize;
    let (tr, te) = order.split_at(n_train);
    Ok(DatasetSplit {
        train: tr.iter().map(|&i| records[i].clone()).collect(),
        test: te.iter().map(|&i| records[i].clone()).collect(),
        ratio,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_sizes() {
        let recs: Vec<u32> = (0..1000).collect();
        let s = split_dataset(&recs, DEFAULT_TRAIN_RATIO, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (950, 50));
        let one = split_dataset(&[7], 0.95, 3).unwrap();
        assert_eq!((one.train.len(), one.test.len()), (1, 0));
        assert!(matches!(split_dataset(&recs, 1.2, 3), Err(DatasetError::BadRatio(_))));
        assert!(split_dataset(&recs, 0.0, 3).is_err());
    }

    #[test]
    fn split_is_reproducible() {
        let recs: Vec<String> = (0..40).map(|i| format!("r{i}")).collect();
        let a = split_dataset(&recs, 0.75, 11).unwrap();
        let b = split_dataset(&recs, 0.75, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = split_dataset(&recs, 0.75, 12).unwrap();
        assert_ne!(a.train, c.train);
    }

    proptest! {
        #[test]
        fn split_partitions_input(n in 0usize..200, ratio in 0.01..0.99f64, seed in any::<u64>()) {
            let recs: Vec<usize> = (0..n).collect();
            let s = split_dataset(&recs, ratio, seed).unwrap();
            prop_assert_eq!(s.train.len(), (ratio * n as f64).round() as usize);
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort();
            prop_assert_eq!(all, recs);
        }
    }
}
