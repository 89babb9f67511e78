use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AnnotationEvent;
use crate::error::{Error, Result};

/// Train/validation/test partition of task ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    /// Train and validation ids together, in log order.
    pub fn fitting_ids(&self) -> Vec<String> {
        let mut ids = self.train_ids.clone();
        ids.extend(self.validation_ids.iter().cloned());
        ids
    }
}

const MIN_SPLIT_EVENTS: usize = 10;

/// Seed used for the second-stage (validation) draw derived from a split seed.
pub(crate) fn validation_seed(seed: u64) -> u64 {
    seed ^ 0x5851_F42D_4C95_7F2D
}

/// Uniformly draws `round(fraction * n)` items without replacement.
///
/// Returns `(kept, held_out)`; both keep the input order.
pub fn holdout_partition<T: Clone>(items: &[T], fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let n = items.len();
    let n_held = ((fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = vec![false; n];
    for &i in &order[..n_held] {
        held[i] = true;
    }
    let mut kept_items = Vec::with_capacity(n - n_held);
    let mut held_items = Vec::with_capacity(n_held);
    for (item, is_held) in items.iter().zip(held) {
        if is_held {
            held_items.push(item.clone());
        } else {
            kept_items.push(item.clone());
        }
    }
    (kept_items, held_items)
}

pub fn split_log(
    events: &[AnnotationEvent],
    test_fraction: f64,
    validation_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if events.len() < MIN_SPLIT_EVENTS {
        return Err(Error::InsufficientData(format!(
            "split needs at least {MIN_SPLIT_EVENTS} events, got {}",
            events.len()
        )));
    }
    for (name, f) in [("test_fraction", test_fraction), ("validation_fraction", validation_fraction)] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {f}")));
        }
    }
    let ids: Vec<String> = events.iter().map(|e| e.task_id.clone()).collect();
    let (rest, test_ids) = holdout_partition(&ids, test_fraction, seed);
    let (train_ids, validation_ids) = holdout_partition(&rest, validation_fraction, validation_seed(seed));
    Ok(DatasetSplit {
        train_ids,
        validation_ids,
        test_ids,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation_log::tests::sample_event;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn log(n: usize) -> Vec<AnnotationEvent> {
        (0..n).map(|i| sample_event(&format!("t{i:04}"))).collect()
    }

    #[test]
    fn hundred_events_split_30_21_49() {
        let split = split_log(&log(100), 0.30, 0.30, 7).unwrap();
        assert_eq!(split.test_ids.len(), 30);
        assert_eq!(split.validation_ids.len(), 21);
        assert_eq!(split.train_ids.len(), 49);
    }

    #[test]
    fn deterministic_for_seed() {
        let events = log(57);
        assert_eq!(split_log(&events, 0.3, 0.3, 11).unwrap(), split_log(&events, 0.3, 0.3, 11).unwrap());
        assert_ne!(split_log(&events, 0.3, 0.3, 11).unwrap(), split_log(&events, 0.3, 0.3, 12).unwrap());
    }

    #[test]
    fn zero_test_fraction_is_allowed() {
        let split = split_log(&log(20), 0.0, 0.3, 1).unwrap();
        assert!(split.test_ids.is_empty());
        assert_eq!(split.validation_ids.len(), 6);
    }

    #[test]
    fn too_small() {
        assert!(matches!(split_log(&log(9), 0.3, 0.3, 1), Err(Error::InsufficientData(_))));
    }

    proptest! {
        #[test]
        fn split_partitions_ids(n in 10usize..60, seed in any::<u64>()) {
            let events = log(n);
            let split = split_log(&events, 0.3, 0.3, seed).unwrap();
            let test_n = (0.3 * n as f64).round() as usize;
            prop_assert_eq!(split.test_ids.len(), test_n);
            prop_assert_eq!(split.validation_ids.len(), (0.3 * (n - test_n) as f64).round() as usize);
            let mut seen = HashSet::new();
            for id in split.train_ids.iter().chain(&split.validation_ids).chain(&split.test_ids) {
                prop_assert!(seen.insert(id.clone()));
            }
            prop_assert_eq!(seen.len(), n);
        }
    }
}
