use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, Label};
use super::StoreError;

pub const TEST_FRACTION: f64 = 0.15;
pub const FOLD_COUNT: usize = 5;
const MIN_SAMPLES: usize = 10;
const MIN_POOL_PER_CLASS: usize = 2;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
}

/// Held-out test ids plus five disjoint CV folds over the remaining pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub test_ids: Vec<String>,
    pub folds: Vec<Fold>,
}

/// Splits `count` items across classes proportionally so the parts sum to
/// `total` (largest-remainder rounding, ties to the lower class index).
fn apportion(class_counts: [usize; 2], total: usize) -> [usize; 2] {
    let n: usize = class_counts.iter().sum();
    let quotas: Vec<f64> = class_counts
        .iter()
        .map(|&c| c as f64 * total as f64 / n as f64)
        .collect();
    let mut parts = [quotas[0].floor() as usize, quotas[1].floor() as usize];
    let mut left = total - parts.iter().sum::<usize>();
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if parts[c] < class_counts[c] {
            parts[c] += 1;
            left -= 1;
        }
    }
    parts
}

/// Class-stratified 15% test hold-out and 5-fold partition of the rest.
/// A pure function of the manifest sample order and `seed`.
pub fn split_dataset(manifest: &DatasetManifest, seed: u64) -> Result<SplitPlan, StoreError> {
    let n = manifest.samples.len();
    if n < MIN_SAMPLES {
        return Err(StoreError::TooFewSamples {
            min: MIN_SAMPLES,
            got: n,
        });
    }
    let mut by_class: [Vec<&str>; 2] = [Vec::new(), Vec::new()];
    for s in &manifest.samples {
        by_class[s.label.index()].push(&s.id);
    }
    let counts = [by_class[0].len(), by_class[1].len()];
    let test_total = (n as f64 * TEST_FRACTION).round() as usize;
    let test_parts = apportion(counts, test_total);
    for label in Label::BOTH {
        let pool = counts[label.index()] - test_parts[label.index()];
        if pool < MIN_POOL_PER_CLASS {
            return Err(StoreError::TooFewToStratify {
                label,
                count: counts[label.index()],
                min: MIN_POOL_PER_CLASS + test_parts[label.index()],
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_ids = Vec::with_capacity(test_total);
    let mut pool = Vec::with_capacity(n - test_total);
    for (class, ids) in by_class.iter_mut().enumerate() {
        ids.shuffle(&mut rng);
        let (test, rest) = ids.split_at(test_parts[class]);
        test_ids.extend(test.iter().map(|s| s.to_string()));
        pool.extend(rest.iter().map(|s| s.to_string()));
    }

    let folds = (0..FOLD_COUNT)
        .map(|k| {
            let (val, train): (Vec<_>, Vec<_>) = pool
                .iter()
                .enumerate()
                .partition(|(i, _)| i % FOLD_COUNT == k);
            Fold {
                train_ids: train.into_iter().map(|(_, id)| id.clone()).collect(),
                val_ids: val.into_iter().map(|(_, id)| id.clone()).collect(),
            }
        })
        .collect();
    Ok(SplitPlan {
        seed,
        test_ids,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::manifest::SampleRecord;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, HashSet};

    fn manifest(n: usize, hate: usize) -> DatasetManifest {
        let samples = (0..n)
            .map(|i| SampleRecord {
                id: format!("v{i:04}"),
                label: if i < hate { Label::Hate } else { Label::NonHate },
                embeddings: BTreeMap::new(),
                has_onscreen_text: false,
            })
            .collect();
        DatasetManifest::new("split", samples)
    }

    #[test]
    fn hundred_samples() {
        let plan = split_dataset(&manifest(100, 40), 7).unwrap();
        assert_eq!(plan.test_ids.len(), 15);
        for f in &plan.folds {
            assert_eq!(f.val_ids.len(), 17);
            assert_eq!(f.train_ids.len(), 68);
        }
    }

    #[test]
    fn full_dataset_size_arithmetic() {
        let plan = split_dataset(&manifest(1083, 431), 3).unwrap();
        assert_eq!(plan.test_ids.len(), 162);
        let mut vals: Vec<usize> = plan.folds.iter().map(|f| f.val_ids.len()).collect();
        vals.sort();
        assert_eq!(vals, vec![184, 184, 184, 184, 185]);
        let mut trains: Vec<usize> = plan.folds.iter().map(|f| f.train_ids.len()).collect();
        trains.sort();
        assert_eq!(trains, vec![736, 737, 737, 737, 737]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let m = manifest(60, 25);
        assert_eq!(split_dataset(&m, 11).unwrap(), split_dataset(&m, 11).unwrap());
        assert_ne!(split_dataset(&m, 11).unwrap(), split_dataset(&m, 12).unwrap());
    }

    #[test]
    fn too_small_inputs_fail() {
        assert!(matches!(
            split_dataset(&manifest(9, 4), 0),
            Err(StoreError::TooFewSamples { .. })
        ));
        assert!(matches!(
            split_dataset(&manifest(40, 1), 0),
            Err(StoreError::TooFewToStratify { label: Label::Hate, .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn partition_and_stratification(n in 10usize..300, hate_frac in 0.1f64..0.9, seed in any::<u64>()) {
            let hate = ((n as f64 * hate_frac).round() as usize).clamp(3, n - 3);
            let m = manifest(n, hate);
            let plan = match split_dataset(&m, seed) {
                Ok(p) => p,
                Err(StoreError::TooFewToStratify { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let label_of: BTreeMap<&str, Label> = m.samples.iter().map(|s| (s.id.as_str(), s.label)).collect();
            let all: HashSet<&str> = label_of.keys().copied().collect();
            let test: HashSet<&str> = plan.test_ids.iter().map(String::as_str).collect();
            prop_assert_eq!(test.len(), (n as f64 * 0.15).round() as usize);
            let global = hate as f64 / n as f64;
            let hate_in = |ids: &[String]| ids.iter().filter(|i| label_of[i.as_str()] == Label::Hate).count();
            prop_assert!((hate_in(&plan.test_ids) as f64 - global * test.len() as f64).abs() <= 1.0);

            let mut val_union = HashSet::new();
            let sizes: Vec<usize> = plan.folds.iter().map(|f| f.val_ids.len()).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in &plan.folds {
                let train: HashSet<&str> = f.train_ids.iter().map(String::as_str).collect();
                let val: HashSet<&str> = f.val_ids.iter().map(String::as_str).collect();
                prop_assert!(train.is_disjoint(&val));
                prop_assert!(test.is_disjoint(&train) && test.is_disjoint(&val));
                let union: HashSet<&str> = train.union(&val).chain(test.iter()).copied().collect();
                prop_assert_eq!(&union, &all);
                prop_assert!((hate_in(&f.val_ids) as f64 - global * val.len() as f64).abs() <= 1.0);
                for v in &val {
                    prop_assert!(val_union.insert(*v));
                }
            }
            prop_assert_eq!(val_union.len() + test.len(), n);
        }
    }
}
