use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledSample, NeuralError};

/// Smallest per-year sample count accepted by [`split_train_test`].
pub const MIN_SAMPLES_PER_YEAR: usize = 5;

/// Per-year stratified split. Within each year `max(1, round((1 - ratio) n))`
/// samples go to the test set. Both outputs keep the input order.
pub fn split_train_test(
    samples: &[LabeledSample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<LabeledSample>, Vec<LabeledSample>), NeuralError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(NeuralError::InvalidRatio(ratio));
    }
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_year.entry(s.features.year).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; samples.len()];
    for (year, mut idx) in by_year {
        if idx.len() < MIN_SAMPLES_PER_YEAR {
            return Err(NeuralError::TooFewSamplesInYear {
                year,
                count: idx.len(),
                needed: MIN_SAMPLES_PER_YEAR,
            });
        }
        let n_test = test_count(idx.len(), ratio);
        idx.shuffle(&mut rng);
        for &i in &idx[..n_test] {
            is_test[i] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (s, t) in samples.iter().zip(is_test) {
        if t {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((train, test))
}

pub(crate) fn test_count(n: usize, ratio: f64) -> usize {
    (((1.0 - ratio) * n as f64).round() as usize).max(1)
}

/// Shuffled indices cut into `k` contiguous folds; the first `n % k` folds
/// get one extra element.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, NeuralError> {
    if k < 2 || n < k {
        return Err(NeuralError::InvalidFolds { k, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(idx[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::FeatureVector;

    fn samples(counts: &[(i32, usize)]) -> Vec<LabeledSample> {
        let mut out = Vec::new();
        for &(year, n) in counts {
            for i in 0..n {
                out.push(LabeledSample {
                    features: FeatureVector {
                        plot_id: format!("P{i}"),
                        year,
                        values: vec![i as f64],
                    },
                    target: i as f64,
                });
            }
        }
        out
    }

    #[test]
    fn exact_ratio_per_year() {
        let s = samples(&[
            (2014, 10),
            (2015, 10),
            (2016, 10),
            (2017, 10),
            (2018, 10),
            (2019, 10),
        ]);
        let (train, test) = split_train_test(&s, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (48, 12));
        for y in 2014..=2019 {
            assert_eq!(test.iter().filter(|t| t.features.year == y).count(), 2);
        }
    }

    #[test]
    fn deterministic() {
        let s = samples(&[(2014, 12), (2015, 9)]);
        assert_eq!(
            split_train_test(&s, 0.8, 11).unwrap(),
            split_train_test(&s, 0.8, 11).unwrap()
        );
    }

    #[test]
    fn nearest_rounding_with_floor() {
        let s = samples(&[(2014, 7), (2015, 9)]);
        let (_, test) = split_train_test(&s, 0.8, 0).unwrap();
        assert_eq!(test.iter().filter(|t| t.features.year == 2014).count(), 1);
        assert_eq!(test.iter().filter(|t| t.features.year == 2015).count(), 2);
        assert_eq!(test_count(5, 0.8), 1);
        assert_eq!(test_count(2, 0.99), 1);
    }

    #[test]
    fn too_few_in_a_year() {
        let s = samples(&[(2014, 10), (2015, 4)]);
        assert_eq!(
            split_train_test(&s, 0.8, 0),
            Err(NeuralError::TooFewSamplesInYear {
                year: 2015,
                count: 4,
                needed: 5
            })
        );
    }

    #[test]
    fn folds_partition() {
        let folds = kfold_indices(23, 5, 9).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = folds.concat();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let loo = kfold_indices(10, 10, 0).unwrap();
        assert!(loo.iter().all(|f| f.len() == 1));
        assert!(kfold_indices(3, 5, 0).is_err());
        assert!(kfold_indices(10, 1, 0).is_err());
    }
}
