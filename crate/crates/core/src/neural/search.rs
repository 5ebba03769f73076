use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{design_matrix, train_mlp, Hyperparams, LrSchedule, Solver};
use super::split::kfold_indices;
use super::{LabeledSample, NeuralError};
use crate::data::DataError;
use crate::predictor::Predictor;

/// Candidate values for each hyperparameter. Discrete lists are sampled
/// uniformly, the two continuous ranges log-uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub layer1: Vec<usize>,
    pub layer2: Vec<usize>,
    pub l2: (f64, f64),
    pub solver: Vec<Solver>,
    pub lr0: (f64, f64),
    pub lr_schedule: Vec<LrSchedule>,
    pub max_iter: Vec<usize>,
    pub patience: Vec<usize>,
}

impl Default for SearchSpace {
    /// The full explored ranges.
    fn default() -> Self {
        Self {
            layer1: (1..=10).map(|i| 10 * i).collect(),
            layer2: (0..=10).map(|i| 10 * i).collect(),
            l2: (1e-4, 1e-1),
            solver: vec![Solver::Adam, Solver::Lbfgs],
            lr0: (1e-4, 1e-1),
            lr_schedule: vec![LrSchedule::Constant, LrSchedule::Adaptive],
            max_iter: (1..=10).map(|i| 1000 * i).collect(),
            patience: (1..=10).map(|i| 10 * i).collect(),
        }
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.random_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi)
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let empty = self.layer1.is_empty()
            || self.layer2.is_empty()
            || self.solver.is_empty()
            || self.lr_schedule.is_empty()
            || self.max_iter.is_empty()
            || self.patience.is_empty();
        if empty || self.l2.0 > self.l2.1 || self.lr0.0 > self.lr0.1 {
            return Err(NeuralError::InvalidHyperparams(
                "search space has an empty dimension".into(),
            ));
        }
        // every corner must itself be a valid setting
        for &layer1 in &self.layer1 {
            for &layer2 in &self.layer2 {
                for &max_iter in &self.max_iter {
                    for &patience in &self.patience {
                        for l2 in [self.l2.0, self.l2.1] {
                            for lr0 in [self.lr0.0, self.lr0.1] {
                                Hyperparams {
                                    layer1,
                                    layer2,
                                    l2,
                                    solver: Solver::Adam,
                                    lr0,
                                    lr_schedule: LrSchedule::Constant,
                                    max_iter,
                                    patience,
                                }
                                .validate()?;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Hyperparams {
        Hyperparams {
            layer1: *self.layer1.choose(rng).unwrap(),
            layer2: *self.layer2.choose(rng).unwrap(),
            l2: log_uniform(rng, self.l2),
            solver: *self.solver.choose(rng).unwrap(),
            lr0: log_uniform(rng, self.lr0),
            lr_schedule: *self.lr_schedule.choose(rng).unwrap(),
            max_iter: *self.max_iter.choose(rng).unwrap(),
            patience: *self.patience.choose(rng).unwrap(),
        }
    }
}

/// SplitMix64 finaliser over `base` and a stream index; used to give every
/// fold and trial its own reproducible seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64
}

/// Mean validation MSE over `k` folds. Every fold model is trained from a
/// seed derived from `seed` and the fold index.
pub fn cross_validate(
    train: &[LabeledSample],
    hp: &Hyperparams,
    k: usize,
    seed: u64,
) -> Result<f64, NeuralError> {
    let folds = kfold_indices(train.len(), k, seed)?;
    let mut in_fold = vec![usize::MAX; train.len()];
    for (f, idx) in folds.iter().enumerate() {
        for &i in idx {
            in_fold[i] = f;
        }
    }
    let mut total = 0.0;
    for (f, idx) in folds.iter().enumerate() {
        let fit_set: Vec<LabeledSample> = train
            .iter()
            .zip(&in_fold)
            .filter(|(_, &g)| g != f)
            .map(|(s, _)| s.clone())
            .collect();
        let val: Vec<LabeledSample> = idx.iter().map(|&i| train[i].clone()).collect();
        let model = train_mlp(&fit_set, hp, derive_seed(seed, f as u64)).map_err(|e| {
            NeuralError::Fold {
                fold: f,
                source: Box::new(e),
            }
        })?;
        let (x, y) = design_matrix(&val);
        let pred = model.predict_batch(x.view());
        total += mse(pred.as_slice().unwrap(), y.as_slice().unwrap());
    }
    Ok(total / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub hyperparams: Hyperparams,
    pub cv_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Hyperparams,
    pub best_cv_mse: f64,
    pub trials: Vec<TrialRecord>,
}

/// Random search: `budget` settings drawn from `space`, each scored by
/// `k`-fold cross-validation on the same folds. The lowest CV MSE wins and
/// ties go to the earlier trial.
pub fn hyperparam_search(
    train: &[LabeledSample],
    space: &SearchSpace,
    budget: usize,
    k: usize,
    seed: u64,
) -> Result<SearchOutcome, NeuralError> {
    if budget == 0 {
        return Err(NeuralError::InvalidBudget);
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let settings: Vec<Hyperparams> = (0..budget).map(|_| space.sample(&mut rng)).collect();
    let cv_seed = derive_seed(seed, u64::MAX);
    let mut trials = Vec::with_capacity(budget);
    for (t, hp) in settings.into_iter().enumerate() {
        let cv = cross_validate(train, &hp, k, cv_seed).map_err(|e| NeuralError::Trial {
            trial: t,
            source: Box::new(e),
        })?;
        trials.push(TrialRecord {
            trial: t,
            hyperparams: hp,
            cv_mse: cv,
        });
    }
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.cv_mse < trials[best].cv_mse {
            best = i;
        }
    }
    Ok(SearchOutcome {
        best: trials[best].hyperparams,
        best_cv_mse: trials[best].cv_mse,
        trials,
    })
}

pub const TUNING_HEADER: [&str; 10] = [
    "trial", "layer1", "layer2", "l2", "solver", "lr0", "schedule", "max_iter", "patience",
    "cv_mse",
];

pub fn write_tuning<W: Write>(w: W, trials: &[TrialRecord]) -> Result<(), DataError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TUNING_HEADER)?;
    for t in trials {
        let h = &t.hyperparams;
        out.write_record([
            t.trial.to_string(),
            h.layer1.to_string(),
            h.layer2.to_string(),
            h.l2.to_string(),
            h.solver.as_str().to_string(),
            h.lr0.to_string(),
            h.lr_schedule.as_str().to_string(),
            h.max_iter.to_string(),
            h.patience.to_string(),
            t.cv_mse.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Deserialize)]
struct TuningRow {
    trial: usize,
    layer1: usize,
    layer2: usize,
    l2: f64,
    solver: Solver,
    lr0: f64,
    schedule: LrSchedule,
    max_iter: usize,
    patience: usize,
    cv_mse: f64,
}

pub fn read_tuning<R: std::io::Read>(r: R) -> Result<Vec<TrialRecord>, DataError> {
    let rows: Vec<TuningRow> = crate::data::read_rows(r, &TUNING_HEADER)?;
    Ok(rows
        .into_iter()
        .map(|t| TrialRecord {
            trial: t.trial,
            hyperparams: Hyperparams {
                layer1: t.layer1,
                layer2: t.layer2,
                l2: t.l2,
                solver: t.solver,
                lr0: t.lr0,
                lr_schedule: t.schedule,
                max_iter: t.max_iter,
                patience: t.patience,
            },
            cv_mse: t.cv_mse,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::FeatureVector;

    fn data(n: usize, f: impl Fn(f64) -> f64) -> Vec<LabeledSample> {
        (0..n)
            .map(|i| {
                let x = i as f64 / n as f64;
                LabeledSample {
                    features: FeatureVector {
                        plot_id: format!("P{i}"),
                        year: 2015,
                        values: vec![x, 1.0 - x * x],
                    },
                    target: f(x),
                }
            })
            .collect()
    }

    fn tiny_space() -> SearchSpace {
        SearchSpace {
            layer1: vec![10],
            layer2: vec![0],
            l2: (1e-4, 1e-4),
            solver: vec![Solver::Adam],
            lr0: (1e-2, 1e-2),
            lr_schedule: vec![LrSchedule::Constant],
            max_iter: vec![1000],
            patience: vec![10],
        }
    }

    #[test]
    fn sampled_settings_are_valid() {
        let space = SearchSpace::default();
        space.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..500 {
            space.sample(&mut rng).validate().unwrap();
        }
    }

    #[test]
    fn constant_target_cv_is_near_zero() {
        let hp = Hyperparams {
            lr_schedule: LrSchedule::Adaptive,
            patience: 20,
            ..tiny_space().sample(&mut ChaCha8Rng::seed_from_u64(0))
        };
        let cv = cross_validate(&data(30, |_| 3.0), &hp, 5, 1).unwrap();
        assert!(cv < 1e-3, "{cv}");
    }

    #[test]
    fn budget_one_and_ties() {
        let d = data(25, |x| 2.0 * x);
        let one = hyperparam_search(
            &d,
            &SearchSpace {
                layer1: vec![10, 20],
                ..tiny_space()
            },
            1,
            5,
            3,
        )
        .unwrap();
        assert_eq!(one.trials.len(), 1);
        assert_eq!(one.best, one.trials[0].hyperparams);

        let tied = hyperparam_search(&d, &tiny_space(), 3, 5, 3).unwrap();
        assert!(tied
            .trials
            .iter()
            .all(|t| t.cv_mse == tied.trials[0].cv_mse));
        assert_eq!(tied.best_cv_mse, tied.trials[0].cv_mse);
        assert!(matches!(
            hyperparam_search(&d, &tiny_space(), 0, 5, 3),
            Err(NeuralError::InvalidBudget)
        ));
    }

    #[test]
    fn tuning_csv_layout() {
        let t = TrialRecord {
            trial: 0,
            hyperparams: Hyperparams::tuned_sos(),
            cv_mse: 1.25,
        };
        let mut buf = Vec::new();
        write_tuning(&mut buf, std::slice::from_ref(&t)).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "trial,layer1,layer2,l2,solver,lr0,schedule,max_iter,patience,cv_mse\n0,100,0,0.029,adaptive-moment,0.0031,constant,8000,20,1.25\n"
        );
        let back = read_tuning(s.as_bytes()).unwrap();
        assert_eq!(back, vec![t]);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 7), derive_seed(5, 7));
    }
}
