use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetBundle, LabeledExample};
use crate::error::{Error, Result};

/// Stratified 50/50 split over (label, SNR) cells. Within a cell the train
/// side receives the extra example when the count is odd. Both sides keep
/// the input order.
pub fn split_train_test(bundle: &DatasetBundle, seed: u64) -> Result<(DatasetBundle, DatasetBundle)> {
    if bundle.is_empty() {
        return Err(Error::InsufficientData("cannot split an empty bundle".into()));
    }
    let mut cells: BTreeMap<(u8, i8), Vec<usize>> = BTreeMap::new();
    for (i, ex) in bundle.examples.iter().enumerate() {
        cells.entry((ex.label, ex.snr_db)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(bundle.len() / 2 + cells.len());
    let mut test = Vec::with_capacity(bundle.len() / 2 + cells.len());
    for ((label, snr), mut idx) in cells {
        if idx.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "cell (label {label}, {snr} dB) has {} example(s); need at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let half = idx.len().div_ceil(2);
        train.extend_from_slice(&idx[..half]);
        test.extend_from_slice(&idx[half..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((bundle.subset(&train), bundle.subset(&test)))
}

/// Evaluation samples at one SNR, partitioned by a classifier's clean
/// prediction. Indices refer to the bundle the split was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSplit {
    /// Correctly classified without perturbation.
    pub set_one: Vec<usize>,
    /// Misclassified without perturbation.
    pub set_two: Vec<usize>,
    pub snr_db: i32,
    pub size_total: usize,
}

impl EvalSplit {
    /// Draws `n` distinct examples at `snr_db`, in draw order.
    pub fn sample_indices(test: &DatasetBundle, snr_db: i32, n: usize, seed: u64) -> Result<Vec<usize>> {
        let mut pool = test.indices_at_snr(snr_db);
        if pool.len() < n {
            return Err(Error::InsufficientData(format!(
                "{} examples at {snr_db} dB, {n} requested",
                pool.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pool.shuffle(&mut rng);
        pool.truncate(n);
        Ok(pool)
    }

    /// Routes `indices` into set I / set II by `predict(example) == label`.
    pub fn partition<F>(test: &DatasetBundle, indices: &[usize], snr_db: i32, predict: F) -> Self
    where
        F: Fn(&LabeledExample) -> usize + Sync,
    {
        let correct: Vec<bool> = indices
            .par_iter()
            .map(|&i| {
                let ex = &test.examples[i];
                predict(ex) == ex.label as usize
            })
            .collect();
        let mut set_one = Vec::new();
        let mut set_two = Vec::new();
        for (&i, ok) in indices.iter().zip(correct) {
            if ok {
                set_one.push(i);
            } else {
                set_two.push(i);
            }
        }
        EvalSplit {
            set_one,
            set_two,
            snr_db,
            size_total: indices.len(),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.set_one.iter().chain(&self.set_two).copied()
    }
}

/// Samples `n` test examples at `snr_db` and splits them by the scorer's
/// clean prediction.
pub fn build_eval_split<F>(predict: F, test: &DatasetBundle, snr_db: i32, n: usize, seed: u64) -> Result<EvalSplit>
where
    F: Fn(&LabeledExample) -> usize + Sync,
{
    let indices = EvalSplit::sample_indices(test, snr_db, n, seed)?;
    Ok(EvalSplit::partition(test, &indices, snr_db, predict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SynthConfig};

    fn small() -> DatasetBundle {
        let cfg = SynthConfig::from_names(&["BPSK", "QPSK", "PAM4"], vec![0, 10], 5).unwrap();
        generate_synthetic(&cfg, 2).unwrap()
    }

    #[test]
    fn two_per_cell_splits_one_each() {
        let cfg = SynthConfig::from_names(&["BPSK", "GFSK"], vec![-2, 2], 2).unwrap();
        let b = generate_synthetic(&cfg, 9).unwrap();
        let (tr, te) = split_train_test(&b, 4).unwrap();
        assert_eq!(tr.len(), 4);
        assert_eq!(te.len(), 4);
        for ex in b.examples.iter() {
            let count_tr = tr
                .examples
                .iter()
                .filter(|e| e.label == ex.label && e.snr_db == ex.snr_db)
                .count();
            assert_eq!(count_tr, 1);
        }
    }

    #[test]
    fn split_is_a_disjoint_cover() {
        let b = small();
        let (tr, te) = split_train_test(&b, 1).unwrap();
        assert_eq!(tr.len() + te.len(), b.len());
        let mut all: Vec<_> = tr.examples.iter().chain(&te.examples).collect();
        all.sort_by(|a, b| a.frame.as_slice()[0].total_cmp(&b.frame.as_slice()[0]));
        let mut orig: Vec<_> = b.examples.iter().collect();
        orig.sort_by(|a, b| a.frame.as_slice()[0].total_cmp(&b.frame.as_slice()[0]));
        assert_eq!(all, orig);
    }

    #[test]
    fn singleton_cell_is_rejected() {
        let cfg = SynthConfig::from_names(&["BPSK"], vec![0], 1).unwrap();
        let b = generate_synthetic(&cfg, 0).unwrap();
        assert!(matches!(split_train_test(&b, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn oracle_scorers_fill_one_set() {
        let b = small();
        let right = build_eval_split(|e| e.label as usize, &b, 10, 12, 3).unwrap();
        assert_eq!(right.set_one.len(), 12);
        assert!(right.set_two.is_empty());
        let wrong = build_eval_split(|e| (e.label as usize + 1) % 11, &b, 10, 12, 3).unwrap();
        assert!(wrong.set_one.is_empty());
        assert_eq!(wrong.set_two, right.set_one);
        assert!(build_eval_split(|_| 0, &b, 10, 16, 3).is_err());
    }
}
