//! Building blocks shared by the subcommands and the pipeline. Every
//! function is deterministic given its inputs and seed.

use amcdef_core::analysis::{self, top_class, AmplificationProfile};
use amcdef_core::attacks::AttackBudget;
use amcdef_core::dataset::{generate_synthetic, split_train_test, DatasetBundle, EvalSplit, IqFrame, SynthConfig};
use amcdef_core::nn::{train, Arch, CnnModel, TrainConfig, TrainReport};
use amcdef_core::rejection::{calibrate_threshold, NrModel};
use amcdef_core::svm::{train_ova, CvGrid, CvResult, OvaSvm};
use amcdef_core::{Error, NUM_CLASSES};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::SystemKind;
use crate::error::CliResult;

pub fn generate(config: &SynthConfig, seed: u64) -> CliResult<DatasetBundle> {
    Ok(generate_synthetic(config, seed)?)
}

/// Rescales every frame to mean power `target`.
pub fn normalize(bundle: &mut DatasetBundle, target: f64) {
    for ex in &mut bundle.examples {
        ex.frame = ex.frame.normalized_power(target);
    }
}

/// Train/test halves of a dataset for one seed.
pub fn halves(data: &DatasetBundle, seed: u64) -> CliResult<(DatasetBundle, DatasetBundle)> {
    Ok(split_train_test(data, seed)?)
}

pub fn train_cnn(train_half: &DatasetBundle, arch: Arch, config: &TrainConfig) -> CliResult<(CnnModel, TrainReport)> {
    let init = CnnModel::new(arch, config.seed)?;
    Ok(train(&init, train_half, config)?)
}

/// Draws up to `n` training examples for the SVM head.
pub fn svm_sample(train_half: &DatasetBundle, n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..train_half.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

pub fn features(cnn: &CnnModel, frames: &[&IqFrame]) -> CliResult<Vec<f64>> {
    let mut out = Vec::with_capacity(frames.len() * cnn.feature_width());
    for chunk in frames.chunks(256) {
        out.extend(cnn.features_batch(chunk)?.iter());
    }
    Ok(out)
}

pub fn train_svm(
    cnn: &CnnModel,
    train_half: &DatasetBundle,
    n_features: usize,
    grid: &CvGrid,
    seed: u64,
) -> CliResult<(OvaSvm, CvResult)> {
    let idx = svm_sample(train_half, n_features, seed);
    let frames: Vec<&IqFrame> = idx.iter().map(|&i| &train_half.examples[i].frame).collect();
    let labels: Vec<usize> = idx.iter().map(|&i| train_half.examples[i].label as usize).collect();
    let feats = features(cnn, &frames)?;
    Ok(train_ova(
        &feats,
        cnn.feature_width(),
        &labels,
        NUM_CLASSES,
        grid,
        seed,
    )?)
}

/// Evaluation sample size actually available at `snr_db`.
pub fn eval_size(test: &DatasetBundle, snr_db: i32, requested: usize) -> CliResult<usize> {
    let available = test.indices_at_snr(snr_db).len();
    if available == 0 {
        return Err(Error::InsufficientData(format!("no test examples at {snr_db} dB")).into());
    }
    Ok(requested.min(available))
}

/// Set I / set II for the plain CNN.
pub fn dnn_split(cnn: &CnnModel, test: &DatasetBundle, snr_db: i32, n: usize, seed: u64) -> CliResult<EvalSplit> {
    let indices = EvalSplit::sample_indices(test, snr_db, eval_size(test, snr_db, n)?, seed)?;
    let frames: Vec<&IqFrame> = indices.iter().map(|&i| &test.examples[i].frame).collect();
    let preds = cnn.predict_many(&frames)?;
    Ok(partition_by(test, &indices, snr_db, &preds))
}

/// Set I / set II for a rejection system, routed by its top class.
pub fn nr_split(nr: &NrModel, test: &DatasetBundle, snr_db: i32, n: usize, seed: u64) -> CliResult<EvalSplit> {
    let indices = EvalSplit::sample_indices(test, snr_db, eval_size(test, snr_db, n)?, seed)?;
    let preds = indices
        .iter()
        .map(|&i| top_class(nr, &test.examples[i].frame))
        .collect::<amcdef_core::Result<Vec<_>>>()?;
    Ok(partition_by(test, &indices, snr_db, &preds))
}

fn partition_by(test: &DatasetBundle, indices: &[usize], snr_db: i32, preds: &[usize]) -> EvalSplit {
    let (mut set_one, mut set_two) = (Vec::new(), Vec::new());
    for (&i, &p) in indices.iter().zip(preds) {
        if p == test.examples[i].label as usize {
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

/// Threshold calibrated on the clean set-I frames of `split`.
pub fn calibrate(nr: &NrModel, test: &DatasetBundle, split: &EvalSplit, rate: f64) -> CliResult<f64> {
    let frames: Vec<&IqFrame> = split.set_one.iter().map(|&i| &test.examples[i].frame).collect();
    Ok(calibrate_threshold(nr, &frames, rate)?)
}

pub fn set_one_samples<'a>(test: &'a DatasetBundle, split: &EvalSplit) -> Vec<(&'a IqFrame, usize)> {
    split
        .set_one
        .iter()
        .map(|&i| (&test.examples[i].frame, test.examples[i].label as usize))
        .collect()
}

/// Margin statistic for every set-I frame; infinite values are kept so the
/// caller can count them.
pub fn epsilon_l_values(nr: &NrModel, test: &DatasetBundle, split: &EvalSplit) -> CliResult<Vec<f64>> {
    use rayon::prelude::*;
    Ok(split
        .set_one
        .par_iter()
        .map(|&i| analysis::robustness_epsilon_l(nr, &test.examples[i].frame, test.examples[i].label as usize))
        .collect::<amcdef_core::Result<Vec<_>>>()?)
}

pub fn system_needs_svm(kind: SystemKind) -> bool {
    kind != SystemKind::Dnn
}

/// Amplification profile over the set-I frames of `split` at one PNR.
pub fn amplification(
    cnn: &CnnModel,
    test: &DatasetBundle,
    split: &EvalSplit,
    pnr_db: f64,
    seed: u64,
) -> CliResult<AmplificationProfile> {
    let samples = set_one_samples(test, split);
    let budget = AttackBudget::Pnr {
        pnr_db,
        snr_db: split.snr_db as f64,
    };
    Ok(analysis::amplification_profile(cnn, &samples, budget, seed)?)
}
