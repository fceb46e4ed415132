//! Measurements over frozen models: layer-wise amplification of
//! adversarial perturbations, the score-margin robustness statistic,
//! accuracy under attack with reject-aware counting, and per-scheme tables.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{self, AttackBudget, AttackOutcome};
use crate::dataset::{DatasetBundle, EvalSplit, IqFrame};
use crate::error::{check_len, Error, Result};
use crate::nn::{argmax, CnnModel};
use crate::rejection::{NrModel, Verdict};

/// `1 - a.b / (|a| |b|)`, clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("cosine distance of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 2.0))
}

/// Independent per-item seed derived from a base seed.
pub fn item_seed(seed: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplificationProfile {
    pub layer_names: Vec<String>,
    pub mean_cosine_adv: Vec<f64>,
    pub mean_cosine_noisy: Vec<f64>,
    pub n_pairs: usize,
    /// Per layer, pairs left out because one activation vector was all zero.
    pub skipped_pairs: Vec<usize>,
}

fn layer_distance(a: &[f64], b: &[f64]) -> Option<f64> {
    if a == b {
        return Some(0.0);
    }
    cosine_distance(a, b).ok()
}

/// For every `(frame, label)`, compares the activations of the benign
/// frame with those of its FGM adversarial version and of an equal-norm
/// jammed version, layer by layer (post-ReLU, channel-major flattening).
pub fn amplification_profile(
    model: &CnnModel,
    samples: &[(&IqFrame, usize)],
    budget: AttackBudget,
    seed: u64,
) -> Result<AmplificationProfile> {
    if samples.is_empty() {
        return Err(Error::InsufficientData(
            "no frames for the amplification profile".into(),
        ));
    }
    let per_frame = samples
        .par_iter()
        .enumerate()
        .map(|(i, &(frame, y))| {
            let eps = budget.epsilon_for(frame)?;
            let adv = attacks::fgm_dnn(model, frame, y, eps)?.adversarial;
            let noisy = attacks::jamming(frame, eps, item_seed(seed, i))?;
            let base = model.forward(frame)?;
            let a = model.forward(&adv)?;
            let n = model.forward(&noisy)?;
            let names: Vec<String> = base.layers.iter().map(|l| l.name.to_string()).collect();
            let dists = base
                .layers
                .iter()
                .zip(a.layers.iter().zip(&n.layers))
                .map(|(b, (a, n))| {
                    (
                        layer_distance(&b.values, &a.values),
                        layer_distance(&b.values, &n.values),
                    )
                })
                .collect::<Vec<_>>();
            Ok((names, dists))
        })
        .collect::<Result<Vec<_>>>()?;
    let layer_names = per_frame[0].0.clone();
    let layers = layer_names.len();
    let mut sums = vec![(0.0, 0usize, 0.0, 0usize); layers];
    for (_, dists) in &per_frame {
        for (s, (a, n)) in sums.iter_mut().zip(dists) {
            if let (Some(a), Some(n)) = (a, n) {
                s.0 += a;
                s.1 += 1;
                s.2 += n;
                s.3 += 1;
            }
        }
    }
    Ok(AmplificationProfile {
        layer_names,
        mean_cosine_adv: sums.iter().map(|s| s.0 / s.1.max(1) as f64).collect(),
        mean_cosine_noisy: sums.iter().map(|s| s.2 / s.3.max(1) as f64).collect(),
        n_pairs: samples.len(),
        skipped_pairs: sums.iter().map(|s| samples.len() - s.1).collect(),
    })
}

/// `(S_y - S_c) / ||grad S_y - grad S_c||_1`, with `c` the best-scoring
/// class other than `y`. A vanishing gradient difference yields `+inf`.
pub fn robustness_epsilon_l(nr: &NrModel, frame: &IqFrame, y: usize) -> Result<f64> {
    let scores = nr.scores(frame)?;
    if y >= scores.len() {
        return Err(Error::InvalidArgument(format!("label {y} out of range")));
    }
    let mut rival = if y == 0 { 1 } else { 0 };
    for k in 0..scores.len() {
        if k != y && scores[k] > scores[rival] {
            rival = k;
        }
    }
    let numerator = scores[y] - scores[rival];
    let grad = nr.margin_gradients(frame, y, &[rival])?.pop().expect("one target");
    let denominator: f64 = grad.iter().map(|v| v.abs()).sum();
    if denominator == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(numerator / denominator)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator; 0 for one value).
    pub std: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::InsufficientData("nothing to aggregate".into()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(MeanStd { mean, std, n })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonLSummary {
    /// Mean over finite values; NaN when there are none.
    pub mean: f64,
    pub n_finite: usize,
    pub n_infinite: usize,
}

pub fn summarize_epsilon_l(values: &[f64]) -> EpsilonLSummary {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    EpsilonLSummary {
        mean: if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        },
        n_finite: finite.len(),
        n_infinite: values.len() - finite.len(),
    }
}

/// A classifier that can be attacked and may abstain.
pub trait System: Sync {
    fn decide(&self, frames: &[&IqFrame]) -> Result<Vec<Verdict>>;
    /// FGM adversarial example for a frame with true label `y`.
    fn fgm(&self, frame: &IqFrame, y: usize, epsilon: f64) -> Result<AttackOutcome>;
}

impl System for CnnModel {
    fn decide(&self, frames: &[&IqFrame]) -> Result<Vec<Verdict>> {
        Ok(self.predict_many(frames)?.into_iter().map(Verdict::Class).collect())
    }

    fn fgm(&self, frame: &IqFrame, y: usize, epsilon: f64) -> Result<AttackOutcome> {
        attacks::fgm_dnn(self, frame, y, epsilon)
    }
}

impl System for NrModel {
    fn decide(&self, frames: &[&IqFrame]) -> Result<Vec<Verdict>> {
        Ok(self.classify_many(frames)?.into_iter().map(|d| d.verdict).collect())
    }

    fn fgm(&self, frame: &IqFrame, y: usize, epsilon: f64) -> Result<AttackOutcome> {
        attacks::fgm_nr(self, frame, y, epsilon)
    }
}

/// Clean-row prediction used to route samples into set I / set II: the
/// top class, ignoring any rejection threshold.
pub fn top_class(system: &NrModel, frame: &IqFrame) -> Result<usize> {
    Ok(argmax(&system.scores(frame)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Fgm,
    Jamming,
}

/// Perturbs every sample at the given PNR, in parallel, in input order.
/// Jamming noise for sample `i` is seeded with `item_seed(seed, i)`.
pub fn generate_attacks<S: System + ?Sized>(
    system: &S,
    samples: &[(&IqFrame, usize, i8)],
    pnr_db: f64,
    kind: AttackKind,
    seed: u64,
) -> Result<Vec<AttackOutcome>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, &(frame, y, snr_db))| {
            let eps = AttackBudget::Pnr {
                pnr_db,
                snr_db: snr_db as f64,
            }
            .epsilon_for(frame)?;
            match kind {
                AttackKind::Fgm => system.fgm(frame, y, eps),
                AttackKind::Jamming => {
                    let adversarial = attacks::jamming(frame, eps, item_seed(seed, i))?;
                    let perturbation_norm = adversarial.distance(frame);
                    Ok(AttackOutcome {
                        adversarial,
                        epsilon_used: eps,
                        target_class: None,
                        succeeded: false,
                        evaded_rejection: None,
                        perturbation_norm,
                        skipped_targets: 0,
                    })
                }
            }
        })
        .collect()
}

/// `Clean` treats a rejection as an error; `Perturbed` counts it as a
/// correct outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountingRule {
    Clean,
    Perturbed,
}

impl CountingRule {
    pub fn is_correct(self, verdict: Verdict, label: usize) -> bool {
        match (self, verdict) {
            (_, Verdict::Class(k)) => k == label,
            (CountingRule::Clean, Verdict::Reject) => false,
            (CountingRule::Perturbed, Verdict::Reject) => true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EvalSet {
    One,
    Two,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    /// Index into the evaluated bundle.
    pub index: usize,
    pub label: usize,
    pub set: EvalSet,
    pub verdict: Verdict,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    /// `None` for the unperturbed row.
    pub pnr_db: Option<f64>,
    pub attack: Option<AttackKind>,
    pub rule: CountingRule,
    pub set_one_accuracy: f64,
    pub set_two_accuracy: f64,
    pub combined_accuracy: f64,
    pub set_one_rejection_rate: f64,
    pub set_two_rejection_rate: f64,
    pub records: Vec<ExampleRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub set_one_size: usize,
    pub set_two_size: usize,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn clean_row(&self) -> &EvalRow {
        &self.rows[0]
    }

    pub fn row(&self, pnr_db: f64, attack: AttackKind) -> Option<&EvalRow> {
        self.rows
            .iter()
            .find(|r| r.pnr_db == Some(pnr_db) && r.attack == Some(attack))
    }
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores one set of verdicts. `verdicts` follow `split.all()` order.
pub fn score_row(
    split: &EvalSplit,
    labels: &[usize],
    verdicts: &[Verdict],
    rule: CountingRule,
    pnr_db: Option<f64>,
    attack: Option<AttackKind>,
) -> Result<EvalRow> {
    let indices: Vec<usize> = split.all().collect();
    check_len(indices.len(), verdicts.len())?;
    check_len(indices.len(), labels.len())?;
    let n1 = split.set_one.len();
    let mut records = Vec::with_capacity(indices.len());
    let (mut ok, mut rej) = ([0usize; 2], [0usize; 2]);
    for (pos, ((&index, &label), &verdict)) in indices.iter().zip(labels).zip(verdicts).enumerate() {
        let set = if pos < n1 { EvalSet::One } else { EvalSet::Two };
        let s = (set == EvalSet::Two) as usize;
        let correct = rule.is_correct(verdict, label);
        ok[s] += correct as usize;
        rej[s] += verdict.is_reject() as usize;
        records.push(ExampleRecord {
            index,
            label,
            set,
            verdict,
            correct,
        });
    }
    let n2 = indices.len() - n1;
    Ok(EvalRow {
        pnr_db,
        attack,
        rule,
        set_one_accuracy: fraction(ok[0], n1),
        set_two_accuracy: fraction(ok[1], n2),
        combined_accuracy: fraction(ok[0] + ok[1], n1 + n2),
        set_one_rejection_rate: fraction(rej[0], n1),
        set_two_rejection_rate: fraction(rej[1], n2),
        records,
    })
}

/// Clean row plus one row per `(PNR, attack kind)`; rows are ordered by
/// kind, then by PNR as given.
pub fn evaluate<S: System + ?Sized>(
    tag: &str,
    system: &S,
    test: &DatasetBundle,
    split: &EvalSplit,
    pnr_dbs: &[f64],
    kinds: &[AttackKind],
    seed: u64,
) -> Result<EvalReport> {
    if pnr_dbs.is_empty() {
        return Err(Error::InvalidArgument("empty PNR list".into()));
    }
    let examples: Vec<_> = split.all().map(|i| &test.examples[i]).collect();
    let labels: Vec<usize> = examples.iter().map(|e| e.label as usize).collect();
    let frames: Vec<&IqFrame> = examples.iter().map(|e| &e.frame).collect();
    let mut rows = vec![score_row(
        split,
        &labels,
        &system.decide(&frames)?,
        CountingRule::Clean,
        None,
        None,
    )?];
    let samples: Vec<(&IqFrame, usize, i8)> = examples
        .iter()
        .map(|e| (&e.frame, e.label as usize, e.snr_db))
        .collect();
    for &kind in kinds {
        for &pnr in pnr_dbs {
            let outcomes = generate_attacks(system, &samples, pnr, kind, seed)?;
            let adv: Vec<&IqFrame> = outcomes.iter().map(|o| &o.adversarial).collect();
            let verdicts = system.decide(&adv)?;
            rows.push(score_row(
                split,
                &labels,
                &verdicts,
                CountingRule::Perturbed,
                Some(pnr),
                Some(kind),
            )?);
        }
    }
    Ok(EvalReport {
        system: tag.to_string(),
        set_one_size: split.set_one.len(),
        set_two_size: split.set_two.len(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationTable {
    pub schemes: Vec<String>,
    /// `(system, PNR dB)` per column.
    pub columns: Vec<(String, f64)>,
    /// `cells[row][col]`: set-I accuracy of the scheme under FGM at that
    /// PNR; NaN when the system's set I holds no example of the scheme.
    pub cells: Vec<Vec<f64>>,
}

fn per_class(records: &[ExampleRecord], only_set_one: bool) -> BTreeMap<usize, (usize, usize)> {
    let mut out: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| !only_set_one || r.set == EvalSet::One) {
        let e = out.entry(r.label).or_default();
        e.0 += r.correct as usize;
        e.1 += 1;
    }
    out
}

/// Rows are the schemes whose clean accuracy on the first report (over
/// both sets) is at least `floor`; columns are every report's FGM rows.
pub fn per_modulation_table(reports: &[&EvalReport], class_names: &[String], floor: f64) -> ModulationTable {
    let mut columns = Vec::new();
    let mut col_rows = Vec::new();
    for rep in reports {
        for row in rep.rows.iter().filter(|r| r.attack == Some(AttackKind::Fgm)) {
            columns.push((rep.system.clone(), row.pnr_db.expect("attacked row")));
            col_rows.push(per_class(&row.records, true));
        }
    }
    let clean = reports
        .first()
        .map(|r| per_class(&r.clean_row().records, false))
        .unwrap_or_default();
    let mut schemes = Vec::new();
    let mut cells = Vec::new();
    for (k, name) in class_names.iter().enumerate() {
        let acc = clean.get(&k).map_or(0.0, |&(c, n)| fraction(c, n));
        if acc < floor || !clean.contains_key(&k) {
            continue;
        }
        schemes.push(name.clone());
        cells.push(
            col_rows
                .iter()
                .map(|m| m.get(&k).map_or(f64::NAN, |&(c, n)| fraction(c, n)))
                .collect(),
        );
    }
    ModulationTable {
        schemes,
        columns,
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        let v = [1.0, -2.0, 3.0];
        assert!(cosine_distance(&v, &v).unwrap().abs() < 1e-15);
        assert!((cosine_distance(&v, &[-1.0, 2.0, -3.0]).unwrap() - 2.0).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 5.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn counting_rules() {
        assert!(!CountingRule::Clean.is_correct(Verdict::Reject, 3));
        assert!(CountingRule::Perturbed.is_correct(Verdict::Reject, 3));
        assert!(CountingRule::Clean.is_correct(Verdict::Class(3), 3));
        assert!(!CountingRule::Perturbed.is_correct(Verdict::Class(2), 3));
    }

    #[test]
    fn aggregate_statistics() {
        let m = aggregate(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((m.mean, m.std, m.n), (2.0, 1.0, 3));
        assert_eq!(aggregate(&[4.0]).unwrap().std, 0.0);
        assert!(aggregate(&[]).is_err());
        let s = summarize_epsilon_l(&[1.0, f64::INFINITY, 3.0]);
        assert_eq!((s.mean, s.n_finite, s.n_infinite), (2.0, 2, 1));
    }

    #[test]
    fn rows_split_by_set() {
        let split = EvalSplit {
            set_one: vec![4, 7],
            set_two: vec![1],
            snr_db: 10,
            size_total: 3,
        };
        let row = score_row(
            &split,
            &[0, 1, 2],
            &[Verdict::Class(0), Verdict::Reject, Verdict::Class(2)],
            CountingRule::Clean,
            None,
            None,
        )
        .unwrap();
        assert_eq!(row.set_one_accuracy, 0.5);
        assert_eq!(row.set_two_accuracy, 1.0);
        assert!((row.combined_accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(row.set_one_rejection_rate, 0.5);
        assert_eq!(row.records[2].set, EvalSet::Two);
    }
}
