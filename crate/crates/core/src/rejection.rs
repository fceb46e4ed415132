//! Neural rejection: CNN features scored by the one-vs-all SVM head, with a
//! single global threshold below which inputs are rejected.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{self, NR_MAGIC};
use crate::dataset::IqFrame;
use crate::error::{check_len, Error, FormatError, Result};
use crate::nn::{argmax, CnnModel};
use crate::svm::OvaSvm;

/// Fewest benign frames accepted by [`calibrate_threshold`].
pub const MIN_CALIBRATION_FRAMES: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Class(usize),
    Reject,
}

impl Verdict {
    pub fn class(self) -> Option<usize> {
        match self {
            Verdict::Class(k) => Some(k),
            Verdict::Reject => None,
        }
    }

    pub fn is_reject(self) -> bool {
        self == Verdict::Reject
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NrDecision {
    pub verdict: Verdict,
    pub scores: Vec<f64>,
    pub max_score: f64,
}

impl NrDecision {
    pub fn from_scores(scores: Vec<f64>, theta: f64) -> Self {
        let best = argmax(&scores);
        let max_score = scores[best];
        let verdict = if max_score > theta {
            Verdict::Class(best)
        } else {
            Verdict::Reject
        };
        NrDecision {
            verdict,
            scores,
            max_score,
        }
    }

    /// Argmax of the scores, ignoring the threshold.
    pub fn top_class(&self) -> usize {
        argmax(&self.scores)
    }
}

#[derive(Clone, Debug)]
pub struct NrModel {
    pub cnn: CnnModel,
    pub svm: OvaSvm,
    theta: f64,
}

impl NrModel {
    /// Pairs a CNN with an SVM head. `theta` may be infinite here (useful for
    /// the no-reject and reject-all limits); persisted bundles require a
    /// finite threshold.
    pub fn new(cnn: CnnModel, svm: OvaSvm, theta: f64) -> Result<Self> {
        check_len(cnn.feature_width(), svm.dim())?;
        if theta.is_nan() {
            return Err(Error::InvalidArgument("threshold is NaN".into()));
        }
        Ok(NrModel { cnn, svm, theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        NrModel::new(self.cnn.clone(), self.svm.clone(), theta)
    }

    pub fn scores(&self, frame: &IqFrame) -> Result<Vec<f64>> {
        self.svm.decision_scores(&self.cnn.features(frame)?)
    }

    pub fn classify_with_reject(&self, frame: &IqFrame) -> Result<NrDecision> {
        Ok(NrDecision::from_scores(self.scores(frame)?, self.theta))
    }

    /// Score vectors for many frames; the CNN runs in batches.
    pub fn scores_many(&self, frames: &[&IqFrame]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(256) {
            let feats = self.cnn.features_batch(chunk)?;
            let rows: Vec<Vec<f64>> = feats.rows().into_iter().map(|r| r.to_vec()).collect();
            let scores = rows
                .par_iter()
                .map(|f| self.svm.decision_scores(f))
                .collect::<Result<Vec<_>>>()?;
            out.extend(scores);
        }
        Ok(out)
    }

    pub fn classify_many(&self, frames: &[&IqFrame]) -> Result<Vec<NrDecision>> {
        Ok(self
            .scores_many(frames)?
            .into_iter()
            .map(|s| NrDecision::from_scores(s, self.theta))
            .collect())
    }

    /// Input-space gradient of class `k`'s score.
    pub fn score_gradient(&self, frame: &IqFrame, k: usize) -> Result<Vec<f64>> {
        let feats = self.cnn.features(frame)?;
        let v = self.svm.score_gradient(k, &feats)?;
        self.cnn.feature_jacobian_vjp(frame, &v)
    }

    /// Input-space gradients of `S_y - S_t` for every `t` in `targets`,
    /// sharing one feature extraction and one batched backward pass.
    pub fn margin_gradients(&self, frame: &IqFrame, y: usize, targets: &[usize]) -> Result<Vec<Vec<f64>>> {
        if targets.is_empty() {
            return Ok(Vec::new());
        }
        let feats = self.cnn.features(frame)?;
        let gy = self.svm.score_gradient(y, &feats)?;
        let vs = targets
            .iter()
            .map(|&t| {
                let gt = self.svm.score_gradient(t, &feats)?;
                Ok(gy.iter().zip(&gt).map(|(a, b)| a - b).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        self.cnn.feature_vjp_multi(frame, &vs)
    }
}

/// Threshold whose benign rejection rate (`score <= theta`) is as close to
/// `rate` as the sample allows from below.
///
/// With `k = floor(rate * n)`, the result is the largest observed score with
/// at most `k` scores at or below it; when no such score exists the
/// threshold sits just under the minimum and nothing is rejected. The
/// achieved rate must lie within `1/n` of the target.
pub fn threshold_from_scores(max_scores: &[f64], rate: f64) -> Result<f64> {
    if max_scores.is_empty() {
        return Err(Error::InsufficientData("empty calibration set".into()));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("rejection rate {rate} outside [0, 1]")));
    }
    if max_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("non-finite score".into()));
    }
    let n = max_scores.len();
    let mut sorted = max_scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (rate * n as f64 + 1e-9).floor() as usize;
    // `sorted[j]` rejects every score up to the last copy of its value.
    let mut theta = sorted[0].next_down();
    let mut rejected = 0;
    let mut j = 0;
    while j < n {
        let mut end = j + 1;
        while end < n && sorted[end] == sorted[j] {
            end += 1;
        }
        if end > k {
            break;
        }
        theta = sorted[j];
        rejected = end;
        j = end;
    }
    let achieved = rejected as f64 / n as f64;
    if (achieved - rate).abs() > 1.0 / n as f64 + 1e-12 {
        let above = sorted.iter().filter(|&&s| s <= sorted[rejected]).count() as f64 / n as f64;
        return Err(Error::UnachievableRate {
            target: rate,
            below: achieved,
            above,
        });
    }
    Ok(theta)
}

/// Sets the threshold from the max scores of benign frames.
pub fn calibrate_threshold(nr: &NrModel, benign: &[&IqFrame], rate: f64) -> Result<f64> {
    if benign.len() < MIN_CALIBRATION_FRAMES {
        return Err(Error::InsufficientData(format!(
            "calibration needs at least {MIN_CALIBRATION_FRAMES} frames, got {}",
            benign.len()
        )));
    }
    let maxima: Vec<f64> = nr
        .scores_many(benign)?
        .iter()
        .map(|s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    threshold_from_scores(&maxima, rate)
}

/// Fraction of frames rejected at the model's threshold.
pub fn rejection_rate(nr: &NrModel, frames: &[&IqFrame]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::InsufficientData("no frames".into()));
    }
    let rejected = nr
        .classify_many(frames)?
        .iter()
        .filter(|d| d.verdict.is_reject())
        .count();
    Ok(rejected as f64 / frames.len() as f64)
}

pub const NR_VERSION: u16 = 1;

/// `AMCN` file: `"AMCN" | u16 version | 32-byte SHA-256 of the CNN file |
/// 32-byte SHA-256 of the SVM file | f64 theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct NrBundle {
    pub cnn_sha256: String,
    pub svm_sha256: String,
    pub theta: f64,
}

impl NrBundle {
    pub fn write<W: Write>(&self, w: &mut W) -> Result<()> {
        codec::write_header(w, NR_MAGIC, NR_VERSION)?;
        for h in [&self.cnn_sha256, &self.svm_sha256] {
            w.write_all(&hex_to_bytes(h)?)?;
        }
        w.write_f64::<LittleEndian>(self.theta)?;
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self> {
        codec::read_header(r, NR_MAGIC, "nr bundle", NR_VERSION)?;
        let mut hashes = [[0u8; 32]; 2];
        for h in hashes.iter_mut() {
            r.read_exact(h)
                .map_err(|_| FormatError::Truncated("checkpoint hash".into()))?;
        }
        let theta = r
            .read_f64::<LittleEndian>()
            .map_err(|_| FormatError::Truncated("threshold".into()))?;
        if !theta.is_finite() {
            return Err(FormatError::Invalid(format!("threshold {theta}")).into());
        }
        Ok(NrBundle {
            cnn_sha256: bytes_to_hex(&hashes[0]),
            svm_sha256: bytes_to_hex(&hashes[1]),
            theta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        NrBundle::read(&mut BufReader::new(File::open(path)?))
    }

    /// Loads the referenced checkpoints, refusing files whose content hash
    /// does not match.
    pub fn resolve(&self, cnn_path: impl AsRef<Path>, svm_path: impl AsRef<Path>) -> Result<NrModel> {
        let cnn_bytes = std::fs::read(cnn_path)?;
        let svm_bytes = std::fs::read(svm_path)?;
        for (what, bytes, expected) in [
            ("cnn", &cnn_bytes, &self.cnn_sha256),
            ("svm", &svm_bytes, &self.svm_sha256),
        ] {
            let found = codec::content_hash(bytes);
            if &found != expected {
                return Err(FormatError::Invalid(format!(
                    "{what} checkpoint hash {found} does not match bundle {expected}"
                ))
                .into());
            }
        }
        let cnn = crate::nn::read_cnn(&mut cnn_bytes.as_slice())?;
        let svm = crate::svm::read_svm(&mut svm_bytes.as_slice())?;
        NrModel::new(cnn, svm, self.theta)
    }
}

fn hex_to_bytes(hex: &str) -> Result<[u8; 32]> {
    let bad = || Error::InvalidArgument(format!("not a SHA-256 hex digest: {hex:?}"));
    if hex.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

fn bytes_to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_scores_reject_exactly_one() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(threshold_from_scores(&scores, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn rate_zero_sits_below_the_minimum() {
        let theta = threshold_from_scores(&[0.5, 0.2, 0.9], 0.0).unwrap();
        assert!(theta < 0.2);
    }

    #[test]
    fn identical_scores_are_unachievable() {
        let scores = vec![0.3; 100];
        assert!(matches!(
            threshold_from_scores(&scores, 0.1),
            Err(Error::UnachievableRate { .. })
        ));
        assert!(threshold_from_scores(&[], 0.1).is_err());
    }

    #[test]
    fn ties_are_not_split() {
        // Twenty values, the first three tied: rate 0.1 allows two rejections
        // but the tie forces zero or three.
        let mut scores = vec![1.0, 1.0, 1.0];
        scores.extend((4..=20).map(f64::from));
        match threshold_from_scores(&scores, 0.1) {
            Err(Error::UnachievableRate { below, above, .. }) => {
                assert_eq!((below, above), (0.0, 0.15));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(threshold_from_scores(&scores, 0.15).unwrap(), 1.0);
        // A tie that fits within the budget is taken whole.
        let mut scores = vec![0.0, 0.0];
        scores.extend((1..=18).map(f64::from));
        assert_eq!(threshold_from_scores(&scores, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn decision_follows_the_threshold() {
        let d = NrDecision::from_scores(vec![0.1, 0.7, 0.7], 0.5);
        assert_eq!(d.verdict, Verdict::Class(1));
        let d = NrDecision::from_scores(vec![0.1, 0.5], 0.5);
        assert_eq!(d.verdict, Verdict::Reject);
        let d = NrDecision::from_scores(vec![-9.0, -8.0], f64::NEG_INFINITY);
        assert_eq!(d.verdict, Verdict::Class(1));
        let d = NrDecision::from_scores(vec![9.0, 8.0], f64::INFINITY);
        assert_eq!(d.verdict, Verdict::Reject);
    }

    #[test]
    fn hex_round_trip() {
        let h = codec::content_hash(b"abc");
        assert_eq!(bytes_to_hex(&hex_to_bytes(&h).unwrap()), h);
        assert!(hex_to_bytes("zz").is_err());
    }
}
