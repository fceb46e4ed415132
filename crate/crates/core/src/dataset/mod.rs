//! Labeled I/Q frames, the 11-class modulation table and dataset bundles.

mod format;
mod split;
mod synth;

pub use format::{load_dataset, read_dataset, save_dataset, write_dataset, DATASET_VERSION};
pub use split::{build_eval_split, split_train_test, EvalSplit};
pub use synth::{generate_frame_parts, generate_synthetic, rrc_taps, FrameParts, SynthConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Complex samples per frame.
pub const FRAME_LEN: usize = 128;
/// Real entries per frame (in-phase row followed by quadrature row).
pub const FRAME_SIZE: usize = 2 * FRAME_LEN;

/// Lowest and highest SNR levels of the corpus, in dB, step 2.
pub const SNR_MIN_DB: i32 = -20;
pub const SNR_MAX_DB: i32 = 18;

/// All SNR levels of the corpus: -20, -18, ..., 18 dB.
pub fn corpus_snrs() -> Vec<i32> {
    (SNR_MIN_DB..=SNR_MAX_DB).step_by(2).collect()
}

/// The eleven modulation schemes, in class-index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Psk8,
    Qam16,
    Qam64,
    Cpfsk,
    Gfsk,
    Pam4,
    Wbfm,
    AmSsb,
    AmDsb,
}

impl Modulation {
    pub const ALL: [Modulation; 11] = [
        Modulation::Bpsk,
        Modulation::Qpsk,
        Modulation::Psk8,
        Modulation::Qam16,
        Modulation::Qam64,
        Modulation::Cpfsk,
        Modulation::Gfsk,
        Modulation::Pam4,
        Modulation::Wbfm,
        Modulation::AmSsb,
        Modulation::AmDsb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "BPSK",
            Modulation::Qpsk => "QPSK",
            Modulation::Psk8 => "8PSK",
            Modulation::Qam16 => "QAM16",
            Modulation::Qam64 => "QAM64",
            Modulation::Cpfsk => "CPFSK",
            Modulation::Gfsk => "GFSK",
            Modulation::Pam4 => "PAM4",
            Modulation::Wbfm => "WBFM",
            Modulation::AmSsb => "AM-SSB",
            Modulation::AmDsb => "AM-DSB",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Modulation> {
        Self::ALL.get(index).copied()
    }

    pub fn is_analog(self) -> bool {
        matches!(self, Modulation::Wbfm | Modulation::AmSsb | Modulation::AmDsb)
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown modulation scheme {s:?}")))
    }
}

/// The canonical class-name table.
pub fn class_names() -> Vec<String> {
    Modulation::ALL.iter().map(|m| m.name().to_string()).collect()
}

/// One 2x128 frame: row 0 holds the in-phase samples, row 1 the quadrature samples.
#[derive(Clone, Debug, PartialEq)]
pub struct IqFrame {
    samples: Vec<f64>,
}

impl IqFrame {
    pub fn zeros() -> Self {
        IqFrame {
            samples: vec![0.0; FRAME_SIZE],
        }
    }

    /// Builds a frame from 256 row-major values; rejects wrong lengths and non-finite entries.
    pub fn from_vec(samples: Vec<f64>) -> Result<Self> {
        check_len(FRAME_SIZE, samples.len())?;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("frame entry {i} is not finite")));
        }
        Ok(IqFrame { samples })
    }

    pub fn from_iq(in_phase: &[f64], quadrature: &[f64]) -> Result<Self> {
        check_len(FRAME_LEN, in_phase.len())?;
        check_len(FRAME_LEN, quadrature.len())?;
        let mut samples = Vec::with_capacity(FRAME_SIZE);
        samples.extend_from_slice(in_phase);
        samples.extend_from_slice(quadrature);
        Self::from_vec(samples)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.samples
    }

    pub fn in_phase(&self) -> &[f64] {
        &self.samples[..FRAME_LEN]
    }

    pub fn quadrature(&self) -> &[f64] {
        &self.samples[FRAME_LEN..]
    }

    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Mean complex-sample power, `||x||^2 / 128`.
    pub fn power(&self) -> f64 {
        self.norm_sq() / FRAME_LEN as f64
    }

    /// Returns `self + scale * direction`.
    pub fn perturbed(&self, direction: &[f64], scale: f64) -> Result<IqFrame> {
        check_len(FRAME_SIZE, direction.len())?;
        let samples = self.samples.iter().zip(direction).map(|(x, d)| x + scale * d).collect();
        IqFrame::from_vec(samples)
    }

    /// Euclidean distance to another frame.
    pub fn distance(&self, other: &IqFrame) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Rounds every entry to the nearest 32-bit float, as stored on disk.
    pub fn rounded_to_f32(&self) -> IqFrame {
        IqFrame {
            samples: self.samples.iter().map(|&v| v as f32 as f64).collect(),
        }
    }

    /// Rescales the frame so that its mean complex-sample power equals `target`.
    pub fn normalized_power(&self, target: f64) -> IqFrame {
        let p = self.power();
        if p == 0.0 {
            return self.clone();
        }
        let g = (target / p).sqrt();
        IqFrame {
            samples: self.samples.iter().map(|v| v * g).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub frame: IqFrame,
    pub label: u8,
    pub snr_db: i8,
}

impl LabeledExample {
    pub fn modulation(&self) -> Modulation {
        Modulation::from_index(self.label as usize).expect("label validated on construction")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Synthetic,
    Imported,
}

/// An ordered collection of labeled frames with its class table.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub examples: Vec<LabeledExample>,
    pub class_names: Vec<String>,
    pub provenance: Provenance,
    pub seed: u64,
}

impl DatasetBundle {
    pub fn empty(provenance: Provenance, seed: u64) -> Self {
        DatasetBundle {
            examples: Vec::new(),
            class_names: class_names(),
            provenance,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Checks labels, SNR levels and the class table.
    pub fn validate(&self) -> Result<()> {
        if self.class_names != class_names() {
            return Err(Error::InvalidArgument(format!(
                "class table {:?} does not match the modulation table",
                self.class_names
            )));
        }
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.label as usize >= crate::NUM_CLASSES {
                return Err(Error::InvalidArgument(format!(
                    "example {i}: label {} out of range",
                    ex.label
                )));
            }
            let snr = ex.snr_db as i32;
            if !(SNR_MIN_DB..=SNR_MAX_DB).contains(&snr) || snr % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "example {i}: SNR {snr} dB is not a corpus level"
                )));
            }
        }
        Ok(())
    }

    /// A new bundle holding the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> DatasetBundle {
        DatasetBundle {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            class_names: self.class_names.clone(),
            provenance: self.provenance,
            seed: self.seed,
        }
    }

    pub fn indices_at_snr(&self, snr_db: i32) -> Vec<usize> {
        self.examples
            .iter()
            .enumerate()
            .filter(|(_, e)| e.snr_db as i32 == snr_db)
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modulation_names_round_trip() {
        for m in Modulation::ALL {
            assert_eq!(m.name().parse::<Modulation>().unwrap(), m);
            assert_eq!(Modulation::from_index(m.index()), Some(m));
        }
        assert!("OOK".parse::<Modulation>().is_err());
    }

    #[test]
    fn frame_rejects_bad_shape_and_nan() {
        assert!(IqFrame::from_vec(vec![0.0; 255]).is_err());
        let mut v = vec![0.0; 256];
        v[3] = f64::NAN;
        assert!(IqFrame::from_vec(v).is_err());
    }

    #[test]
    fn corpus_has_twenty_snrs() {
        let s = corpus_snrs();
        assert_eq!(s.len(), 20);
        assert_eq!(s[0], -20);
        assert_eq!(s[19], 18);
    }
}
