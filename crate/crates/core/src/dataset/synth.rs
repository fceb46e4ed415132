//! Synthetic stand-in for the RML corpus.
//!
//! Digital schemes are root-raised-cosine shaped symbol streams (roll-off
//! 0.35, 8 samples/symbol); CPFSK/GFSK are continuous-phase FSK; the analog
//! schemes modulate a band-limited message built from random in-band tones.
//! Every frame gets a random carrier offset (within +/-1% of the sample rate)
//! and phase, is scaled to the target power, and then receives complex AWGN
//! whose realised power is rescaled to hit the requested SNR exactly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{
    class_names, DatasetBundle, IqFrame, LabeledExample, Modulation, Provenance, FRAME_LEN, SNR_MAX_DB, SNR_MIN_DB,
};
use crate::error::{Error, Result};

pub const SAMPLES_PER_SYMBOL: usize = 8;
pub const RRC_ROLLOFF: f64 = 0.35;
const RRC_SPAN_SYMBOLS: usize = 8;
const MAX_CARRIER_OFFSET: f64 = 0.01;
const MESSAGE_TONES: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub schemes: Vec<Modulation>,
    pub snrs_db: Vec<i32>,
    pub frames_per_cell: usize,
    /// Mean complex-sample power of the noise-free signal.
    pub target_power: f64,
}

impl SynthConfig {
    /// All 11 schemes at all 20 SNR levels.
    pub fn full(frames_per_cell: usize) -> Self {
        SynthConfig {
            schemes: Modulation::ALL.to_vec(),
            snrs_db: super::corpus_snrs(),
            frames_per_cell,
            target_power: 1.0,
        }
    }

    pub fn from_names<S: AsRef<str>>(schemes: &[S], snrs_db: Vec<i32>, frames_per_cell: usize) -> Result<Self> {
        let schemes = schemes
            .iter()
            .map(|s| s.as_ref().parse())
            .collect::<Result<Vec<Modulation>>>()?;
        Ok(SynthConfig {
            schemes,
            snrs_db,
            frames_per_cell,
            target_power: 1.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames_per_cell == 0 {
            return Err(Error::InvalidArgument("frames per cell must be positive".into()));
        }
        if self.schemes.is_empty() || self.snrs_db.is_empty() {
            return Err(Error::InvalidArgument("need at least one scheme and one SNR".into()));
        }
        for &s in &self.snrs_db {
            if !(SNR_MIN_DB..=SNR_MAX_DB).contains(&s) || s % 2 != 0 {
                return Err(Error::InvalidArgument(format!(
                    "SNR {s} dB is not one of -20, -18, ..., 18"
                )));
            }
        }
        if !(self.target_power > 0.0 && self.target_power.is_finite()) {
            return Err(Error::InvalidArgument("target power must be positive".into()));
        }
        Ok(())
    }
}

/// The two components of a synthetic frame before they are summed.
#[derive(Clone, Debug)]
pub struct FrameParts {
    pub clean: Vec<Complex64>,
    pub noise: Vec<Complex64>,
}

impl FrameParts {
    /// `clean + noise` as a frame, rounded to the on-disk f32 precision.
    pub fn to_frame(&self) -> IqFrame {
        let i: Vec<f64> = self
            .clean
            .iter()
            .zip(&self.noise)
            .map(|(s, n)| (s.re + n.re) as f32 as f64)
            .collect();
        let q: Vec<f64> = self
            .clean
            .iter()
            .zip(&self.noise)
            .map(|(s, n)| (s.im + n.im) as f32 as f64)
            .collect();
        IqFrame::from_iq(&i, &q).expect("synthetic frames are finite")
    }
}

/// Generates one frame's noise-free signal and noise.
pub fn generate_frame_parts<R: Rng>(scheme: Modulation, snr_db: f64, target_power: f64, rng: &mut R) -> FrameParts {
    let mut clean = baseband(scheme, rng);

    let offset = rng.random_range(-MAX_CARRIER_OFFSET..MAX_CARRIER_OFFSET);
    let phase = rng.random_range(0.0..2.0 * PI);
    for (n, s) in clean.iter_mut().enumerate() {
        *s *= Complex64::from_polar(1.0, 2.0 * PI * offset * n as f64 + phase);
    }
    scale_to_power(&mut clean, target_power);

    let noise_power = target_power / 10f64.powf(snr_db / 10.0);
    let mut noise: Vec<Complex64> = (0..FRAME_LEN)
        .map(|_| {
            Complex64::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect();
    scale_to_power(&mut noise, noise_power);
    FrameParts { clean, noise }
}

/// Generates `frames_per_cell` frames for every (scheme, SNR) pair, ordered by
/// scheme, then SNR, then frame. Each frame draws from its own ChaCha stream,
/// so the output depends only on `(config, seed)`.
pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<DatasetBundle> {
    config.validate()?;
    let cells: Vec<(Modulation, i32)> = config
        .schemes
        .iter()
        .flat_map(|&m| config.snrs_db.iter().map(move |&s| (m, s)))
        .collect();
    let total = cells.len() * config.frames_per_cell;
    let examples = (0..total)
        .into_par_iter()
        .map(|k| {
            let (scheme, snr) = cells[k / config.frames_per_cell];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let parts = generate_frame_parts(scheme, snr as f64, config.target_power, &mut rng);
            LabeledExample {
                frame: parts.to_frame(),
                label: scheme.index() as u8,
                snr_db: snr as i8,
            }
        })
        .collect();
    Ok(DatasetBundle {
        examples,
        class_names: class_names(),
        provenance: Provenance::Synthetic,
        seed,
    })
}

fn scale_to_power(x: &mut [Complex64], target: f64) {
    let p = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
    if p > 0.0 {
        let g = (target / p).sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
}

fn baseband<R: Rng>(scheme: Modulation, rng: &mut R) -> Vec<Complex64> {
    match scheme {
        Modulation::Bpsk => shaped(rng, |r| Complex64::new(sign(r), 0.0)),
        Modulation::Qpsk => shaped(rng, |r| psk(r, 4, PI / 4.0)),
        Modulation::Psk8 => shaped(rng, |r| psk(r, 8, 0.0)),
        Modulation::Qam16 => shaped(rng, |r| qam(r, 4)),
        Modulation::Qam64 => shaped(rng, |r| qam(r, 8)),
        Modulation::Pam4 => shaped(rng, |r| Complex64::new(2.0 * r.random_range(0..4) as f64 - 3.0, 0.0)),
        Modulation::Cpfsk => cpfsk(rng, &[1.0]),
        Modulation::Gfsk => cpfsk(rng, &gaussian_pulse(0.35, 4)),
        Modulation::Wbfm => {
            let m = message(rng);
            let mut phase = 0.0;
            m.iter()
                .map(|v| {
                    phase += 2.0 * PI * 0.05 * v;
                    Complex64::from_polar(1.0, phase)
                })
                .collect()
        }
        Modulation::AmDsb => message(rng)
            .iter()
            .map(|v| Complex64::new(1.0 + 0.5 * v, 0.0))
            .collect(),
        Modulation::AmSsb => {
            let tones = tones(rng);
            (0..FRAME_LEN)
                .map(|n| {
                    tones
                        .iter()
                        .map(|&(a, f, p)| Complex64::from_polar(a, 2.0 * PI * f * n as f64 + p))
                        .sum()
                })
                .collect()
        }
    }
}

fn sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn psk<R: Rng>(rng: &mut R, order: usize, rotation: f64) -> Complex64 {
    let k = rng.random_range(0..order) as f64;
    Complex64::from_polar(1.0, rotation + 2.0 * PI * k / order as f64)
}

fn qam<R: Rng>(rng: &mut R, side: usize) -> Complex64 {
    let level = |r: &mut R| 2.0 * r.random_range(0..side) as f64 - (side as f64 - 1.0);
    Complex64::new(level(rng), level(rng))
}

/// Root-raised-cosine taps spanning `span` symbols, unit energy.
pub fn rrc_taps(rolloff: f64, sps: usize, span: usize) -> Vec<f64> {
    let half = (span * sps / 2) as i64;
    let b = rolloff;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|n| {
            let t = n as f64 / sps as f64;
            if n == 0 {
                1.0 - b + 4.0 * b / PI
            } else if (4.0 * b * t).abs() == 1.0 {
                (b / 2f64.sqrt())
                    * ((1.0 + 2.0 / PI) * (PI / (4.0 * b)).sin() + (1.0 - 2.0 / PI) * (PI / (4.0 * b)).cos())
            } else {
                ((PI * t * (1.0 - b)).sin() + 4.0 * b * t * (PI * t * (1.0 + b)).cos())
                    / (PI * t * (1.0 - (4.0 * b * t).powi(2)))
            }
        })
        .collect();
    let energy = taps.iter().map(|v| v * v).sum::<f64>().sqrt();
    taps.iter_mut().for_each(|v| *v /= energy);
    taps
}

/// Pulse-shaped symbol stream; the frame is a window of the steady-state
/// output with a random symbol-timing offset.
fn shaped<R: Rng>(rng: &mut R, mut symbol: impl FnMut(&mut R) -> Complex64) -> Vec<Complex64> {
    let taps = rrc_taps(RRC_ROLLOFF, SAMPLES_PER_SYMBOL, RRC_SPAN_SYMBOLS);
    let n_sym = FRAME_LEN / SAMPLES_PER_SYMBOL + 2 * RRC_SPAN_SYMBOLS + 2;
    let mut upsampled = vec![Complex64::new(0.0, 0.0); n_sym * SAMPLES_PER_SYMBOL];
    for k in 0..n_sym {
        upsampled[k * SAMPLES_PER_SYMBOL] = symbol(rng);
    }
    let start = taps.len() + rng.random_range(0..SAMPLES_PER_SYMBOL);
    (start..start + FRAME_LEN)
        .map(|n| taps.iter().enumerate().map(|(j, &h)| upsampled[n - j] * h).sum())
        .collect()
}

/// Gaussian frequency pulse with bandwidth-time product `bt`, sampled at
/// `SAMPLES_PER_SYMBOL` over `span` symbols and normalised to unit area per symbol.
fn gaussian_pulse(bt: f64, span: usize) -> Vec<f64> {
    let sps = SAMPLES_PER_SYMBOL as f64;
    let half = (span * SAMPLES_PER_SYMBOL / 2) as i64;
    let sigma = (2f64.ln()).sqrt() / (2.0 * PI * bt);
    let mut g: Vec<f64> = (-half..=half)
        .map(|n| {
            let t = n as f64 / sps;
            (-(t * t) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= sum);
    g
}

/// Binary continuous-phase FSK with modulation index 0.5; `pulse` smooths
/// the NRZ frequency trajectory (a single tap means rectangular pulses).
fn cpfsk<R: Rng>(rng: &mut R, pulse: &[f64]) -> Vec<Complex64> {
    let h = 0.5;
    let lead = pulse.len();
    let n = FRAME_LEN + lead;
    let n_sym = n / SAMPLES_PER_SYMBOL + 1;
    let symbols: Vec<f64> = (0..n_sym).map(|_| sign(rng)).collect();
    let nrz: Vec<f64> = (0..n).map(|i| symbols[i / SAMPLES_PER_SYMBOL]).collect();
    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let f: f64 = pulse
            .iter()
            .enumerate()
            .map(|(j, &p)| if i >= j { nrz[i - j] * p } else { 0.0 })
            .sum();
        phase += PI * h * f / SAMPLES_PER_SYMBOL as f64;
        out.push(Complex64::from_polar(1.0, phase));
    }
    out.split_off(lead)
}

fn tones<R: Rng>(rng: &mut R) -> Vec<(f64, f64, f64)> {
    (0..MESSAGE_TONES)
        .map(|_| {
            (
                rng.random_range(0.5..1.0),
                rng.random_range(0.002..0.04),
                rng.random_range(0.0..2.0 * PI),
            )
        })
        .collect()
}

/// Band-limited message in [-1, 1].
fn message<R: Rng>(rng: &mut R) -> Vec<f64> {
    let tones = tones(rng);
    let m: Vec<f64> = (0..FRAME_LEN)
        .map(|n| {
            tones
                .iter()
                .map(|&(a, f, p)| a * (2.0 * PI * f * n as f64 + p).cos())
                .sum()
        })
        .collect();
    let peak = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-12);
    m.into_iter().map(|v| v / peak).collect()
}
