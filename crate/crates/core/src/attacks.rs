//! Fast-gradient attacks on the plain CNN and on the rejection system, the
//! equal-norm Gaussian jamming baseline, and the PNR/epsilon arithmetic.
//!
//! Power ratios (`pnr`, `snr`) are linear unless a name ends in `_db`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{IqFrame, FRAME_SIZE};
use crate::error::{Error, Result};
use crate::nn::{argmax, softmax, CnnModel};
use crate::rejection::NrModel;
use crate::NUM_CLASSES;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

fn check_positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(())
}

/// `eps = sqrt(pnr * ||x||^2 / (snr + 1))`.
pub fn epsilon_from_pnr(pnr: f64, snr: f64, x_norm_sq: f64) -> Result<f64> {
    check_positive(&[("PNR", pnr), ("SNR", snr), ("||x||^2", x_norm_sq)])?;
    Ok((pnr * x_norm_sq / (snr + 1.0)).sqrt())
}

/// `pnr = eps^2 (snr + 1) / ||x||^2`.
pub fn pnr_from_epsilon(epsilon: f64, snr: f64, x_norm_sq: f64) -> Result<f64> {
    check_positive(&[("epsilon", epsilon), ("SNR", snr), ("||x||^2", x_norm_sq)])?;
    Ok(epsilon * epsilon * (snr + 1.0) / x_norm_sq)
}

/// Either a perturbation-to-noise ratio (resolved per frame) or an
/// explicit perturbation norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AttackBudget {
    Pnr { pnr_db: f64, snr_db: f64 },
    Epsilon(f64),
}

impl AttackBudget {
    pub fn epsilon_for(&self, frame: &IqFrame) -> Result<f64> {
        match *self {
            AttackBudget::Pnr { pnr_db, snr_db } => {
                epsilon_from_pnr(db_to_linear(pnr_db), db_to_linear(snr_db), frame.norm_sq())
            }
            AttackBudget::Epsilon(e) if e >= 0.0 && e.is_finite() => Ok(e),
            AttackBudget::Epsilon(e) => Err(Error::InvalidArgument(format!("epsilon {e}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub adversarial: IqFrame,
    pub epsilon_used: f64,
    pub target_class: Option<usize>,
    pub succeeded: bool,
    /// Whether the adversarial frame was accepted (NR attacks only).
    pub evaded_rejection: Option<bool>,
    pub perturbation_norm: f64,
    /// Targets dropped because their gradient vanished.
    pub skipped_targets: usize,
}

/// Unit-norm attack directions, one per usable target.
#[derive(Clone, Debug)]
pub struct Directions {
    pub targets: Vec<(usize, Vec<f64>)>,
    pub skipped: usize,
}

fn normalised(targets: impl Iterator<Item = (usize, Vec<f64>)>) -> Directions {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (t, g) in targets {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            out.push((t, g.iter().map(|v| -v / norm).collect()));
        } else {
            skipped += 1;
        }
    }
    Directions { targets: out, skipped }
}

fn check_label(y: usize) -> Result<()> {
    if y >= NUM_CLASSES {
        return Err(Error::InvalidArgument(format!("label {y} out of range")));
    }
    Ok(())
}

/// For each target `t != y`, the descent direction of the cross-entropy
/// towards `e_t`: `-grad L(x, e_t) / ||grad L(x, e_t)||`.
pub fn dnn_directions(model: &CnnModel, frame: &IqFrame, y: usize) -> Result<Directions> {
    check_label(y)?;
    let p = softmax(&model.logits(frame)?);
    let targets: Vec<usize> = (0..NUM_CLASSES).filter(|&t| t != y).collect();
    let seeds: Vec<Vec<f64>> = targets
        .iter()
        .map(|&t| {
            let mut s = p.clone();
            s[t] -= 1.0;
            s
        })
        .collect();
    let grads = model.grad_input_multi(frame, &seeds)?;
    Ok(normalised(targets.into_iter().zip(grads)))
}

/// For each target `t != y`, the descent direction of `S_y - S_t`.
pub fn nr_directions(nr: &NrModel, frame: &IqFrame, y: usize) -> Result<Directions> {
    check_label(y)?;
    let targets: Vec<usize> = (0..NUM_CLASSES).filter(|&t| t != y).collect();
    let grads = nr.margin_gradients(frame, y, &targets)?;
    Ok(normalised(targets.into_iter().zip(grads)))
}

fn unperturbed(frame: &IqFrame, succeeded: bool, evaded: Option<bool>, skipped: usize) -> AttackOutcome {
    AttackOutcome {
        adversarial: frame.clone(),
        epsilon_used: 0.0,
        target_class: None,
        succeeded,
        evaded_rejection: evaded,
        perturbation_norm: 0.0,
        skipped_targets: skipped,
    }
}

fn outcome(frame: &IqFrame, adversarial: IqFrame, epsilon: f64, target: usize) -> AttackOutcome {
    let perturbation_norm = adversarial.distance(frame);
    AttackOutcome {
        adversarial,
        epsilon_used: epsilon,
        target_class: Some(target),
        succeeded: false,
        evaded_rejection: None,
        perturbation_norm,
        skipped_targets: 0,
    }
}

/// Targeted FGM against the plain CNN. Targets are tried in ascending
/// order and the first that flips the prediction away from `y` wins; when
/// none does, the candidate with the lowest true-class probability is
/// returned. If every target gradient vanishes the frame is returned
/// unchanged with `epsilon_used = 0`.
pub fn fgm_dnn(model: &CnnModel, frame: &IqFrame, y: usize, epsilon: f64) -> Result<AttackOutcome> {
    check_epsilon(epsilon)?;
    let dirs = dnn_directions(model, frame, y)?;
    if dirs.targets.is_empty() {
        let pred = model.predict(frame)?;
        return Ok(unperturbed(frame, pred != y, None, dirs.skipped));
    }
    let candidates = dirs
        .targets
        .iter()
        .map(|(_, r)| frame.perturbed(r, epsilon))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&IqFrame> = candidates.iter().collect();
    let logits = model.logits_batch(&refs)?;
    let mut fallback = (f64::INFINITY, 0);
    for (i, row) in logits.rows().into_iter().enumerate() {
        let row = row.as_slice().expect("contiguous");
        if argmax(row) != y {
            let mut o = outcome(frame, candidates[i].clone(), epsilon, dirs.targets[i].0);
            o.succeeded = true;
            o.skipped_targets = dirs.skipped;
            return Ok(o);
        }
        let py = softmax(row)[y];
        if py < fallback.0 {
            fallback = (py, i);
        }
    }
    let i = fallback.1;
    let mut o = outcome(frame, candidates[i].clone(), epsilon, dirs.targets[i].0);
    o.skipped_targets = dirs.skipped;
    Ok(o)
}

/// Targeted FGM against the rejection system. Success needs the top score
/// to move off `y` and to clear the threshold. Without a success the
/// candidate with the lowest `S_y` is returned.
pub fn fgm_nr(nr: &NrModel, frame: &IqFrame, y: usize, epsilon: f64) -> Result<AttackOutcome> {
    check_epsilon(epsilon)?;
    let dirs = nr_directions(nr, frame, y)?;
    if dirs.targets.is_empty() {
        let d = nr.classify_with_reject(frame)?;
        let accepted = d.max_score > nr.theta();
        return Ok(unperturbed(
            frame,
            accepted && d.top_class() != y,
            Some(accepted),
            dirs.skipped,
        ));
    }
    let candidates = dirs
        .targets
        .iter()
        .map(|(_, r)| frame.perturbed(r, epsilon))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&IqFrame> = candidates.iter().collect();
    let decisions = nr.classify_many(&refs)?;
    let mut fallback = (f64::INFINITY, 0);
    for (i, d) in decisions.iter().enumerate() {
        let accepted = d.max_score > nr.theta();
        if accepted && d.top_class() != y {
            let mut o = outcome(frame, candidates[i].clone(), epsilon, dirs.targets[i].0);
            o.succeeded = true;
            o.evaded_rejection = Some(true);
            o.skipped_targets = dirs.skipped;
            return Ok(o);
        }
        if d.scores[y] < fallback.0 {
            fallback = (d.scores[y], i);
        }
    }
    let i = fallback.1;
    let mut o = outcome(frame, candidates[i].clone(), epsilon, dirs.targets[i].0);
    o.evaded_rejection = Some(decisions[i].max_score > nr.theta());
    o.skipped_targets = dirs.skipped;
    Ok(o)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    Ok(())
}

/// Relative bisection tolerance used by the minimal-epsilon search.
pub const MIN_EPS_TOLERANCE: f64 = 1e-3;

/// Smallest `eps` with `success(eps)`, assuming success is monotone in
/// `eps`. Returns 0 when `success(0)` already holds. The bracket is found by
/// doubling from `1e-3 * scale` up to `10 * scale`, then bisected until
/// `hi - lo <= tol * hi`; the returned value always satisfies `success`.
pub fn min_epsilon<F>(mut success: F, scale: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    check_positive(&[("scale", scale), ("tolerance", tol)])?;
    if success(0.0)? {
        return Ok(0.0);
    }
    let cap = 10.0 * scale;
    let mut lo = 0.0;
    let mut hi = 1e-3 * scale;
    loop {
        if success(hi)? {
            break;
        }
        if hi >= cap {
            return Err(Error::Unattackable { cap });
        }
        lo = hi;
        hi = (2.0 * hi).min(cap);
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if success(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinEpsilon {
    pub epsilon: f64,
    /// `None` when the frame is misclassified without perturbation.
    pub target_class: Option<usize>,
}

fn min_over_targets<F>(dirs: &Directions, frame: &IqFrame, clean_success: bool, mut success: F) -> Result<MinEpsilon>
where
    F: FnMut(&IqFrame) -> Result<bool>,
{
    if clean_success {
        return Ok(MinEpsilon {
            epsilon: 0.0,
            target_class: None,
        });
    }
    let scale = frame.norm();
    let mut best: Option<MinEpsilon> = None;
    for (t, r) in &dirs.targets {
        let found = min_epsilon(|e| success(&frame.perturbed(r, e)?), scale, MIN_EPS_TOLERANCE);
        match found {
            Ok(e) if best.is_none_or(|b| e < b.epsilon) => {
                best = Some(MinEpsilon {
                    epsilon: e,
                    target_class: Some(*t),
                })
            }
            Ok(_) | Err(Error::Unattackable { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::Unattackable { cap: 10.0 * scale })
}

/// Minimal FGM norm that misclassifies `frame`, minimised over targets.
pub fn min_epsilon_dnn(model: &CnnModel, frame: &IqFrame, y: usize) -> Result<MinEpsilon> {
    let dirs = dnn_directions(model, frame, y)?;
    let clean = model.predict(frame)? != y;
    min_over_targets(&dirs, frame, clean, |x| Ok(model.predict(x)? != y))
}

/// Minimal FGM norm that gets `frame` accepted as a wrong class.
pub fn min_epsilon_nr(nr: &NrModel, frame: &IqFrame, y: usize) -> Result<MinEpsilon> {
    let dirs = nr_directions(nr, frame, y)?;
    let fooled = |x: &IqFrame| -> Result<bool> {
        let d = nr.classify_with_reject(x)?;
        Ok(d.max_score > nr.theta() && d.top_class() != y)
    };
    let clean = fooled(frame)?;
    min_over_targets(&dirs, frame, clean, fooled)
}

/// Adds i.i.d. Gaussian noise rescaled to norm exactly `epsilon`.
pub fn jamming(frame: &IqFrame, epsilon: f64, seed: u64) -> Result<IqFrame> {
    check_epsilon(epsilon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let noise: Vec<f64> = (0..FRAME_SIZE).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            let unit: Vec<f64> = noise.iter().map(|v| v / norm).collect();
            return frame.perturbed(&unit, epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_from_pnr(1.0, 10.0, 11.0).unwrap() - 1.0).abs() < 1e-15);
        let e = epsilon_from_pnr(db_to_linear(-10.0), 10.0, 11.0).unwrap();
        assert!((e - 0.1f64.sqrt()).abs() < 1e-15);
        assert!(epsilon_from_pnr(0.0, 10.0, 11.0).is_err());
        assert!(epsilon_from_pnr(1.0, -1.0, 11.0).is_err());
    }

    #[test]
    fn db_conversions_invert() {
        for db in [-20.0, -10.0, 0.0, 3.0, 18.0] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-12);
        }
    }

    #[test]
    fn bisection_finds_known_threshold() {
        let threshold = 0.3712;
        let e = min_epsilon(|e| Ok(e >= threshold), 1.0, 1e-3).unwrap();
        assert!(e >= threshold && e / (1.0 + 1e-3) < threshold);
        assert_eq!(min_epsilon(|_| Ok(true), 1.0, 1e-3).unwrap(), 0.0);
        assert!(matches!(
            min_epsilon(|_| Ok(false), 1.0, 1e-3),
            Err(Error::Unattackable { .. })
        ));
    }

    #[test]
    fn jamming_has_exact_norm() {
        let x = IqFrame::from_vec((0..FRAME_SIZE).map(|i| (i as f64).sin()).collect()).unwrap();
        let j = jamming(&x, 0.25, 7).unwrap();
        assert!((j.distance(&x) - 0.25).abs() < 1e-12);
        assert_eq!(jamming(&x, 0.25, 7).unwrap(), j);
        assert_eq!(jamming(&x, 0.0, 7).unwrap(), x);
    }
}
