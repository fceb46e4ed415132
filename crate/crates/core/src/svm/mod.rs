//! RBF support vector machines: the binary dual solver and the one-vs-all
//! scoring head with its analytic feature-space gradient.
//!
//! Features are z-scored with training statistics stored in [`OvaSvm`];
//! support vectors live in the standardised space, and
//! [`OvaSvm::score_gradient`] carries the scaling through the chain rule so
//! callers always work with raw feature vectors.

mod format;
mod ova;
pub mod smo;

pub use format::{load_svm, read_svm, save_svm, write_svm, SVM_VERSION};
pub use ova::{train_ova, CvGrid, CvResult, GammaSpec};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use smo::{KernelMatrix, SmoParams};

/// Support vectors with `alpha_i > PRUNE_ALPHA` are kept.
pub const PRUNE_ALPHA: f64 = 1e-8;

/// `S(z) = sum_i coef_i exp(-gamma ||z - sv_i||^2) + bias`, with
/// `coef_i = alpha_i y_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub dim: usize,
    /// Row-major `[n_sv, dim]`.
    pub support_vectors: Vec<f64>,
    pub dual_coeffs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    /// Box constraint of the training run.
    pub c: f64,
}

impl BinarySvm {
    pub fn n_support(&self) -> usize {
        self.dual_coeffs.len()
    }

    pub fn support_vector(&self, i: usize) -> &[f64] {
        &self.support_vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn score(&self, z: &[f64]) -> Result<f64> {
        check_len(self.dim, z.len())?;
        Ok(self.kernel_terms(z).map(|(c, k, _)| c * k).sum::<f64>() + self.bias)
    }

    /// Gradient of [`score`](Self::score) with respect to `z`:
    /// `sum_i -2 gamma coef_i exp(-gamma ||z - sv_i||^2) (z - sv_i)`.
    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim, z.len())?;
        let mut g = vec![0.0; self.dim];
        for (c, k, sv) in self.kernel_terms(z) {
            let w = -2.0 * self.gamma * c * k;
            for ((gi, zi), si) in g.iter_mut().zip(z).zip(sv) {
                *gi += w * (zi - si);
            }
        }
        Ok(g)
    }

    fn kernel_terms<'a>(&'a self, z: &'a [f64]) -> impl Iterator<Item = (f64, f64, &'a [f64])> + 'a {
        self.dual_coeffs.iter().enumerate().map(move |(i, &c)| {
            let sv = self.support_vector(i);
            let d2: f64 = z.iter().zip(sv).map(|(a, b)| (a - b) * (a - b)).sum();
            (c, (-self.gamma * d2).exp(), sv)
        })
    }
}

/// Solves one binary problem on raw points (no standardisation).
pub fn solve_binary(points: &[f64], dim: usize, labels: &[f64], c: f64, gamma: f64) -> Result<BinarySvm> {
    solve_binary_with(points, dim, labels, gamma, SmoParams::new(c))
}

pub fn solve_binary_with(
    points: &[f64],
    dim: usize,
    labels: &[f64],
    gamma: f64,
    params: SmoParams,
) -> Result<BinarySvm> {
    if dim == 0 || points.len() != dim * labels.len() {
        return Err(Error::Shape {
            expected: dim * labels.len(),
            found: points.len(),
        });
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature".into()));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument("gamma must be positive".into()));
    }
    let kernel = KernelMatrix::rbf(points, dim, gamma);
    let sol = smo::solve(&kernel, labels, params)?;
    Ok(machine_from_solution(
        points, dim, labels, &sol.alpha, sol.bias, gamma, params.c,
    ))
}

pub(crate) fn machine_from_solution(
    points: &[f64],
    dim: usize,
    labels: &[f64],
    alpha: &[f64],
    bias: f64,
    gamma: f64,
    c: f64,
) -> BinarySvm {
    let mut support_vectors = Vec::new();
    let mut dual_coeffs = Vec::new();
    for (i, (&a, &y)) in alpha.iter().zip(labels).enumerate() {
        if a > PRUNE_ALPHA {
            support_vectors.extend_from_slice(&points[i * dim..(i + 1) * dim]);
            dual_coeffs.push(a * y);
        }
    }
    BinarySvm {
        dim,
        support_vectors,
        dual_coeffs,
        bias,
        gamma,
        c,
    }
}

/// Per-dimension z-scoring. Constant dimensions get unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(points: &[f64], dim: usize) -> Self {
        let n = (points.len() / dim.max(1)).max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in points.chunks(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in points.chunks(dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn apply_rows(&self, points: &[f64]) -> Vec<f64> {
        points.chunks(self.dim()).flat_map(|r| self.apply(r)).collect()
    }
}

/// One binary machine per class plus the shared standardisation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvaSvm {
    pub standardizer: Standardizer,
    pub machines: Vec<BinarySvm>,
}

impl OvaSvm {
    pub fn new(standardizer: Standardizer, machines: Vec<BinarySvm>) -> Result<Self> {
        let dim = standardizer.dim();
        if machines.is_empty() {
            return Err(Error::InvalidArgument("no machines".into()));
        }
        for m in &machines {
            check_len(dim, m.dim)?;
        }
        Ok(OvaSvm { standardizer, machines })
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn class_count(&self) -> usize {
        self.machines.len()
    }

    /// One score per class for a raw feature vector.
    pub fn decision_scores(&self, features: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), features.len())?;
        let z = self.standardizer.apply(features);
        self.machines.iter().map(|m| m.score(&z)).collect()
    }

    /// Gradient of class `k`'s score with respect to the raw features.
    pub fn score_gradient(&self, k: usize, features: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dim(), features.len())?;
        let machine = self
            .machines
            .get(k)
            .ok_or_else(|| Error::InvalidArgument(format!("class {k} out of range")))?;
        let z = self.standardizer.apply(features);
        let mut g = machine.gradient(&z)?;
        for (gi, s) in g.iter_mut().zip(&self.standardizer.scale) {
            *gi /= s;
        }
        Ok(g)
    }

    /// Argmax of the scores, lowest index on ties.
    pub fn predict(&self, features: &[f64]) -> Result<usize> {
        Ok(crate::nn::argmax(&self.decision_scores(features)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(sv: Vec<f64>, coef: f64, bias: f64, gamma: f64) -> BinarySvm {
        BinarySvm {
            dim: sv.len(),
            support_vectors: sv,
            dual_coeffs: vec![coef],
            bias,
            gamma,
            c: 1.0,
        }
    }

    #[test]
    fn score_at_support_vector_is_coef_plus_bias() {
        let m = single(vec![1.0, -2.0, 0.5], 0.7, -0.2, 0.3);
        assert!((m.score(&[1.0, -2.0, 0.5]).unwrap() - 0.5).abs() < 1e-15);
        assert!(m.gradient(&[1.0, -2.0, 0.5]).unwrap().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn far_away_score_decays_to_bias() {
        let m = single(vec![0.0, 0.0], 3.0, 0.25, 0.5);
        assert!((m.score(&[1e3, -1e3]).unwrap() - 0.25).abs() < 1e-9);
        let g = m.gradient(&[40.0, 40.0]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-100));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = single(vec![0.0, 0.0], 1.0, 0.0, 1.0);
        assert!(m.score(&[0.0]).is_err());
        let ova = OvaSvm::new(Standardizer::identity(2), vec![m]).unwrap();
        assert!(ova.decision_scores(&[1.0, 2.0, 3.0]).is_err());
        assert!(ova.score_gradient(1, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let s = Standardizer::fit(&[1.0, 5.0, 3.0, 5.0], 2);
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.scale, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[4.0, 5.0]), vec![2.0, 0.0]);
    }
}
