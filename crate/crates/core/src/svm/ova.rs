//! One-vs-all training with stratified k-fold grid search.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::smo::{self, Kernel, KernelMatrix, SmoParams};
use super::{machine_from_solution, BinarySvm, OvaSvm, Standardizer};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GammaSpec {
    /// `1 / feature dimension`
    InverseDim,
    /// `1 / (dimension * variance of all feature entries)`, so the kernel
    /// width follows the overall feature scale.
    Scale,
    Value(f64),
}

impl GammaSpec {
    /// Kernel width for row-major `points` of width `dim`.
    pub fn resolve(self, dim: usize, points: &[f64]) -> f64 {
        match self {
            GammaSpec::InverseDim => 1.0 / dim as f64,
            GammaSpec::Scale => {
                let n = points.len().max(1) as f64;
                let mean = points.iter().sum::<f64>() / n;
                let var = points.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                if var > 0.0 {
                    1.0 / (dim as f64 * var)
                } else {
                    1.0 / dim as f64
                }
            }
            GammaSpec::Value(v) => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<GammaSpec>,
    pub folds: usize,
    /// z-score features before training (statistics kept in the model).
    pub standardize: bool,
}

impl Default for CvGrid {
    fn default() -> Self {
        CvGrid {
            c_values: vec![0.1, 1.0, 10.0, 100.0],
            gamma_values: vec![
                GammaSpec::InverseDim,
                GammaSpec::Value(0.01),
                GammaSpec::Value(0.1),
                GammaSpec::Value(1.0),
            ],
            folds: 3,
            standardize: true,
        }
    }
}

impl CvGrid {
    pub fn single(c: f64, gamma: GammaSpec, folds: usize) -> Self {
        CvGrid {
            c_values: vec![c],
            gamma_values: vec![gamma],
            folds,
            standardize: true,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.c_values.is_empty() || self.gamma_values.is_empty() {
            return Err(Error::InvalidArgument("empty hyper-parameter grid".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidArgument("need at least 2 folds".into()));
        }
        let gammas = self.gamma_values.iter().map(|g| g.resolve(dim, &[]));
        if self
            .c_values
            .iter()
            .copied()
            .chain(gammas)
            .any(|v| !(v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidArgument("grid values must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub c: f64,
    pub gamma: f64,
    /// `(C, gamma, mean validation accuracy)` for every cell, sorted by C then gamma.
    pub cells: Vec<(f64, f64, f64)>,
}

/// Trains one machine per class on `features` (row-major, `dim` columns).
///
/// Every grid cell is scored by mean argmax accuracy over stratified folds;
/// the best cell wins, ties going to the smallest C and then the smallest
/// gamma. The final machines are retrained on all the data.
pub fn train_ova(
    features: &[f64],
    dim: usize,
    labels: &[usize],
    n_classes: usize,
    grid: &CvGrid,
    seed: u64,
) -> Result<(OvaSvm, CvResult)> {
    grid.validate(dim)?;
    if dim == 0 || features.len() != dim * labels.len() {
        return Err(Error::Shape {
            expected: dim * labels.len(),
            found: features.len(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite feature".into()));
    }
    let folds = stratified_folds(labels, n_classes, grid.folds, seed)?;
    let standardizer = if grid.standardize {
        Standardizer::fit(features, dim)
    } else {
        Standardizer::identity(dim)
    };
    let z = standardizer.apply_rows(features);

    let mut gammas: Vec<f64> = grid.gamma_values.iter().map(|g| g.resolve(dim, &z)).collect();
    gammas.sort_by(f64::total_cmp);
    gammas.dedup();
    let mut cs = grid.c_values.clone();
    cs.sort_by(f64::total_cmp);
    cs.dedup();

    let mut cells = Vec::with_capacity(cs.len() * gammas.len());
    let single_cell = cs.len() == 1 && gammas.len() == 1;
    for &gamma in &gammas {
        if single_cell {
            cells.push((cs[0], gamma, f64::NAN));
            continue;
        }
        let kernel = KernelMatrix::rbf(&z, dim, gamma);
        for &c in &cs {
            let mut acc = 0.0;
            for fold in 0..grid.folds {
                let train: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != fold).collect();
                let valid: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == fold).collect();
                acc += fold_accuracy(&kernel, labels, n_classes, &train, &valid, c)?;
            }
            cells.push((c, gamma, acc / grid.folds as f64));
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut best = 0;
    for (i, cell) in cells.iter().enumerate() {
        if cell.2 > cells[best].2 {
            best = i;
        }
    }
    let (c, gamma, _) = cells[best];

    let kernel = KernelMatrix::rbf(&z, dim, gamma);
    let all: Vec<usize> = (0..labels.len()).collect();
    let machines = (0..n_classes)
        .into_par_iter()
        .map(|k| {
            let y = binary_labels(labels, &all, k);
            let (alpha, bias) = solve_one_vs_all(&kernel, &y, c)?;
            Ok(machine_from_solution(&z, dim, &y, &alpha, bias, gamma, c))
        })
        .collect::<Result<Vec<BinarySvm>>>()?;
    Ok((OvaSvm::new(standardizer, machines)?, CvResult { c, gamma, cells }))
}

/// A class with no positive examples gets the constant machine `S = -1`,
/// which is the exact dual optimum when every label is negative.
fn solve_one_vs_all<K: Kernel + ?Sized>(kernel: &K, y: &[f64], c: f64) -> Result<(Vec<f64>, f64)> {
    if y.iter().all(|&v| v < 0.0) {
        return Ok((vec![0.0; y.len()], -1.0));
    }
    let sol = smo::solve(kernel, y, SmoParams::new(c))?;
    Ok((sol.alpha, sol.bias))
}

fn binary_labels(labels: &[usize], subset: &[usize], class: usize) -> Vec<f64> {
    subset
        .iter()
        .map(|&i| if labels[i] == class { 1.0 } else { -1.0 })
        .collect()
}

fn fold_accuracy(
    kernel: &KernelMatrix,
    labels: &[usize],
    n_classes: usize,
    train: &[usize],
    valid: &[usize],
    c: f64,
) -> Result<f64> {
    let sub = kernel.subset(train);
    let solutions = (0..n_classes)
        .into_par_iter()
        .map(|k| solve_one_vs_all(&sub, &binary_labels(labels, train, k), c))
        .collect::<Result<Vec<_>>>()?;
    let mut hits = 0;
    for &v in valid {
        let mut best = (f64::NEG_INFINITY, 0);
        for (k, (alpha, bias)) in solutions.iter().enumerate() {
            let mut s = *bias;
            for (t, &ti) in train.iter().enumerate() {
                let a = alpha[t];
                if a > 0.0 {
                    let y = if labels[ti] == k { 1.0 } else { -1.0 };
                    s += a * y * kernel.get(v, ti);
                }
            }
            if s > best.0 {
                best = (s, k);
            }
        }
        if best.1 == labels[v] {
            hits += 1;
        }
    }
    Ok(hits as f64 / valid.len().max(1) as f64)
}

/// Fold index per example; each class is shuffled and dealt round-robin.
/// Classes absent from `labels` are skipped, but at least two must be
/// present.
fn stratified_folds(labels: &[usize], n_classes: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut present = 0;
    for k in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if members.is_empty() {
            continue;
        }
        present += 1;
        if members.len() < folds {
            return Err(Error::InsufficientData(format!(
                "class {k} has {} example(s); {folds} folds need at least {folds}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            assignment[i] = j % folds;
        }
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    if present < 2 {
        return Err(Error::InsufficientData(format!(
            "{present} class(es) present; need at least 2"
        )));
    }
    Ok(assignment)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let f = stratified_folds(&labels, 3, 3, 1).unwrap();
        for k in 0..3 {
            for fold in 0..3 {
                let n = (0..30).filter(|&i| labels[i] == k && f[i] == fold).count();
                assert!(n >= 3);
            }
        }
        assert!(stratified_folds(&[0, 0, 1], 2, 2, 0).is_err());
        assert!(stratified_folds(&[0, 0, 2, 2], 3, 2, 0).is_ok());
        assert!(stratified_folds(&[1, 1, 1, 1], 3, 2, 0).is_err());
    }

    #[test]
    fn grid_validation() {
        let g = CvGrid {
            c_values: vec![],
            ..CvGrid::default()
        };
        assert!(g.validate(4).is_err());
        let g = CvGrid {
            folds: 1,
            ..CvGrid::default()
        };
        assert!(g.validate(4).is_err());
        assert!(CvGrid::single(-1.0, GammaSpec::InverseDim, 3).validate(4).is_err());
    }
}
