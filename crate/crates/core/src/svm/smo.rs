//! Two-coordinate dual ascent (SMO) for the soft-margin kernel SVM.
//!
//! Solves `min_a 1/2 a'Qa - e'a` subject to `0 <= a_i <= C` and `y'a = 0`,
//! with `Q_ij = y_i y_j K_ij`. Working pairs are the maximal KKT violators:
//! `i = argmax_{I_up} -y_t G_t`, `j = argmin_{I_low} -y_t G_t`.

use crate::error::{Error, Result};

/// Read-only access to a symmetric kernel matrix.
pub trait Kernel: Sync {
    fn size(&self) -> usize;
    fn get(&self, i: usize, j: usize) -> f64;
}

/// Dense kernel matrix.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
}

impl KernelMatrix {
    /// RBF kernel over the rows of `points` (row-major, `dim` columns).
    pub fn rbf(points: &[f64], dim: usize, gamma: f64) -> Self {
        let n = if dim == 0 { 0 } else { points.len() / dim };
        let x = ndarray::ArrayView2::from_shape((n, dim), points).expect("row-major points");
        let gram = x.dot(&x.t());
        let norms: Vec<f64> = (0..n).map(|i| gram[[i, i]]).collect();
        let mut values = vec![0f64; n * n];
        for i in 0..n {
            for j in 0..n {
                let d2 = (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0);
                values[i * n + j] = (-gamma * d2).exp();
            }
        }
        KernelMatrix { n, values }
    }

    /// Restriction to the rows/columns in `subset`.
    pub fn subset<'a>(&'a self, subset: &'a [usize]) -> SubKernel<'a> {
        SubKernel { base: self, subset }
    }
}

impl Kernel for KernelMatrix {
    fn size(&self) -> usize {
        self.n
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

pub struct SubKernel<'a> {
    base: &'a KernelMatrix,
    subset: &'a [usize],
}

impl Kernel for SubKernel<'_> {
    fn size(&self) -> usize {
        self.subset.len()
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.base.get(self.subset[i], self.subset[j])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl SmoParams {
    pub fn new(c: f64) -> Self {
        SmoParams {
            c,
            tolerance: 1e-5,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Decision function offset: `f(x) = sum a_i y_i K(x_i, x) + bias`.
    pub bias: f64,
    pub iterations: usize,
    /// Maximal KKT violation at termination.
    pub kkt_gap: f64,
    /// Dual objective `sum a - 1/2 a'Qa` (to be maximised).
    pub dual_objective: f64,
}

pub fn solve<K: Kernel + ?Sized>(kernel: &K, y: &[f64], params: SmoParams) -> Result<SmoSolution> {
    let n = kernel.size();
    if y.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: y.len(),
        });
    }
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "binary problem needs at least one example of each sign".into(),
        ));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument("labels must be +1 or -1".into()));
    }
    if !(params.c > 0.0) {
        return Err(Error::InvalidArgument("C must be positive".into()));
    }
    let c = params.c;
    let diag: Vec<f64> = (0..n).map(|i| kernel.get(i, i)).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut gap;

    loop {
        let (i, j, g) = select_pair(&alpha, &grad, y, c);
        gap = g;
        if gap < params.tolerance {
            break;
        }
        if iterations >= params.max_iterations {
            return Err(Error::NonConvergence { iterations, gap });
        }
        iterations += 1;
        let (i, j) = (i.expect("violating pair"), j.expect("violating pair"));

        let kij = kernel.get(i, j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (diag[i] + diag[j] + 2.0 * kij).max(1e-12);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (diag[i] + diag[j] - 2.0 * kij).max(1e-12);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let di = (alpha[i] - old_i) * y[i];
        let dj = (alpha[j] - old_j) * y[j];
        for t in 0..n {
            grad[t] += y[t] * (di * kernel.get(t, i) + dj * kernel.get(t, j));
        }
    }

    let bias = -rho(&alpha, &grad, y, c);
    let dual_objective = -0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * (g - 1.0)).sum::<f64>();
    Ok(SmoSolution {
        alpha,
        bias,
        iterations,
        kkt_gap: gap,
        dual_objective,
    })
}

fn in_up(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(a: f64, y: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// Maximal violating pair and the violation `m(a) - M(a)`.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> (Option<usize>, Option<usize>, f64) {
    let mut best_up = f64::NEG_INFINITY;
    let mut best_low = f64::INFINITY;
    let (mut i, mut j) = (None, None);
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if in_up(alpha[t], y[t], c) && v > best_up {
            best_up = v;
            i = Some(t);
        }
        if in_low(alpha[t], y[t], c) && v < best_low {
            best_low = v;
            j = Some(t);
        }
    }
    if i.is_none() || j.is_none() {
        return (i, j, 0.0);
    }
    (i, j, best_up - best_low)
}

fn rho(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..alpha.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Maximal KKT violation of an arbitrary feasible `alpha`, recomputing the
/// gradient from scratch.
pub fn kkt_violation<K: Kernel + ?Sized>(kernel: &K, y: &[f64], alpha: &[f64], c: f64) -> f64 {
    let n = kernel.size();
    let grad: Vec<f64> = (0..n)
        .map(|i| y[i] * (0..n).map(|j| y[j] * alpha[j] * kernel.get(i, j)).sum::<f64>() - 1.0)
        .collect();
    select_pair(alpha, &grad, y, c).2.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_problem_is_symmetric() {
        let pts = [0.0, 0.0, 2.0, 0.0];
        let k = KernelMatrix::rbf(&pts, 2, 0.5);
        let sol = solve(&k, &[1.0, -1.0], SmoParams::new(10.0)).unwrap();
        assert!(sol.alpha[0] > 0.0 && (sol.alpha[0] - sol.alpha[1]).abs() < 1e-12);
        assert!(sol.bias.abs() < 1e-9);
    }

    #[test]
    fn one_sided_labels_are_rejected() {
        let k = KernelMatrix::rbf(&[0.0, 1.0], 1, 1.0);
        assert!(solve(&k, &[1.0, 1.0], SmoParams::new(1.0)).is_err());
    }

    #[test]
    fn iteration_cap_reports_gap() {
        let pts: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let k = KernelMatrix::rbf(&pts, 1, 1.0);
        let params = SmoParams {
            max_iterations: 1,
            tolerance: 1e-9,
            ..SmoParams::new(5.0)
        };
        match solve(&k, &y, params) {
            Err(Error::NonConvergence { iterations, gap }) => {
                assert_eq!(iterations, 1);
                assert!(gap > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
