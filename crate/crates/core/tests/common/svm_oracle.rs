//! Slow reference solver for the SVM dual: projected gradient descent on
//! `1/2 a'Qa - e'a` over `{0 <= a <= C, y'a = 0}`.

#![allow(dead_code)]

/// RBF Gram matrix computed entry by entry.
pub fn rbf_gram(points: &[f64], dim: usize, gamma: f64) -> Vec<Vec<f64>> {
    let n = points.len() / dim;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d2: f64 = (0..dim)
                        .map(|t| (points[i * dim + t] - points[j * dim + t]).powi(2))
                        .sum();
                    (-gamma * d2).exp()
                })
                .collect()
        })
        .collect()
}

pub fn dual_objective(gram: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * gram[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto the box intersected with the hyperplane,
/// by bisection on the hyperplane multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lambda: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lambda * yi).clamp(0.0, c))
            .collect()
    };
    let balance = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(ai, yi)| ai * yi).sum() };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if balance(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Returns the maximal dual objective found.
pub fn projected_gradient(gram: &[Vec<f64>], y: &[f64], c: f64, iterations: usize) -> f64 {
    let n = y.len();
    // Gershgorin bound on the largest eigenvalue of Q.
    let lmax = (0..n)
        .map(|i| gram[i].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let step = 1.0 / lmax;
    let mut alpha = vec![0.0; n];
    let mut best = 0.0f64;
    for it in 0..iterations {
        let grad: Vec<f64> = (0..n)
            .map(|i| y[i] * (0..n).map(|j| y[j] * alpha[j] * gram[i][j]).sum::<f64>() - 1.0)
            .collect();
        let next = project(
            &alpha.iter().zip(&grad).map(|(a, g)| a - step * g).collect::<Vec<_>>(),
            y,
            c,
        );
        let moved: f64 = next.iter().zip(&alpha).map(|(a, b)| (a - b).abs()).sum();
        alpha = next;
        if it % 50 == 0 || moved < 1e-14 {
            best = best.max(dual_objective(gram, y, &alpha));
        }
        if moved < 1e-14 {
            break;
        }
    }
    best.max(dual_objective(gram, y, &alpha))
}
