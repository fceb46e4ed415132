mod common;

use amcdef_core::svm::smo::{self, KernelMatrix, SmoParams};
use amcdef_core::svm::{
    load_svm, save_svm, solve_binary, train_ova, BinarySvm, CvGrid, GammaSpec, OvaSvm, Standardizer,
};
use common::svm_oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_problem(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut pts = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        for _ in 0..dim {
            let z: f64 = StandardNormal.sample(rng);
            pts.push(z + 0.6 * label);
        }
        y.push(label);
    }
    (pts, y)
}

/// Isotropic Gaussian blobs around well separated centres.
fn blobs(rng: &mut ChaCha8Rng, per_class: usize, classes: usize, dim: usize) -> (Vec<f64>, Vec<usize>) {
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * classes {
        let k = i % classes;
        for d in 0..dim {
            let centre = if d == k { 4.0 } else { 0.0 };
            let z: f64 = StandardNormal.sample(rng);
            pts.push(centre + 0.7 * z);
        }
        labels.push(k);
    }
    (pts, labels)
}

#[test]
fn smo_matches_projected_gradient_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for instance in 0..20 {
        let n = rng.random_range(4..=40);
        let dim = rng.random_range(1..=4);
        let gamma = [0.1, 0.5, 2.0][instance % 3];
        let c = [0.1, 1.0, 10.0][(instance / 3) % 3];
        let (pts, y) = random_problem(&mut rng, n, dim);
        let kernel = KernelMatrix::rbf(&pts, dim, gamma);
        let sol = smo::solve(&kernel, &y, SmoParams::new(c)).unwrap();
        let gram = svm_oracle::rbf_gram(&pts, dim, gamma);
        let reference = svm_oracle::projected_gradient(&gram, &y, c, 200_000);
        let ours = svm_oracle::dual_objective(&gram, &y, &sol.alpha);
        assert!(
            (ours - reference).abs() < 1e-3,
            "instance {instance}: smo {ours} vs oracle {reference}"
        );
        assert!((sol.dual_objective - ours).abs() < 1e-4 * (1.0 + ours.abs()));
        assert!(smo::kkt_violation(&kernel, &y, &sol.alpha, c) < 1e-3);
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(balance.abs() < 1e-9);
        assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
    }
}

#[test]
fn duplicating_data_at_half_c_preserves_the_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (pts, y) = random_problem(&mut rng, 24, 3);
    let once = solve_binary(&pts, 3, &y, 2.0, 0.4).unwrap();
    let mut pts2 = pts.clone();
    pts2.extend_from_slice(&pts);
    let mut y2 = y.clone();
    y2.extend_from_slice(&y);
    let twice = solve_binary(&pts2, 3, &y2, 1.0, 0.4).unwrap();
    for probe in 0..20 {
        let z: Vec<f64> = (0..3).map(|d| ((probe * 7 + d) as f64 * 0.37).sin() * 2.0).collect();
        let a = once.score(&z).unwrap();
        let b = twice.score(&z).unwrap();
        assert!((a - b).abs() < 2e-2, "probe {probe}: {a} vs {b}");
    }
}

#[test]
fn separable_data_is_fit_exactly_with_large_c() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut pts = Vec::new();
    let mut y = Vec::new();
    for i in 0..40 {
        let label = if i % 2 == 0 { 1.0 } else { -1.0 };
        pts.push(label * 3.0 + rng.random_range(-0.5..0.5));
        pts.push(rng.random_range(-1.0..1.0));
        y.push(label);
    }
    let m = solve_binary(&pts, 2, &y, 1e4, 0.5).unwrap();
    for (i, &label) in y.iter().enumerate() {
        let s = m.score(&pts[2 * i..2 * i + 2]).unwrap();
        assert!(s * label >= 1.0 - 1e-2, "margin violated at {i}: {s}");
    }
}

#[test]
fn three_blobs_are_classified() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (train, train_labels) = blobs(&mut rng, 40, 3, 3);
    let (test, test_labels) = blobs(&mut rng, 100, 3, 3);
    let (svm, cv) = train_ova(&train, 3, &train_labels, 3, &CvGrid::default(), 0).unwrap();
    assert_eq!(cv.cells.len(), 16);
    let hits = test
        .chunks(3)
        .zip(&test_labels)
        .filter(|(x, &l)| svm.predict(x).unwrap() == l)
        .count();
    assert!(hits as f64 / test_labels.len() as f64 > 0.95, "accuracy {hits}/300");
}

#[test]
fn absent_class_gets_a_constant_negative_machine() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (pts, labels) = blobs(&mut rng, 20, 3, 3);
    // drop class 1 and train a 4-class head
    let keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    let sub: Vec<f64> = keep.iter().flat_map(|&i| pts[i * 3..i * 3 + 3].to_vec()).collect();
    let sub_labels: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();
    let (svm, _) = train_ova(&sub, 3, &sub_labels, 4, &CvGrid::default(), 0).unwrap();
    for k in [1, 3] {
        assert_eq!(svm.machines[k].n_support(), 0);
        assert_eq!(svm.machines[k].score(&[0.3, -1.0, 2.0]).unwrap(), -1.0);
    }
    assert!(svm.machines[0].n_support() > 0 && svm.machines[2].n_support() > 0);
}

#[test]
fn single_cell_grid_matches_direct_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (pts, labels) = blobs(&mut rng, 15, 3, 4);
    let (svm, cv) = train_ova(&pts, 4, &labels, 3, &CvGrid::single(1.0, GammaSpec::Value(0.3), 3), 0).unwrap();
    assert_eq!((cv.c, cv.gamma), (1.0, 0.3));
    let st = Standardizer::fit(&pts, 4);
    let z = st.apply_rows(&pts);
    for k in 0..3 {
        let y: Vec<f64> = labels.iter().map(|&l| if l == k { 1.0 } else { -1.0 }).collect();
        let direct = solve_binary(&z, 4, &y, 1.0, 0.3).unwrap();
        assert_eq!(direct, svm.machines[k]);
    }
}

#[test]
fn grid_ties_go_to_smallest_c_then_gamma() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut pts, labels) = blobs(&mut rng, 12, 2, 2);
    // Push the blobs far apart so every cell validates perfectly.
    for (row, &l) in pts.chunks_mut(2).zip(&labels) {
        row[0] += 50.0 * l as f64;
    }
    let grid = CvGrid {
        c_values: vec![10.0, 1.0, 100.0],
        gamma_values: vec![GammaSpec::Value(0.5), GammaSpec::Value(0.05)],
        folds: 3,
        standardize: true,
    };
    let (_, cv) = train_ova(&pts, 2, &labels, 2, &grid, 1).unwrap();
    assert!(cv.cells.iter().all(|c| c.2 == 1.0));
    assert_eq!((cv.c, cv.gamma), (1.0, 0.05));
}

#[test]
fn training_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (pts, y) = random_problem(&mut rng, 30, 2);
    let a = solve_binary(&pts, 2, &y, 1.0, 0.7).unwrap();
    let perm: Vec<usize> = (0..30).rev().collect();
    let pts_p: Vec<f64> = perm.iter().flat_map(|&i| pts[2 * i..2 * i + 2].to_vec()).collect();
    let y_p: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
    let b = solve_binary(&pts_p, 2, &y_p, 1.0, 0.7).unwrap();
    for probe in 0..15 {
        let z = [probe as f64 * 0.2 - 1.5, (probe as f64).cos()];
        assert!((a.score(&z).unwrap() - b.score(&z).unwrap()).abs() < 1e-2);
    }
}

fn toy_ova(rng: &mut ChaCha8Rng, dim: usize) -> OvaSvm {
    let machines = (0..3)
        .map(|_| {
            let n = 5;
            BinarySvm {
                dim,
                support_vectors: (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                dual_coeffs: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
                bias: rng.random_range(-0.5..0.5),
                gamma: 0.4,
                c: 1.0,
            }
        })
        .collect();
    let st = Standardizer {
        mean: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        scale: (0..dim).map(|_| rng.random_range(0.5..2.0)).collect(),
    };
    OvaSvm::new(st, machines).unwrap()
}

#[test]
fn decision_scores_match_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ova = toy_ova(&mut rng, 4);
    let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
    let scores = ova.decision_scores(&x).unwrap();
    for (k, m) in ova.machines.iter().enumerate() {
        let mut s = m.bias;
        for i in 0..m.dual_coeffs.len() {
            let mut d2 = 0.0;
            for d in 0..4 {
                let z = (x[d] - ova.standardizer.mean[d]) / ova.standardizer.scale[d];
                d2 += (z - m.support_vectors[i * 4 + d]).powi(2);
            }
            s += m.dual_coeffs[i] * (-m.gamma * d2).exp();
        }
        assert!((s - scores[k]).abs() < 1e-12);
    }
}

#[test]
fn score_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dim = 6;
    let ova = toy_ova(&mut rng, dim);
    let h = 1e-5;
    for probe in 0..30 {
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let k = probe % 3;
        let g = ova.score_gradient(k, &x).unwrap();
        for d in 0..dim {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[d] += h;
            xm[d] -= h;
            let fd = (ova.decision_scores(&xp).unwrap()[k] - ova.decision_scores(&xm).unwrap()[k]) / (2.0 * h);
            let err = (fd - g[d]).abs() / fd.abs().max(g[d].abs()).max(1e-3);
            assert!(err < 1e-5, "probe {probe} dim {d}: fd {fd} analytic {}", g[d]);
        }
    }
}

#[test]
fn checkpoint_round_trip_preserves_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let (pts, labels) = blobs(&mut rng, 10, 3, 3);
    let (svm, _) = train_ova(&pts, 3, &labels, 3, &CvGrid::single(1.0, GammaSpec::InverseDim, 2), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("head.amcs");
    save_svm(&svm, &path).unwrap();
    assert_eq!(load_svm(&path).unwrap(), svm);
}

#[test]
fn classes_with_too_few_examples_are_rejected() {
    let pts = vec![0.0, 1.0, 2.0, 3.0, 4.0];
    let labels = vec![0, 0, 0, 1, 1];
    assert!(train_ova(&pts, 1, &labels, 2, &CvGrid::default(), 0).is_err());
    let single = vec![2, 2, 2, 2, 2];
    assert!(train_ova(&pts, 1, &single, 3, &CvGrid::single(1.0, GammaSpec::InverseDim, 2), 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smo_returns_feasible_kkt_points(seed in 0u64..10_000, n in 3usize..25, c in 0.05f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pts, y) = random_problem(&mut rng, n, 2);
        let kernel = KernelMatrix::rbf(&pts, 2, 0.5);
        let sol = smo::solve(&kernel, &y, SmoParams::new(c)).unwrap();
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
        prop_assert!(balance.abs() < 1e-9);
        prop_assert!(sol.alpha.iter().all(|&a| a >= 0.0 && a <= c));
        prop_assert!(smo::kkt_violation(&kernel, &y, &sol.alpha, c) < 1e-3);
    }
}
