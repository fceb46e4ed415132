//! Small random models shared by the integration tests.

#![allow(dead_code)]

use amcdef_core::dataset::IqFrame;
use amcdef_core::nn::{Arch, CnnModel};
use amcdef_core::rejection::NrModel;
use amcdef_core::svm::{BinarySvm, OvaSvm, Standardizer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SMALL: Arch = Arch {
    conv1_filters: 4,
    conv2_filters: 4,
    dense_width: 16,
};

pub fn random_frame(rng: &mut ChaCha8Rng) -> IqFrame {
    IqFrame::from_vec((0..256).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Random CNN with positive biases so few units sit exactly at a ReLU kink.
pub fn small_model(arch: Arch, seed: u64) -> CnnModel {
    let mut m = CnnModel::new(arch, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let p = m.params_mut();
    for b in [&mut p.conv1_b, &mut p.conv2_b, &mut p.dense1_b, &mut p.dense2_b] {
        b.iter_mut().for_each(|v| *v = rng.random_range(0.05..0.3));
    }
    m
}

/// Rejection system whose SVM head has support vectors drawn from the
/// CNN's own feature cloud, so kernel values are far from zero.
pub fn toy_nr(seed: u64, theta: f64) -> NrModel {
    let cnn = small_model(SMALL, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 200);
    let dim = cnn.feature_width();
    let frames: Vec<IqFrame> = (0..40).map(|_| random_frame(&mut rng)).collect();
    let feats: Vec<f64> = frames.iter().flat_map(|f| cnn.features(f).unwrap()).collect();
    let st = Standardizer::fit(&feats, dim);
    let z = st.apply_rows(&feats);
    let machines = (0..11)
        .map(|_| {
            let mut sv = Vec::new();
            let mut coef = Vec::new();
            for _ in 0..4 {
                let i = rng.random_range(0..40);
                sv.extend(
                    z[i * dim..(i + 1) * dim]
                        .iter()
                        .map(|v| v + rng.random_range(-0.3..0.3)),
                );
                coef.push(rng.random_range(-1.0..1.0));
            }
            BinarySvm {
                dim,
                support_vectors: sv,
                dual_coeffs: coef,
                bias: rng.random_range(-0.2..0.2),
                gamma: 0.5 / dim as f64,
                c: 1.0,
            }
        })
        .collect();
    NrModel::new(cnn, OvaSvm::new(st, machines).unwrap(), theta).unwrap()
}

/// ReLU on/off pattern over every hidden layer.
pub fn active_pattern(model: &CnnModel, frame: &IqFrame) -> Vec<bool> {
    model
        .forward(frame)
        .unwrap()
        .layers
        .into_iter()
        .filter(|l| l.name != "logits")
        .flat_map(|l| l.values.into_iter().map(|v| v > 0.0))
        .collect()
}

/// Compares the analytic input gradient of `S_k` with a central difference
/// along a random unit direction. Returns `None` when the probe straddles a
/// ReLU kink, otherwise the relative error.
pub fn nr_gradient_probe(nr: &NrModel, frame: &IqFrame, k: usize, rng: &mut ChaCha8Rng) -> Option<f64> {
    let h = 1e-4;
    let u: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = u.iter().map(|v| v / norm).collect();
    let plus = frame.perturbed(&u, h).unwrap();
    let minus = frame.perturbed(&u, -h).unwrap();
    if active_pattern(&nr.cnn, &plus) != active_pattern(&nr.cnn, &minus) {
        return None;
    }
    let fd = (nr.scores(&plus).unwrap()[k] - nr.scores(&minus).unwrap()[k]) / (2.0 * h);
    let g = nr.score_gradient(frame, k).unwrap();
    let analytic: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
    Some((fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6))
}
