//! A fixed-topology convolutional classifier with hand-written backpropagation.
//!
//! Topology (VT-CNN2 shape):
//!
//! ```text
//! input 2x128
//!  -> conv1: F1 filters, kernel 1x3, same padding on time, ReLU   -> F1 x 2 x 128
//!  -> conv2: F2 filters, kernel 2x3, same padding on time, ReLU   -> F2 x 1 x 128
//!  -> dense1: 128*F2 -> H, ReLU                                   (the features)
//!  -> dense2: H -> 11                                              (the logits)
//! ```
//!
//! Convolutions are lowered to matrix products over im2col buffers. Internal
//! activation layouts put the channel index innermost; [`ForwardTrace`]
//! re-flattens them channel-major.

mod checkpoint;
mod labels;
mod train;

pub use checkpoint::{load_cnn, read_cnn, save_cnn, write_cnn, CNN_VERSION};
pub use labels::{argmax, log_softmax, smooth_labels, softmax};
pub use train::{accuracy, train, train_with_hook, Optimizer, TrainConfig, TrainReport};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{IqFrame, FRAME_LEN, FRAME_SIZE};
use crate::error::{check_len, Error, Result};
use crate::NUM_CLASSES;

const KERNEL: usize = 3;
const ROWS: usize = 2;

/// Layer widths. Everything else about the topology is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub dense_width: usize,
}

impl Arch {
    /// The published VT-CNN2 widths.
    pub const VT_CNN2: Arch = Arch {
        conv1_filters: 256,
        conv2_filters: 80,
        dense_width: 256,
    };

    pub fn feature_width(&self) -> usize {
        self.dense_width
    }

    fn validate(&self) -> Result<()> {
        if self.conv1_filters == 0 || self.conv2_filters == 0 || self.dense_width == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer widths must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for Arch {
    fn default() -> Self {
        Arch::VT_CNN2
    }
}

/// One block per weight or bias tensor. Used both for the model parameters
/// and for their gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    /// `[F1, 3]`
    pub conv1_w: Array2<f64>,
    pub conv1_b: Array1<f64>,
    /// `[F2, 3 * 2 * F1]`, column `(tap * 2 + row) * F1 + channel`
    pub conv2_w: Array2<f64>,
    pub conv2_b: Array1<f64>,
    /// `[H, 128 * F2]`, column `t * F2 + channel`
    pub dense1_w: Array2<f64>,
    pub dense1_b: Array1<f64>,
    /// `[11, H]`
    pub dense2_w: Array2<f64>,
    pub dense2_b: Array1<f64>,
}

pub const BLOCK_NAMES: [&str; 8] = [
    "conv1.weight",
    "conv1.bias",
    "conv2.weight",
    "conv2.bias",
    "dense1.weight",
    "dense1.bias",
    "dense2.weight",
    "dense2.bias",
];

impl Params {
    pub fn zeros(arch: Arch) -> Self {
        let Arch {
            conv1_filters: f1,
            conv2_filters: f2,
            dense_width: h,
        } = arch;
        Params {
            conv1_w: Array2::zeros((f1, KERNEL)),
            conv1_b: Array1::zeros(f1),
            conv2_w: Array2::zeros((f2, KERNEL * ROWS * f1)),
            conv2_b: Array1::zeros(f2),
            dense1_w: Array2::zeros((h, FRAME_LEN * f2)),
            dense1_b: Array1::zeros(h),
            dense2_w: Array2::zeros((NUM_CLASSES, h)),
            dense2_b: Array1::zeros(NUM_CLASSES),
        }
    }

    pub fn blocks(&self) -> [&[f64]; 8] {
        [
            self.conv1_w.as_slice().unwrap(),
            self.conv1_b.as_slice().unwrap(),
            self.conv2_w.as_slice().unwrap(),
            self.conv2_b.as_slice().unwrap(),
            self.dense1_w.as_slice().unwrap(),
            self.dense1_b.as_slice().unwrap(),
            self.dense2_w.as_slice().unwrap(),
            self.dense2_b.as_slice().unwrap(),
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.conv1_w.as_slice_mut().unwrap(),
            self.conv1_b.as_slice_mut().unwrap(),
            self.conv2_w.as_slice_mut().unwrap(),
            self.conv2_b.as_slice_mut().unwrap(),
            self.dense1_w.as_slice_mut().unwrap(),
            self.dense1_b.as_slice_mut().unwrap(),
            self.dense2_w.as_slice_mut().unwrap(),
            self.dense2_b.as_slice_mut().unwrap(),
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel {
    arch: Arch,
    params: Params,
}

/// Activations of one layer, flattened channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerActivation {
    pub name: &'static str,
    pub values: Vec<f64>,
}

/// Everything a single-frame forward pass produces.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// conv1, conv2 and dense1 post-ReLU activations, then the logits.
    pub layers: Vec<LayerActivation>,
    pub logits: Vec<f64>,
    pub features: Vec<f64>,
}

impl ForwardTrace {
    pub fn probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    pub fn predicted(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Batched intermediate results kept for the backward pass.
struct Cache {
    batch: usize,
    input: Array2<f64>,
    /// `[B * 2 * 128, F1]`, row `(b * 2 + r) * 128 + t`
    a1: Array2<f64>,
    /// `[B * 128, F2]`, row `b * 128 + t`
    a2: Array2<f64>,
    /// `[B, H]`
    a3: Array2<f64>,
    /// `[B, 11]`
    logits: Array2<f64>,
}

/// Where backpropagation starts.
enum Seed<'a> {
    Logits(ArrayView2<'a, f64>),
    Features(ArrayView2<'a, f64>),
}

impl CnnModel {
    pub fn zeros(arch: Arch) -> Result<Self> {
        arch.validate()?;
        Ok(CnnModel {
            arch,
            params: Params::zeros(arch),
        })
    }

    /// Uniform fan-in initialisation: weights in `+/- sqrt(6 / fan_in)`
    /// (`sqrt(3 / fan_in)` for the output layer), zero biases.
    pub fn new(arch: Arch, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fans = [
            KERNEL,
            KERNEL * ROWS * arch.conv1_filters,
            FRAME_LEN * arch.conv2_filters,
            arch.dense_width,
        ];
        let p = &mut model.params;
        for (i, w) in [&mut p.conv1_w, &mut p.conv2_w, &mut p.dense1_w, &mut p.dense2_w]
            .into_iter()
            .enumerate()
        {
            let scale = if i == 3 { 3.0 } else { 6.0 };
            let limit = (scale / fans[i] as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
        }
        Ok(model)
    }

    pub fn from_params(arch: Arch, params: Params) -> Result<Self> {
        arch.validate()?;
        let expected = Params::zeros(arch);
        for (name, (a, b)) in BLOCK_NAMES.iter().zip(expected.blocks().iter().zip(params.blocks())) {
            if a.len() != b.len() {
                return Err(Error::InvalidArgument(format!(
                    "{name}: expected {} values, found {}",
                    a.len(),
                    b.len()
                )));
            }
        }
        if params.conv1_w.dim() != expected.conv1_w.dim()
            || params.conv2_w.dim() != expected.conv2_w.dim()
            || params.dense1_w.dim() != expected.dense1_w.dim()
            || params.dense2_w.dim() != expected.dense2_w.dim()
        {
            return Err(Error::InvalidArgument("weight shapes do not chain".into()));
        }
        if !params.all_finite() {
            return Err(Error::InvalidArgument("non-finite parameter".into()));
        }
        Ok(CnnModel { arch, params })
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn feature_width(&self) -> usize {
        self.arch.dense_width
    }

    /// Every parameter rounded to f32, i.e. what a checkpoint stores.
    pub fn rounded_to_f32(&self) -> CnnModel {
        let mut m = self.clone();
        for b in m.params.blocks_mut() {
            b.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        m
    }

    fn forward_cache(&self, input: Array2<f64>) -> Result<Cache> {
        check_len(FRAME_SIZE, input.ncols())?;
        let p = &self.params;
        let batch = input.nrows();

        let cols1 = im2col_conv1(&input);
        let mut a1 = cols1.dot(&p.conv1_w.t());
        a1 += &p.conv1_b;
        relu_inplace(&mut a1);

        let cols2 = im2col_conv2(&a1, batch, self.arch.conv1_filters);
        let mut a2 = cols2.dot(&p.conv2_w.t());
        a2 += &p.conv2_b;
        relu_inplace(&mut a2);

        let flat = a2
            .view()
            .into_shape_with_order((batch, FRAME_LEN * self.arch.conv2_filters))
            .expect("contiguous");
        let mut a3 = flat.dot(&p.dense1_w.t());
        a3 += &p.dense1_b;
        relu_inplace(&mut a3);

        let mut logits = a3.dot(&p.dense2_w.t());
        logits += &p.dense2_b;
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence("non-finite logits in forward pass".into()));
        }
        Ok(Cache {
            batch,
            input,
            a1,
            a2,
            a3,
            logits,
        })
    }

    /// Backpropagates from `seed`. Returns parameter gradients when
    /// `want_params`, and the input gradient `[B, 256]` when `want_input`.
    fn backward(
        &self,
        cache: &Cache,
        seed: Seed<'_>,
        want_params: bool,
        want_input: bool,
    ) -> (Option<Params>, Option<Array2<f64>>) {
        let p = &self.params;
        let b = cache.batch;
        let f1 = self.arch.conv1_filters;
        let f2 = self.arch.conv2_filters;
        let mut grads = want_params.then(|| Params::zeros(self.arch));

        let mut d3 = match seed {
            Seed::Logits(dlogits) => {
                if let Some(g) = grads.as_mut() {
                    g.dense2_w = dlogits.t().dot(&cache.a3);
                    g.dense2_b = dlogits.sum_axis(Axis(0));
                }
                dlogits.dot(&p.dense2_w)
            }
            Seed::Features(dfeat) => dfeat.to_owned(),
        };
        relu_backward(&mut d3, &cache.a3);

        let flat = cache
            .a2
            .view()
            .into_shape_with_order((b, FRAME_LEN * f2))
            .expect("contiguous");
        if let Some(g) = grads.as_mut() {
            g.dense1_w = d3.t().dot(&flat);
            g.dense1_b = d3.sum_axis(Axis(0));
        }
        let mut d2 = d3
            .dot(&p.dense1_w)
            .into_shape_with_order((b * FRAME_LEN, f2))
            .expect("contiguous");
        relu_backward(&mut d2, &cache.a2);

        let cols2 = im2col_conv2(&cache.a1, b, f1);
        if let Some(g) = grads.as_mut() {
            g.conv2_w = d2.t().dot(&cols2);
            g.conv2_b = d2.sum_axis(Axis(0));
        }
        drop(cols2);
        if !want_params && !want_input {
            return (grads, None);
        }
        let dcols2 = d2.dot(&p.conv2_w);
        let mut d1 = col2im_conv2(&dcols2, b, f1);
        relu_backward(&mut d1, &cache.a1);

        if let Some(g) = grads.as_mut() {
            let cols1 = im2col_conv1(&cache.input);
            g.conv1_w = d1.t().dot(&cols1);
            g.conv1_b = d1.sum_axis(Axis(0));
        }
        let dinput = want_input.then(|| {
            let dcols1 = d1.dot(&p.conv1_w);
            col2im_conv1(&dcols1, b)
        });
        (grads, dinput)
    }

    /// Single-frame forward pass with per-layer activations.
    pub fn forward(&self, frame: &IqFrame) -> Result<ForwardTrace> {
        let cache = self.forward_cache(stack(&[frame]))?;
        let f1 = self.arch.conv1_filters;
        let f2 = self.arch.conv2_filters;
        let mut conv1 = Vec::with_capacity(f1 * ROWS * FRAME_LEN);
        for c in 0..f1 {
            conv1.extend(cache.a1.column(c).iter());
        }
        let mut conv2 = Vec::with_capacity(f2 * FRAME_LEN);
        for c in 0..f2 {
            conv2.extend(cache.a2.column(c).iter());
        }
        let features = cache.a3.row(0).to_vec();
        let logits = cache.logits.row(0).to_vec();
        Ok(ForwardTrace {
            layers: vec![
                LayerActivation {
                    name: "conv1",
                    values: conv1,
                },
                LayerActivation {
                    name: "conv2",
                    values: conv2,
                },
                LayerActivation {
                    name: "dense1",
                    values: features.clone(),
                },
                LayerActivation {
                    name: "logits",
                    values: logits.clone(),
                },
            ],
            logits,
            features,
        })
    }

    /// Logits for a batch of frames, `[B, 11]`.
    pub fn logits_batch(&self, frames: &[&IqFrame]) -> Result<Array2<f64>> {
        Ok(self.forward_cache(stack(frames))?.logits)
    }

    /// Penultimate-layer features for a batch of frames, `[B, H]`.
    pub fn features_batch(&self, frames: &[&IqFrame]) -> Result<Array2<f64>> {
        Ok(self.forward_cache(stack(frames))?.a3)
    }

    pub fn logits(&self, frame: &IqFrame) -> Result<Vec<f64>> {
        Ok(self.logits_batch(&[frame])?.row(0).to_vec())
    }

    pub fn features(&self, frame: &IqFrame) -> Result<Vec<f64>> {
        Ok(self.features_batch(&[frame])?.row(0).to_vec())
    }

    /// Argmax of the logits, lowest index on ties.
    pub fn predict(&self, frame: &IqFrame) -> Result<usize> {
        Ok(argmax(&self.logits(frame)?))
    }

    /// Predictions for many frames, evaluated in chunks.
    pub fn predict_many(&self, frames: &[&IqFrame]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(frames.len());
        for chunk in frames.chunks(256) {
            let logits = self.logits_batch(chunk)?;
            out.extend(logits.rows().into_iter().map(|r| argmax(r.as_slice().unwrap())));
        }
        Ok(out)
    }

    /// Mean softmax cross-entropy of `inputs` (`[B, 256]`) against the
    /// target distributions (`[B, 11]`), and the gradient of every
    /// parameter block.
    pub fn loss_and_grads(&self, inputs: Array2<f64>, targets: &Array2<f64>) -> Result<(f64, Params)> {
        check_len(inputs.nrows(), targets.nrows())?;
        check_len(NUM_CLASSES, targets.ncols())?;
        let batch = inputs.nrows();
        if batch == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let cache = self.forward_cache(inputs)?;
        let mut dlogits = Array2::zeros((batch, NUM_CLASSES));
        let mut loss = 0.0;
        for (i, row) in cache.logits.rows().into_iter().enumerate() {
            let ls = log_softmax(row.as_slice().unwrap());
            for k in 0..NUM_CLASSES {
                let t = targets[[i, k]];
                loss -= t * ls[k];
                dlogits[[i, k]] = (ls[k].exp() - t) / batch as f64;
            }
        }
        loss /= batch as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss is {loss}")));
        }
        let (grads, _) = self.backward(&cache, Seed::Logits(dlogits.view()), true, false);
        Ok((loss, grads.expect("requested")))
    }

    /// Gradient of `sum_k weights[k] * logit_k` with respect to the frame.
    pub fn grad_input(&self, frame: &IqFrame, weights: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .grad_input_multi(frame, &[weights.to_vec()])?
            .pop()
            .expect("one objective"))
    }

    /// One input gradient per logit-space objective, sharing a forward pass.
    pub fn grad_input_multi(&self, frame: &IqFrame, objectives: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let seed = seed_matrix(objectives, NUM_CLASSES)?;
        let cache = self.forward_cache(repeat(frame, objectives.len()))?;
        let (_, dx) = self.backward(&cache, Seed::Logits(seed.view()), false, true);
        Ok(rows(dx.expect("requested")))
    }

    /// `v^T (d features / d frame)` as a 2x128 gradient.
    pub fn feature_jacobian_vjp(&self, frame: &IqFrame, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.feature_vjp_multi(frame, &[v.to_vec()])?.pop().expect("one vector"))
    }

    pub fn feature_vjp_multi(&self, frame: &IqFrame, vs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let seed = seed_matrix(vs, self.feature_width())?;
        let cache = self.forward_cache(repeat(frame, vs.len()))?;
        let (_, dx) = self.backward(&cache, Seed::Features(seed.view()), false, true);
        Ok(rows(dx.expect("requested")))
    }
}

fn seed_matrix(rows: &[Vec<f64>], width: usize) -> Result<Array2<f64>> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no objectives given".into()));
    }
    let mut m = Array2::zeros((rows.len(), width));
    for (i, r) in rows.iter().enumerate() {
        check_len(width, r.len())?;
        m.row_mut(i).assign(&ndarray::ArrayView1::from(r.as_slice()));
    }
    Ok(m)
}

fn rows(m: Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn stack(frames: &[&IqFrame]) -> Array2<f64> {
    let mut x = Array2::zeros((frames.len(), FRAME_SIZE));
    for (i, f) in frames.iter().enumerate() {
        x.row_mut(i).as_slice_mut().unwrap().copy_from_slice(f.as_slice());
    }
    x
}

fn repeat(frame: &IqFrame, n: usize) -> Array2<f64> {
    let mut x = Array2::zeros((n, FRAME_SIZE));
    for mut row in x.rows_mut() {
        row.as_slice_mut().unwrap().copy_from_slice(frame.as_slice());
    }
    x
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes gradient entries whose forward activation was clamped.
fn relu_backward(grad: &mut Array2<f64>, activation: &Array2<f64>) {
    ndarray::Zip::from(grad).and(activation).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0
        }
    });
}

/// `[B, 256]` -> `[B * 2 * 128, 3]`, row `(b * 2 + r) * 128 + t` holding
/// `x[b, r, t - 1 ..= t + 1]` with zero padding.
fn im2col_conv1(input: &Array2<f64>) -> Array2<f64> {
    let b = input.nrows();
    let mut cols = Array2::zeros((b * ROWS * FRAME_LEN, KERNEL));
    for (bi, x) in input.rows().into_iter().enumerate() {
        let x = x.as_slice().unwrap();
        for r in 0..ROWS {
            let row = &x[r * FRAME_LEN..(r + 1) * FRAME_LEN];
            for t in 0..FRAME_LEN {
                let out = (bi * ROWS + r) * FRAME_LEN + t;
                for k in 0..KERNEL {
                    let src = t as isize + k as isize - 1;
                    if (0..FRAME_LEN as isize).contains(&src) {
                        cols[[out, k]] = row[src as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im_conv1(dcols: &Array2<f64>, b: usize) -> Array2<f64> {
    let mut dx = Array2::zeros((b, FRAME_SIZE));
    for bi in 0..b {
        for r in 0..ROWS {
            for t in 0..FRAME_LEN {
                let row = (bi * ROWS + r) * FRAME_LEN + t;
                for k in 0..KERNEL {
                    let src = t as isize + k as isize - 1;
                    if (0..FRAME_LEN as isize).contains(&src) {
                        dx[[bi, r * FRAME_LEN + src as usize]] += dcols[[row, k]];
                    }
                }
            }
        }
    }
    dx
}

/// `[B * 2 * 128, F1]` -> `[B * 128, 3 * 2 * F1]`, column block
/// `tap * 2 + row` holding the F1 channels of `a1[b, row, t + tap - 1]`.
fn im2col_conv2(a1: &Array2<f64>, b: usize, f1: usize) -> Array2<f64> {
    let mut cols = Array2::zeros((b * FRAME_LEN, KERNEL * ROWS * f1));
    let src = a1.as_slice().expect("standard layout");
    let dst = cols.as_slice_mut().unwrap();
    let width = KERNEL * ROWS * f1;
    for bi in 0..b {
        for t in 0..FRAME_LEN {
            let out = &mut dst[(bi * FRAME_LEN + t) * width..(bi * FRAME_LEN + t + 1) * width];
            for k in 0..KERNEL {
                let ts = t as isize + k as isize - 1;
                if !(0..FRAME_LEN as isize).contains(&ts) {
                    continue;
                }
                for r in 0..ROWS {
                    let row = (bi * ROWS + r) * FRAME_LEN + ts as usize;
                    let block = (k * ROWS + r) * f1;
                    out[block..block + f1].copy_from_slice(&src[row * f1..(row + 1) * f1]);
                }
            }
        }
    }
    cols
}

fn col2im_conv2(dcols: &Array2<f64>, b: usize, f1: usize) -> Array2<f64> {
    let mut da1 = Array2::zeros((b * ROWS * FRAME_LEN, f1));
    let src = dcols.as_slice().expect("standard layout");
    let dst = da1.as_slice_mut().unwrap();
    let width = KERNEL * ROWS * f1;
    for bi in 0..b {
        for t in 0..FRAME_LEN {
            let from = &src[(bi * FRAME_LEN + t) * width..(bi * FRAME_LEN + t + 1) * width];
            for k in 0..KERNEL {
                let ts = t as isize + k as isize - 1;
                if !(0..FRAME_LEN as isize).contains(&ts) {
                    continue;
                }
                for r in 0..ROWS {
                    let row = (bi * ROWS + r) * FRAME_LEN + ts as usize;
                    let block = (k * ROWS + r) * f1;
                    for (d, s) in dst[row * f1..(row + 1) * f1].iter_mut().zip(&from[block..block + f1]) {
                        *d += s;
                    }
                }
            }
        }
    }
    da1
}
