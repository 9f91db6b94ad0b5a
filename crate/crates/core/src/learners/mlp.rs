//! Small multilayer perceptron for binary classification: 2–3 hidden
//! layers, ReLU or tanh activations, sigmoid output trained on
//! cross-entropy by mini-batch backpropagation with SGD or Adam, a
//! constant or adaptive (halve-on-plateau) learning rate, and early
//! stopping on a held-out validation slice.

use super::linalg::Matrix;
use super::{
    sigmoid, to_matrix, FeatureColumn, ModelParams, ModelSpec, TrainError, TrainingDiagnostics,
};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl FromStr for Optimizer {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(format!("unknown optimizer {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    Adaptive,
}

impl FromStr for Schedule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(Schedule::Constant),
            "adaptive" => Ok(Schedule::Adaptive),
            other => Err(format!("unknown schedule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    /// [input dim, hidden..., 1]
    pub layer_dims: Vec<usize>,
    /// per layer, row-major (fan_out x fan_in)
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub(crate) struct MlpArch {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
}

impl MlpArch {
    fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn n_params(&self) -> usize {
        (0..self.n_layers())
            .map(|l| self.layer_dims[l] * self.layer_dims[l + 1] + self.layer_dims[l + 1])
            .sum()
    }

    /// Offsets of (weights, biases) per layer inside the flat vector.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut pos = 0;
        for l in 0..self.n_layers() {
            let w = self.layer_dims[l] * self.layer_dims[l + 1];
            out.push((pos, pos + w));
            pos += w + self.layer_dims[l + 1];
        }
        out
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut flat = vec![0.0; self.n_params()];
        for (l, (w_off, b_off)) in self.offsets().into_iter().enumerate() {
            let fan_in = self.layer_dims[l];
            let fan_out = self.layer_dims[l + 1];
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut flat[w_off..b_off] {
                *w = rng.gen_range(-bound..=bound);
            }
        }
        flat
    }
}

fn act(a: Activation, z: f64) -> f64 {
    match a {
        Activation::Relu => z.max(0.0),
        Activation::Tanh => z.tanh(),
    }
}

fn act_deriv(a: Activation, activated: f64) -> f64 {
    match a {
        Activation::Relu => {
            if activated > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - activated * activated,
    }
}

/// Mean cross-entropy over the indexed rows plus (lambda/2)*||W||^2, with
/// the gradient in the same flat layout.
pub(crate) fn loss_and_grad(
    arch: &MlpArch,
    flat: &[f64],
    x: &Matrix,
    y: &[u8],
    idx: &[usize],
    lambda: f64,
) -> (f64, Vec<f64>) {
    let offsets = arch.offsets();
    let layers = arch.n_layers();
    let mut grad = vec![0.0; flat.len()];
    let mut loss = 0.0;
    let batch_n = idx.len() as f64;

    // per-row activations (input included)
    let mut acts: Vec<Vec<f64>> = arch.layer_dims.iter().map(|&d| vec![0.0; d]).collect();
    let mut deltas: Vec<Vec<f64>> = arch.layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();

    for &ri in idx {
        acts[0].copy_from_slice(x.row(ri));
        let mut logit = 0.0;
        for l in 0..layers {
            let (w_off, b_off) = offsets[l];
            let fan_in = arch.layer_dims[l];
            let fan_out = arch.layer_dims[l + 1];
            for o in 0..fan_out {
                let w_row = &flat[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                let mut z = flat[b_off + o];
                for (w, a) in w_row.iter().zip(&acts[l]) {
                    z += w * a;
                }
                if l + 1 == layers {
                    logit = z; // output layer is linear; sigmoid applied in loss
                    acts[l + 1][o] = z;
                } else {
                    acts[l + 1][o] = act(arch.activation, z);
                }
            }
        }
        let yi = f64::from(y[ri]);
        loss += if logit > 0.0 {
            (1.0 - yi) * logit + (-logit).exp().ln_1p()
        } else {
            -yi * logit + logit.exp().ln_1p()
        };
        // output delta: dL/dz = sigmoid(z) - y
        deltas[layers - 1][0] = sigmoid(logit) - yi;
        for l in (0..layers - 1).rev() {
            let (w_off, _) = offsets[l + 1];
            let fan_in = arch.layer_dims[l + 1];
            let fan_out = arch.layer_dims[l + 2];
            for i in 0..fan_in {
                let mut e = 0.0;
                for o in 0..fan_out {
                    e += deltas[l + 1][o] * flat[w_off + o * fan_in + i];
                }
                deltas[l][i] = e * act_deriv(arch.activation, acts[l + 1][i]);
            }
        }
        for l in 0..layers {
            let (w_off, b_off) = offsets[l];
            let fan_in = arch.layer_dims[l];
            let fan_out = arch.layer_dims[l + 1];
            for o in 0..fan_out {
                let d = deltas[l][o];
                let g_row = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (g, a) in g_row.iter_mut().zip(&acts[l]) {
                    *g += d * a;
                }
                grad[b_off + o] += d;
            }
        }
    }
    loss /= batch_n;
    for g in grad.iter_mut() {
        *g /= batch_n;
    }
    if lambda > 0.0 {
        for (l, (w_off, b_off)) in offsets.iter().enumerate() {
            let _ = l;
            for j in *w_off..*b_off {
                loss += 0.5 * lambda * flat[j] * flat[j];
                grad[j] += lambda * flat[j];
            }
        }
    }
    (loss, grad)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

pub(crate) fn fit(
    spec: &ModelSpec,
    columns: &[FeatureColumn],
    labels: &[u8],
    seed: u64,
) -> Result<(ModelParams, Vec<String>, TrainingDiagnostics), TrainError> {
    let (x, names) = to_matrix(columns)?;
    let hidden_layers = spec.get_usize("hidden_layers", 2)?;
    if !(2..=3).contains(&hidden_layers) {
        return Err(TrainError::InvalidHyper {
            name: "hidden_layers".into(),
            detail: "expected 2 or 3".into(),
        });
    }
    let hidden_width = spec.get_usize("hidden_width", 16)?;
    if !(8..=128).contains(&hidden_width) {
        return Err(TrainError::InvalidHyper {
            name: "hidden_width".into(),
            detail: "expected 8..=128".into(),
        });
    }
    let activation: Activation = spec
        .get_str("activation", "relu")?
        .parse()
        .map_err(|detail| TrainError::InvalidHyper {
            name: "activation".into(),
            detail,
        })?;
    let optimizer: Optimizer = spec
        .get_str("optimizer", "adam")?
        .parse()
        .map_err(|detail| TrainError::InvalidHyper {
            name: "optimizer".into(),
            detail,
        })?;
    let schedule: Schedule = spec
        .get_str("schedule", "constant")?
        .parse()
        .map_err(|detail| TrainError::InvalidHyper {
            name: "schedule".into(),
            detail,
        })?;
    let default_lr = match optimizer {
        Optimizer::Adam => 0.001,
        Optimizer::Sgd => 0.05,
    };
    let mut lr = spec.get_f64("learning_rate", default_lr)?;
    let batch_size = spec.get_usize("batch_size", 32)?.max(1);
    let max_epochs = spec.get_usize("max_epochs", 200)?;
    let lambda = spec.get_f64("lambda", 0.0)?;
    let early_stopping = spec.get_bool("early_stopping", true)?;

    let n = x.n_rows;
    let mut dims = vec![x.n_cols];
    dims.extend(std::iter::repeat(hidden_width).take(hidden_layers));
    dims.push(1);
    let arch = MlpArch {
        layer_dims: dims,
        activation,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = arch.init(&mut rng);

    // validation holdout for early stopping (only when there is enough data)
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = if early_stopping && n >= 20 {
        (n / 10).max(1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut adam = AdamState {
        m: vec![0.0; flat.len()],
        v: vec![0.0; flat.len()],
        t: 0,
    };
    let mut best_val = f64::INFINITY;
    let mut best_flat = flat.clone();
    let mut val_patience = 0usize;
    let mut best_train = f64::INFINITY;
    let mut lr_patience = 0usize;
    let mut epochs_run = 0;

    for _epoch in 0..max_epochs {
        epochs_run += 1;
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0.0;
        for batch in train_idx.chunks(batch_size) {
            let (loss, grad) = loss_and_grad(&arch, &flat, &x, labels, batch, lambda);
            epoch_loss += loss;
            batches += 1.0;
            match optimizer {
                Optimizer::Sgd => {
                    for (p, g) in flat.iter_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
                Optimizer::Adam => {
                    adam.t += 1;
                    let b1 = 0.9f64;
                    let b2 = 0.999f64;
                    let bc1 = 1.0 - b1.powi(adam.t as i32);
                    let bc2 = 1.0 - b2.powi(adam.t as i32);
                    for j in 0..flat.len() {
                        adam.m[j] = b1 * adam.m[j] + (1.0 - b1) * grad[j];
                        adam.v[j] = b2 * adam.v[j] + (1.0 - b2) * grad[j] * grad[j];
                        let mh = adam.m[j] / bc1;
                        let vh = adam.v[j] / bc2;
                        flat[j] -= lr * mh / (vh.sqrt() + 1e-8);
                    }
                }
            }
        }
        epoch_loss /= batches;

        if schedule == Schedule::Adaptive {
            if epoch_loss + 1e-12 < best_train {
                best_train = epoch_loss;
                lr_patience = 0;
            } else {
                lr_patience += 1;
                if lr_patience >= 5 {
                    lr = (lr * 0.5).max(1e-6);
                    lr_patience = 0;
                }
            }
        }

        if n_val > 0 {
            let (val_loss, _) = loss_and_grad(&arch, &flat, &x, labels, &val_idx, 0.0);
            if val_loss + 1e-12 < best_val {
                best_val = val_loss;
                best_flat.copy_from_slice(&flat);
                val_patience = 0;
            } else {
                val_patience += 1;
                if val_patience >= 10 {
                    break;
                }
            }
        } else if epoch_loss < 1e-10 {
            break;
        }
    }
    if n_val > 0 {
        flat = best_flat;
    }

    // unflatten
    let offsets = arch.offsets();
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for (l, (w_off, b_off)) in offsets.iter().enumerate() {
        let w_len = arch.layer_dims[l] * arch.layer_dims[l + 1];
        weights.push(flat[*w_off..*w_off + w_len].to_vec());
        biases.push(flat[*b_off..*b_off + arch.layer_dims[l + 1]].to_vec());
    }
    Ok((
        ModelParams::Mlp(MlpParams {
            layer_dims: arch.layer_dims,
            weights,
            biases,
            activation,
        }),
        names,
        TrainingDiagnostics {
            converged: true,
            iterations: epochs_run,
            final_grad_norm: None,
        },
    ))
}

pub(crate) fn predict_proba(
    params: &MlpParams,
    columns: &[FeatureColumn],
) -> Result<Vec<f64>, TrainError> {
    let (x, _) = to_matrix(columns)?;
    if x.n_cols != params.layer_dims[0] {
        return Err(TrainError::DimensionMismatch(format!(
            "model expects {} inputs, got {}",
            params.layer_dims[0],
            x.n_cols
        )));
    }
    let layers = params.layer_dims.len() - 1;
    let mut probs = Vec::with_capacity(x.n_rows);
    let mut acts: Vec<Vec<f64>> = params.layer_dims.iter().map(|&d| vec![0.0; d]).collect();
    for i in 0..x.n_rows {
        acts[0].copy_from_slice(x.row(i));
        let mut logit = 0.0;
        for l in 0..layers {
            let fan_in = params.layer_dims[l];
            let fan_out = params.layer_dims[l + 1];
            for o in 0..fan_out {
                let mut z = params.biases[l][o];
                let w_row = &params.weights[l][o * fan_in..(o + 1) * fan_in];
                for (w, a) in w_row.iter().zip(&acts[l]) {
                    z += w * a;
                }
                if l + 1 == layers {
                    logit = z;
                } else {
                    acts[l + 1][o] = act(params.activation, z);
                }
            }
        }
        probs.push(sigmoid(logit));
    }
    Ok(probs)
}
