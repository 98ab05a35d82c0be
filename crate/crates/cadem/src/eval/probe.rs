//! Linear probes: a single softmax layer trained with full-batch gradient
//! descent, and a variant that trains the MHA combiner jointly with the
//! classifier for combined-embedding evaluation.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Value};
use crate::encoders::{mha_combine, MhaWeights};
use crate::error::{CademError, Result};
use crate::eval::metrics::f1_scores;

/// Probe training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            epochs: 400,
            lr: 0.1,
        }
    }
}

/// Test-set outcome of a probe.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub predictions: Vec<usize>,
    /// Mean Shannon entropy (nats) of the predicted class distributions.
    pub mean_entropy: f64,
}

fn one_hot(labels: &[usize], n_classes: usize) -> Array2<f64> {
    let mut y = Array2::zeros((labels.len(), n_classes));
    for (i, &l) in labels.iter().enumerate() {
        y[[i, l]] = 1.0;
    }
    y
}

fn with_bias_column(x: &Array2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::ones((n, d + 1));
    out.slice_mut(ndarray::s![.., ..d]).assign(x);
    out
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    p
}

fn outcome_from_proba(proba: &Array2<f64>, test_y: &[usize], n_classes: usize) -> Result<ProbeOutcome> {
    let predictions: Vec<usize> = proba
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .unwrap()
        })
        .collect();
    let (macro_f1, micro_f1) = f1_scores(test_y, &predictions, n_classes)?;
    let mean_entropy = proba
        .rows()
        .into_iter()
        .map(|row| -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>())
        .sum::<f64>()
        / proba.nrows() as f64;
    Ok(ProbeOutcome {
        macro_f1,
        micro_f1,
        predictions,
        mean_entropy,
    })
}

fn check_probe_inputs(
    train_x: &Array2<f64>,
    train_y: &[usize],
    test_x: &Array2<f64>,
    test_y: &[usize],
    n_classes: usize,
) -> Result<()> {
    if train_x.nrows() != train_y.len() || test_x.nrows() != test_y.len() {
        return Err(CademError::Shape("probe rows vs labels".into()));
    }
    if train_x.ncols() != test_x.ncols() {
        return Err(CademError::Shape("probe train/test feature dims".into()));
    }
    if train_y.is_empty() {
        return Err(CademError::InvalidArgument("empty probe training set".into()));
    }
    if n_classes < 2 {
        return Err(CademError::InvalidArgument("probe needs >= 2 classes".into()));
    }
    if let Some(&bad) = train_y.iter().chain(test_y).find(|&&y| y >= n_classes) {
        return Err(CademError::InvalidArgument(format!(
            "label {bad} outside [0, {n_classes})"
        )));
    }
    Ok(())
}

/// Single linear layer (with bias) + softmax, trained by full-batch gradient
/// descent on the training split; scored on the test split.
pub fn linear_probe(
    train_x: &Array2<f64>,
    train_y: &[usize],
    test_x: &Array2<f64>,
    test_y: &[usize],
    n_classes: usize,
    settings: ProbeSettings,
    seed: u64,
) -> Result<ProbeOutcome> {
    check_probe_inputs(train_x, train_y, test_x, test_y, n_classes)?;
    let xb = with_bias_column(train_x);
    let y = one_hot(train_y, n_classes);
    let n = xb.nrows() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = crate::autodiff::uniform_init(xb.ncols(), n_classes, xb.ncols(), &mut rng);
    for _ in 0..settings.epochs {
        let p = softmax_rows(&xb.dot(&w));
        let grad = xb.t().dot(&(&p - &y)) / n;
        w -= &(grad * settings.lr);
    }
    let proba = softmax_rows(&with_bias_column(test_x).dot(&w));
    outcome_from_proba(&proba, test_y, n_classes)
}

/// Node-level token matrices for combined-embedding probing.
pub struct MhaProbeInputs<'a> {
    /// Common token per sample (consensus row), n×d.
    pub token_common: &'a Array2<f64>,
    /// Private token per sample (mean of per-layer private rows), n×d.
    pub token_private: &'a Array2<f64>,
    /// MHA weights in [`crate::encoders::CademModel::mha_param_indices`]
    /// order (q heads, k heads, v heads).
    pub mha_init: Vec<Array2<f64>>,
    pub n_heads: usize,
}

/// Train the MHA combiner jointly with a linear classifier on the training
/// indices, then score the test indices. Gradient descent with the same
/// settings as the plain probe.
pub fn mha_joint_probe(
    inputs: &MhaProbeInputs,
    labels: &[usize],
    train_idx: &[usize],
    test_idx: &[usize],
    n_classes: usize,
    settings: ProbeSettings,
    seed: u64,
) -> Result<ProbeOutcome> {
    let (n, d) = inputs.token_common.dim();
    if inputs.token_private.dim() != (n, d) {
        return Err(CademError::Shape("token matrices must share a shape".into()));
    }
    if inputs.mha_init.len() != 3 * inputs.n_heads || inputs.n_heads == 0 {
        return Err(CademError::Config(format!(
            "expected {} MHA matrices, got {}",
            3 * inputs.n_heads,
            inputs.mha_init.len()
        )));
    }
    if labels.len() != n {
        return Err(CademError::Shape("labels vs token rows".into()));
    }
    let head_dim = d / inputs.n_heads;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mha_params = inputs.mha_init.clone();
    let mut w = crate::autodiff::uniform_init(d + 1, n_classes, d + 1, &mut rng);

    let y_train = one_hot(
        &train_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        n_classes,
    );

    let forward = |mha: &[Array2<f64>],
                   w: &Array2<f64>,
                   idx: &[usize],
                   want_grads: Option<&Array2<f64>>|
     -> Result<(Array2<f64>, Vec<Array2<f64>>, Array2<f64>)> {
        let tape = Tape::new();
        let tc = tape.constant(inputs.token_common.clone());
        let tp = tape.constant(inputs.token_private.clone());
        let mha_values: Vec<Value> = mha.iter().map(|m| tape.leaf(m.clone())).collect();
        let weights = MhaWeights {
            wq: mha_values[..inputs.n_heads].to_vec(),
            wk: mha_values[inputs.n_heads..2 * inputs.n_heads].to_vec(),
            wv: mha_values[2 * inputs.n_heads..].to_vec(),
            head_dim,
        };
        let combined = mha_combine(&tape, tc, tp, &weights)?;
        let selected = tape.select_rows(combined, idx)?;
        let ones = tape.constant(Array2::ones((idx.len(), 1)));
        let with_bias = tape.concat_cols(selected, ones)?;
        let wv = tape.leaf(w.clone());
        let logits = tape.matmul(with_bias, wv)?;
        match want_grads {
            None => Ok((tape.data(logits)?, Vec::new(), Array2::zeros((0, 0)))),
            Some(targets) => {
                let loss = tape.softmax_cross_entropy(logits, targets)?;
                tape.backward(loss)?;
                let mha_grads = mha_values
                    .iter()
                    .map(|&v| tape.grad(v))
                    .collect::<Result<Vec<_>>>()?;
                Ok((tape.data(logits)?, mha_grads, tape.grad(wv)?))
            }
        }
    };

    for _ in 0..settings.epochs {
        let (_, mha_grads, w_grad) = forward(&mha_params, &w, train_idx, Some(&y_train))?;
        for (p, g) in mha_params.iter_mut().zip(&mha_grads) {
            *p -= &(g * settings.lr);
        }
        w -= &(w_grad * settings.lr);
    }

    let (test_logits, _, _) = forward(&mha_params, &w, test_idx, None)?;
    let proba = softmax_rows(&test_logits);
    let test_y: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();
    outcome_from_proba(&proba, &test_y, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;

    fn blobs(n_per: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = StdRng::seed_from_u64(seed);
        let n = 2 * n_per;
        let mut x = Array2::zeros((n, 3));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = usize::from(i >= n_per);
            for j in 0..3 {
                x[[i, j]] = rng.random_range(-0.5..0.5) + sep * class as f64;
            }
            y.push(class);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_reach_high_f1() {
        let (x, y) = blobs(30, 4.0, 1);
        let out = linear_probe(
            &x,
            &y,
            &x,
            &y,
            2,
            ProbeSettings {
                epochs: 200,
                lr: 0.3,
            },
            7,
        )
        .unwrap();
        assert!(out.macro_f1 >= 0.99, "macro {}", out.macro_f1);
    }

    #[test]
    fn shuffled_labels_stay_near_chance() {
        // Permutation null: mean macro-F1 over 10 seeds within 1/k ± 0.1.
        let mut rng = StdRng::seed_from_u64(3);
        let n = 90;
        let x = Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0f64..1.0));
        let mut scores = Vec::new();
        for seed in 0..10 {
            let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let out = linear_probe(
                &x,
                &y,
                &x,
                &{
                    let mut y2: Vec<usize> = y.clone();
                    // score against freshly shuffled labels
                    use rand::seq::SliceRandom;
                    y2.shuffle(&mut rng);
                    y2
                },
                3,
                ProbeSettings {
                    epochs: 100,
                    lr: 0.1,
                },
                seed,
            )
            .unwrap();
            scores.push(out.macro_f1);
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        assert!((mean - 1.0 / 3.0).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn zero_epochs_uses_init_weights() {
        let (x, y) = blobs(20, 4.0, 2);
        let out = linear_probe(
            &x,
            &y,
            &x,
            &y,
            2,
            ProbeSettings { epochs: 0, lr: 0.1 },
            5,
        )
        .unwrap();
        assert_eq!(out.predictions.len(), 40);
        assert!(out.mean_entropy > 0.0);
    }

    #[test]
    fn probe_rejects_bad_labels() {
        let (x, mut y) = blobs(5, 1.0, 3);
        y[0] = 9;
        assert!(linear_probe(&x, &y, &x, &y, 2, ProbeSettings::default(), 0).is_err());
    }

    #[test]
    fn mha_joint_probe_learns_separable_tokens() {
        // Class signal lives in the private token only; the combiner plus
        // classifier must pick it up.
        let mut rng = StdRng::seed_from_u64(4);
        let n = 60;
        let d = 4;
        let common = Array2::from_shape_fn((n, d), |_| rng.random_range(-0.5f64..0.5));
        let mut private = Array2::from_shape_fn((n, d), |_| rng.random_range(-0.5f64..0.5));
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i % 2 == 0)).collect();
        for i in 0..n {
            if labels[i] == 1 {
                private[[i, 0]] += 3.0;
            }
        }
        let n_heads = 2;
        let mut mha_init = Vec::new();
        for _ in 0..3 * n_heads {
            mha_init.push(Array2::from_shape_fn((d, d / n_heads), |_| {
                rng.random_range(-0.5f64..0.5)
            }));
        }
        let inputs = MhaProbeInputs {
            token_common: &common,
            token_private: &private,
            mha_init,
            n_heads,
        };
        let train: Vec<usize> = (0..40).collect();
        let test: Vec<usize> = (40..60).collect();
        let out = mha_joint_probe(
            &inputs,
            &labels,
            &train,
            &test,
            2,
            ProbeSettings {
                epochs: 150,
                lr: 0.2,
            },
            9,
        )
        .unwrap();
        assert!(out.macro_f1 >= 0.95, "macro {}", out.macro_f1);
    }
}
