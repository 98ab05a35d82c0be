//! Dual GCN encoders, prediction heads, and the multi-head attention
//! combiner.
//!
//! Each layer owns two one-layer GCN encoders (common and private), each
//! followed by a linear projection into the d-dimensional embedding space:
//! `C = relu(Â X W) W'`. Heads φ and ψ are bias-free linear maps used by the
//! self-supervised and causal losses. The MHA combiner fuses a common and a
//! private token per node for downstream evaluation.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, PoolMode, Tape, Value};
use crate::error::{CademError, Result};
use crate::graph::{FeatureMatrix, LayerGraph};

/// Architecture hyperparameters; everything needed to rebuild the parameter
/// layout from a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub feature_dim: usize,
    /// GCN hidden width H.
    pub hidden_dim: usize,
    /// Embedding dimension d.
    pub embed_dim: usize,
    pub n_heads: usize,
    /// Weight init: uniform in ±1/sqrt(fan_in), drawn from this seed.
    pub seed: u64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.feature_dim == 0 || self.hidden_dim == 0 {
            return Err(CademError::Config("model dimensions must be positive".into()));
        }
        if self.n_heads == 0 || self.embed_dim % self.n_heads != 0 {
            return Err(CademError::Config(format!(
                "embed_dim {} must be divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct ModelLayout {
    gcn_common: Vec<usize>,
    proj_common: Vec<usize>,
    gcn_private: Vec<usize>,
    proj_private: Vec<usize>,
    head_phi: usize,
    head_psi: usize,
    mha_q: Vec<usize>,
    mha_k: Vec<usize>,
    mha_v: Vec<usize>,
}

/// The CaDeM model: per-layer encoder weights, heads φ/ψ, and MHA weights,
/// all stored in one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct CademModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    layout: ModelLayout,
}

/// Tape leaves for every parameter of a model, index-aligned with the store.
pub struct TapeBinding {
    pub values: Vec<Value>,
}

/// MHA projection weights bound to a tape.
pub struct MhaWeights {
    pub wq: Vec<Value>,
    pub wk: Vec<Value>,
    pub wv: Vec<Value>,
    pub head_dim: usize,
}

impl CademModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let (f, h, d, n) = (
            config.feature_dim,
            config.hidden_dim,
            config.embed_dim,
            config.n_layers,
        );
        let mut layout = ModelLayout {
            gcn_common: Vec::new(),
            proj_common: Vec::new(),
            gcn_private: Vec::new(),
            proj_private: Vec::new(),
            head_phi: 0,
            head_psi: 0,
            mha_q: Vec::new(),
            mha_k: Vec::new(),
            mha_v: Vec::new(),
        };
        let mut init = |store: &mut ParamStore,
                        name: String,
                        rows: usize,
                        cols: usize,
                        rng: &mut ChaCha8Rng| {
            store.add(name, crate::autodiff::uniform_init(rows, cols, rows, rng))
        };
        for l in 0..n {
            layout
                .gcn_common
                .push(init(&mut store, format!("layer{l}.common.gcn"), f, h, &mut rng));
            layout
                .proj_common
                .push(init(&mut store, format!("layer{l}.common.proj"), h, d, &mut rng));
            layout
                .gcn_private
                .push(init(&mut store, format!("layer{l}.private.gcn"), f, h, &mut rng));
            layout
                .proj_private
                .push(init(&mut store, format!("layer{l}.private.proj"), h, d, &mut rng));
        }
        layout.head_phi = init(&mut store, "head.phi".into(), d, n, &mut rng);
        layout.head_psi = init(&mut store, "head.psi".into(), 2 * d, n, &mut rng);
        let dh = d / config.n_heads;
        for head in 0..config.n_heads {
            layout
                .mha_q
                .push(init(&mut store, format!("mha.head{head}.q"), d, dh, &mut rng));
            layout
                .mha_k
                .push(init(&mut store, format!("mha.head{head}.k"), d, dh, &mut rng));
            layout
                .mha_v
                .push(init(&mut store, format!("mha.head{head}.v"), d, dh, &mut rng));
        }
        Ok(Self {
            config,
            store,
            layout,
        })
    }

    /// Bind every parameter to the tape as a trainable leaf.
    pub fn bind(&self, tape: &Tape) -> TapeBinding {
        let values = (0..self.store.len())
            .map(|i| tape.leaf(self.store.data(i).clone()))
            .collect();
        TapeBinding { values }
    }

    /// Copy tape gradients back into the store.
    pub fn harvest_grads(&mut self, tape: &Tape, binding: &TapeBinding) -> Result<()> {
        for (i, &v) in binding.values.iter().enumerate() {
            self.store.set_grad(i, tape.grad(v)?)?;
        }
        Ok(())
    }

    /// Parameter indices of the prediction heads (φ, ψ).
    pub fn head_param_indices(&self) -> Vec<usize> {
        vec![self.layout.head_phi, self.layout.head_psi]
    }

    /// Parameter indices of the MHA combiner, ordered q-heads, k-heads,
    /// v-heads.
    pub fn mha_param_indices(&self) -> Vec<usize> {
        let mut out = self.layout.mha_q.clone();
        out.extend_from_slice(&self.layout.mha_k);
        out.extend_from_slice(&self.layout.mha_v);
        out
    }

    /// All encoder and projection parameter indices.
    pub fn encoder_param_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.layout.gcn_common);
        out.extend_from_slice(&self.layout.proj_common);
        out.extend_from_slice(&self.layout.gcn_private);
        out.extend_from_slice(&self.layout.proj_private);
        out
    }

    pub fn head_phi(&self, binding: &TapeBinding) -> Value {
        binding.values[self.layout.head_phi]
    }

    pub fn head_psi(&self, binding: &TapeBinding) -> Value {
        binding.values[self.layout.head_psi]
    }

    pub fn mha_weights(&self, binding: &TapeBinding) -> MhaWeights {
        MhaWeights {
            wq: self.layout.mha_q.iter().map(|&i| binding.values[i]).collect(),
            wk: self.layout.mha_k.iter().map(|&i| binding.values[i]).collect(),
            wv: self.layout.mha_v.iter().map(|&i| binding.values[i]).collect(),
            head_dim: self.config.embed_dim / self.config.n_heads,
        }
    }

    /// Forward one layer: common and private node embeddings (each M×d).
    /// In training mode a fresh feature-dropout mask is drawn from `rng` and
    /// shared by both encoder branches.
    pub fn encode_layer<R: Rng>(
        &self,
        tape: &Tape,
        binding: &TapeBinding,
        layer_idx: usize,
        graph: &LayerGraph,
        train_mode: bool,
        dropout: f64,
        rng: &mut R,
    ) -> Result<(Value, Value)> {
        if layer_idx >= self.config.n_layers {
            return Err(CademError::InvalidArgument(format!(
                "layer index {layer_idx} for a {}-layer model",
                self.config.n_layers
            )));
        }
        if graph.features().ncols() != self.config.feature_dim {
            return Err(CademError::Shape(format!(
                "layer features have dim {}, model expects {}",
                graph.features().ncols(),
                self.config.feature_dim
            )));
        }
        let adj = graph.normalized_adj();
        let apply_dropout = train_mode && dropout > 0.0;

        // Feature transform X·W. One-hot features reduce to a row gather of
        // the weight matrix; feature dropout then masks whole rows because a
        // one-hot row has a single nonzero entry.
        let transform = |w: Value, drop_rng: &mut R, t: &Tape| -> Result<Value> {
            match graph.features() {
                FeatureMatrix::Dense(x) => {
                    let mut xv = t.constant(x.clone());
                    if apply_dropout {
                        xv = t.dropout(xv, dropout, drop_rng)?;
                    }
                    t.matmul(xv, w)
                }
                FeatureMatrix::OneHot { ids, .. } => {
                    let gathered = t.select_rows(w, ids)?;
                    if apply_dropout {
                        let keep = 1.0 - dropout;
                        let mask = Array2::from_shape_fn((ids.len(), 1), |_| {
                            if drop_rng.random::<f64>() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        });
                        let mask = t.constant(mask);
                        t.mul_colvec(gathered, mask)
                    } else {
                        Ok(gathered)
                    }
                }
            }
        };

        let branch = |gcn_idx: usize, proj_idx: usize, r: &mut R| -> Result<Value> {
            let xw = transform(binding.values[gcn_idx], r, tape)?;
            let hidden = tape.relu(tape.sparse_dense_matmul(adj, xw)?)?;
            tape.matmul(hidden, binding.values[proj_idx])
        };

        let common = branch(
            self.layout.gcn_common[layer_idx],
            self.layout.proj_common[layer_idx],
            rng,
        )?;
        let private = branch(
            self.layout.gcn_private[layer_idx],
            self.layout.proj_private[layer_idx],
            rng,
        )?;
        Ok((common, private))
    }
}

/// Pool node embeddings (M×d) into a graph embedding (1×d).
pub fn pool_graph(tape: &Tape, embeddings: Value, mode: PoolMode) -> Result<Value> {
    tape.pool_rows(embeddings, mode)
}

/// Scaled dot-product attention over the two token slots (common, private)
/// per node; per-head outputs are concatenated and the two token outputs are
/// averaged into one d-vector per node.
pub fn mha_combine(
    tape: &Tape,
    token_common: Value,
    token_private: Value,
    weights: &MhaWeights,
) -> Result<Value> {
    let (m, d) = tape.shape(token_common)?;
    if tape.shape(token_private)? != (m, d) {
        return Err(CademError::Shape(format!(
            "token shapes {:?} vs {:?}",
            (m, d),
            tape.shape(token_private)?
        )));
    }
    if weights.wq.is_empty() || weights.head_dim == 0 {
        return Err(CademError::Config("MHA needs at least one head".into()));
    }
    let scale = 1.0 / (weights.head_dim as f64).sqrt();

    let ones = tape.constant(Array2::ones((m, 1)));
    let mut token_outputs: [Option<Value>; 2] = [None, None];
    for h in 0..weights.wq.len() {
        let q = [
            tape.matmul(token_common, weights.wq[h])?,
            tape.matmul(token_private, weights.wq[h])?,
        ];
        let k = [
            tape.matmul(token_common, weights.wk[h])?,
            tape.matmul(token_private, weights.wk[h])?,
        ];
        let v = [
            tape.matmul(token_common, weights.wv[h])?,
            tape.matmul(token_private, weights.wv[h])?,
        ];
        for (i, out_slot) in token_outputs.iter_mut().enumerate() {
            // Per-node logits against both keys; softmax over two slots is a
            // sigmoid of the logit difference.
            let l0 = tape.scale(tape.sum_cols(tape.mul(q[i], k[0])?)?, scale)?;
            let l1 = tape.scale(tape.sum_cols(tape.mul(q[i], k[1])?)?, scale)?;
            let a0 = tape.sigmoid(tape.sub(l0, l1)?)?;
            let a1 = tape.sub(ones, a0)?;
            let head_out = tape.add(tape.mul_colvec(v[0], a0)?, tape.mul_colvec(v[1], a1)?)?;
            *out_slot = Some(match out_slot.take() {
                None => head_out,
                Some(prev) => tape.concat_cols(prev, head_out)?,
            });
        }
    }
    let combined = tape.add(token_outputs[0].unwrap(), token_outputs[1].unwrap())?;
    tape.scale(combined, 0.5)
}

// ---------------------------------------------------------------------------
// Checkpoint format: little-endian u64 header length, JSON header, then a
// flat little-endian f64 parameter blob.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    params: Vec<(String, usize, usize)>,
}

pub fn save_checkpoint(model: &CademModel, path: &Path) -> Result<()> {
    let header = CheckpointHeader {
        config: model.config.clone(),
        params: (0..model.store.len())
            .map(|i| {
                let (r, c) = model.store.data(i).dim();
                (model.store.name(i).to_string(), r, c)
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut file = std::fs::File::create(path)?;
    file.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    for x in model.store.flatten() {
        file.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CademModel> {
    let mut file = std::fs::File::open(path)?;
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;

    let mut model = CademModel::new(header.config)?;
    if header.params.len() != model.store.len() {
        return Err(CademError::Format(format!(
            "checkpoint has {} parameters, model defines {}",
            header.params.len(),
            model.store.len()
        )));
    }
    let mut total = 0usize;
    for (i, (name, r, c)) in header.params.iter().enumerate() {
        if model.store.name(i) != name || model.store.data(i).dim() != (*r, *c) {
            return Err(CademError::Format(format!(
                "checkpoint parameter {i} is {name} {r}x{c}, model expects {} {:?}",
                model.store.name(i),
                model.store.data(i).dim()
            )));
        }
        total += r * c;
    }
    let mut blob = vec![0u8; total * 8];
    file.read_exact(&mut blob)?;
    let flat: Vec<f64> = blob
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    model.store.unflatten(&flat)?;
    Ok(model)
}
