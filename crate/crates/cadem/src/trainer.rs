//! End-to-end training loop and embedding export.
//!
//! Each epoch rebuilds the tape: full-graph encodings feed the matching
//! loss, an augmented batch feeds the self-supervised and causal losses, and
//! Adam updates two parameter groups (heads φ/ψ with weight decay, all
//! encoder weights without). The MHA combiner is left untouched here; it is
//! trained with the downstream probe during evaluation.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_layers, AugmentOptions};
use crate::autodiff::{Adam, ParamGroup, PoolMode, Tape, Value};
use crate::encoders::{mha_combine, CademModel, ModelConfig};
use crate::error::{CademError, Result};
use crate::graph::{format_f64, read_matrix_csv, write_matrix_csv, MultiplexGraph};
use crate::losses::{
    causal_loss, matching_loss, self_supervised_loss, total_loss, LossWeights, Pairing,
};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Learning rate for the prediction heads φ and ψ.
    pub lr_heads: f64,
    /// Learning rate for all other trainable weights.
    pub lr_rest: f64,
    pub weight_decay_heads: f64,
    pub weight_decay_rest: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub loss_weights: LossWeights,
    /// Node sampling ratio r of graph augmentation.
    pub sample_ratio: f64,
    /// Gaussian noise σ injected into augmented node embeddings.
    pub noise_std: f64,
    pub n_aug_per_layer: usize,
    pub pooling: PoolMode,
    pub pairing: Pairing,
    /// Redraw augmentation node subsets every epoch.
    pub resample_each_epoch: bool,
    /// Disable graph augmentation entirely: the batch is the N original
    /// layers without sampling or noise.
    pub use_augmentation: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr_heads: 1e-2,
            lr_rest: 1e-4,
            weight_decay_heads: 1e-4,
            weight_decay_rest: 0.0,
            embed_dim: 8,
            hidden_dim: 64,
            n_heads: 4,
            dropout: 0.1,
            loss_weights: LossWeights::default(),
            sample_ratio: 0.6,
            noise_std: 0.1,
            n_aug_per_layer: 20,
            pooling: PoolMode::Add,
            pairing: Pairing::Full,
            resample_each_epoch: true,
            use_augmentation: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CademError::Config("epochs must be >= 1".into()));
        }
        if self.lr_heads <= 0.0 || self.lr_rest <= 0.0 {
            return Err(CademError::Config("learning rates must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CademError::Config("dropout outside [0, 1)".into()));
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return Err(CademError::Config("sample_ratio outside (0, 1]".into()));
        }
        if self.noise_std < 0.0 {
            return Err(CademError::Config("negative noise_std".into()));
        }
        if self.n_aug_per_layer == 0 {
            return Err(CademError::Config("n_aug_per_layer must be >= 1".into()));
        }
        self.loss_weights.validate()
    }

    fn augment_options(&self, train_mode: bool) -> AugmentOptions {
        if self.use_augmentation {
            AugmentOptions {
                sample_ratio: self.sample_ratio,
                noise_std: self.noise_std,
                n_aug_per_layer: self.n_aug_per_layer,
                pooling: self.pooling,
                train_mode,
                dropout: self.dropout,
            }
        } else {
            // Ablation: the N original full layers, no sampling, no noise.
            AugmentOptions {
                sample_ratio: 1.0,
                noise_std: 0.0,
                n_aug_per_layer: 1,
                pooling: self.pooling,
                train_mode,
                dropout: self.dropout,
            }
        }
    }
}

/// Per-epoch loss record; serialized as one JSON line per epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub matching: f64,
    pub self_supervised: f64,
    pub causal: f64,
    pub total: f64,
    pub consensus_residual: f64,
}

/// Train a fresh model on the multiplex graph.
pub fn train(graph: &MultiplexGraph, cfg: &TrainConfig) -> Result<(CademModel, Vec<EpochLog>)> {
    cfg.validate()?;
    let feature_dim = graph.layers[0].features().ncols();
    if graph.layers.iter().any(|l| l.features().ncols() != feature_dim) {
        return Err(CademError::Shape(
            "all layers must share the feature dimension".into(),
        ));
    }
    let mut model = CademModel::new(ModelConfig {
        n_layers: graph.n_layers(),
        feature_dim,
        hidden_dim: cfg.hidden_dim,
        embed_dim: cfg.embed_dim,
        n_heads: cfg.n_heads,
        seed: cfg.seed,
    })?;

    let head_group = ParamGroup {
        indices: model.head_param_indices(),
        lr: cfg.lr_heads,
        weight_decay: cfg.weight_decay_heads,
    };
    let rest_group = ParamGroup {
        indices: model.encoder_param_indices(),
        lr: cfg.lr_rest,
        weight_decay: cfg.weight_decay_rest,
    };
    let groups = [head_group, rest_group];
    let mut adam = Adam::with_defaults();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let pristine_subset_rng = {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(2);
        r
    };
    let mut subset_rng = pristine_subset_rng.clone();

    let need_batch =
        cfg.loss_weights.self_supervised > 0.0 || cfg.loss_weights.causal > 0.0;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let tape = Tape::new();
        let binding = model.bind(&tape);

        let mut c_values = Vec::with_capacity(graph.n_layers());
        for layer_idx in 0..graph.n_layers() {
            let (c, _p) = model.encode_layer(
                &tape,
                &binding,
                layer_idx,
                &graph.layers[layer_idx],
                true,
                cfg.dropout,
                &mut rng,
            )?;
            c_values.push(c);
        }
        let (m_loss, consensus) = matching_loss(&tape, &c_values)?;

        let (s_loss, c_loss) = if need_batch {
            // With resampling disabled the subset stream is rewound every
            // epoch; dropout and noise keep advancing on the main stream.
            if !cfg.resample_each_epoch {
                subset_rng = pristine_subset_rng.clone();
            }
            let batch = augment_layers(
                &tape,
                &model,
                &binding,
                graph,
                &cfg.augment_options(true),
                &mut subset_rng,
                &mut rng,
            )?;
            let s = if cfg.loss_weights.self_supervised > 0.0 {
                Some(self_supervised_loss(&tape, &batch, model.head_phi(&binding))?)
            } else {
                None
            };
            let c = if cfg.loss_weights.causal > 0.0 {
                Some(causal_loss(
                    &tape,
                    &batch,
                    model.head_psi(&binding),
                    cfg.pairing,
                    &mut rng,
                )?)
            } else {
                None
            };
            (s, c)
        } else {
            (None, None)
        };

        let total = total_loss(&tape, m_loss, s_loss, c_loss, &cfg.loss_weights)?;

        let entry = EpochLog {
            epoch,
            matching: tape.scalar(m_loss)?,
            self_supervised: s_loss.map(|v| tape.scalar(v)).transpose()?.unwrap_or(0.0),
            causal: c_loss.map(|v| tape.scalar(v)).transpose()?.unwrap_or(0.0),
            total: tape.scalar(total)?,
            consensus_residual: consensus.residual,
        };
        for (name, value) in [
            ("matching", entry.matching),
            ("self_supervised", entry.self_supervised),
            ("causal", entry.causal),
            ("total", entry.total),
        ] {
            if !value.is_finite() {
                return Err(CademError::NonFinite(format!(
                    "{name} loss at epoch {epoch}"
                )));
            }
        }

        tape.backward(total)?;
        model.harvest_grads(&tape, &binding)?;
        adam.step(&mut model.store, &groups)?;
        log.push(entry);
    }
    Ok((model, log))
}

/// All embeddings derived from a trained model in evaluation mode (no
/// dropout, no augmentation noise).
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    /// Per-layer common embeddings C_ℓ, M×d.
    pub common: Vec<Array2<f64>>,
    /// Per-layer private embeddings P_ℓ, M×d.
    pub private: Vec<Array2<f64>>,
    /// Procrustes consensus S, M×d.
    pub consensus: Array2<f64>,
    /// MHA-combined node embedding, M×d (combiner at its stored weights).
    pub combined: Array2<f64>,
    /// Pooled graph-level embeddings, 1×d per layer.
    pub pooled_common: Vec<Array2<f64>>,
    pub pooled_private: Vec<Array2<f64>>,
}

impl EmbeddingSet {
    /// Mean of the per-layer private embeddings, M×d: the private token of
    /// the combiner.
    pub fn mean_private(&self) -> Array2<f64> {
        let mut acc = Array2::zeros(self.private[0].raw_dim());
        for p in &self.private {
            acc += p;
        }
        acc / self.private.len() as f64
    }
}

/// Forward the whole graph in evaluation mode and assemble every embedding
/// kind.
pub fn compute_embeddings(
    model: &CademModel,
    graph: &MultiplexGraph,
    pooling: PoolMode,
) -> Result<EmbeddingSet> {
    let tape = Tape::new();
    let binding = model.bind(&tape);
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed);
    let mut common = Vec::new();
    let mut private = Vec::new();
    let mut pooled_common = Vec::new();
    let mut pooled_private = Vec::new();
    let mut c_values: Vec<Value> = Vec::new();
    for layer_idx in 0..graph.n_layers() {
        let (c, p) = model.encode_layer(
            &tape,
            &binding,
            layer_idx,
            &graph.layers[layer_idx],
            false,
            0.0,
            &mut rng,
        )?;
        common.push(tape.data(c)?);
        private.push(tape.data(p)?);
        pooled_common.push(tape.data(tape.pool_rows(c, pooling)?)?);
        pooled_private.push(tape.data(tape.pool_rows(p, pooling)?)?);
        c_values.push(c);
    }
    let consensus = crate::losses::procrustes_consensus(&common)?;

    let mean_private = {
        let mut acc = Array2::zeros(private[0].raw_dim());
        for p in &private {
            acc += p;
        }
        acc / private.len() as f64
    };
    let token_c = tape.constant(consensus.s.clone());
    let token_p = tape.constant(mean_private);
    let combined = mha_combine(&tape, token_c, token_p, &model.mha_weights(&binding))?;

    Ok(EmbeddingSet {
        common,
        private,
        consensus: consensus.s,
        combined: tape.data(combined)?,
        pooled_common,
        pooled_private,
    })
}

/// Manifest written next to the exported embedding CSVs.
#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingManifest {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub embed_dim: usize,
    pub pooling: PoolMode,
    pub files: std::collections::BTreeMap<String, String>,
    pub model_config: ModelConfig,
}

/// Write every embedding matrix as a headerless CSV plus a manifest JSON.
pub fn export_embeddings(
    model: &CademModel,
    graph: &MultiplexGraph,
    pooling: PoolMode,
    out_dir: &Path,
) -> Result<EmbeddingSet> {
    let set = compute_embeddings(model, graph, pooling)?;
    std::fs::create_dir_all(out_dir)?;
    let mut files = std::collections::BTreeMap::new();
    let mut write = |name: String, m: &Array2<f64>| -> Result<()> {
        let file = format!("{name}.csv");
        write_matrix_csv(&out_dir.join(&file), m)?;
        files.insert(name, file);
        Ok(())
    };
    for (l, m) in set.common.iter().enumerate() {
        write(format!("common_layer{l}"), m)?;
    }
    for (l, m) in set.private.iter().enumerate() {
        write(format!("private_layer{l}"), m)?;
    }
    write("consensus".into(), &set.consensus)?;
    write("combined".into(), &set.combined)?;
    for (l, m) in set.pooled_common.iter().enumerate() {
        write(format!("pooled_common_layer{l}"), m)?;
    }
    for (l, m) in set.pooled_private.iter().enumerate() {
        write(format!("pooled_private_layer{l}"), m)?;
    }
    let manifest = EmbeddingManifest {
        n_nodes: graph.n_nodes,
        n_layers: graph.n_layers(),
        embed_dim: model.config.embed_dim,
        pooling,
        files,
        model_config: model.config.clone(),
    };
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(set)
}

/// Load one exported embedding matrix by its manifest name.
pub fn load_embedding(dir: &Path, name: &str) -> Result<Array2<f64>> {
    let manifest: EmbeddingManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let file = manifest.files.get(name).ok_or_else(|| {
        CademError::InvalidArgument(format!("no embedding named '{name}' in manifest"))
    })?;
    read_matrix_csv(&dir.join(file))
}

/// Serialize the per-epoch log as JSON lines.
pub fn write_train_log(log: &[EpochLog], path: &Path) -> Result<()> {
    let mut out = String::new();
    for entry in log {
        out.push_str(&serde_json::to_string(entry)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Export a single matrix to CSV (17 significant digits).
pub fn export_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let _ = format_f64(0.0); // formatting contract lives in graph::format_f64
    write_matrix_csv(path, m)
}
