//! Graph augmentation for confounder stratification.
//!
//! Each layer is expanded into several induced subgraphs on a sampled node
//! subset; node-level embeddings get Gaussian noise before pooling. The
//! resulting batch of (pooled common, pooled private, one-hot layer target)
//! triples feeds the self-supervised and causal losses.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{PoolMode, Tape, Value};
use crate::encoders::{CademModel, TapeBinding};
use crate::error::{CademError, Result};
use crate::graph::{induced_subgraph, MultiplexGraph};

/// Augmentation settings for one batch.
#[derive(Debug, Clone, Copy)]
pub struct AugmentOptions {
    /// Node sampling ratio r in (0, 1].
    pub sample_ratio: f64,
    /// Standard deviation of the embedding noise.
    pub noise_std: f64,
    /// Augmented graphs per layer; the batch has N' = N * n_aug_per_layer.
    pub n_aug_per_layer: usize,
    pub pooling: PoolMode,
    /// Apply feature dropout during encoding.
    pub train_mode: bool,
    pub dropout: f64,
}

/// A batch of augmented single-layer graphs with pooled embeddings, built on
/// a specific tape.
pub struct AugmentedBatch {
    /// Source layer index per augmented graph.
    pub source_layers: Vec<usize>,
    /// One-hot layer targets, N'×N.
    pub targets: Array2<f64>,
    /// Pooled common embedding per graph, 1×d.
    pub h_common: Vec<Value>,
    /// Pooled private embedding per graph, 1×d.
    pub h_private: Vec<Value>,
    /// Sampled node indices per graph (ascending).
    pub node_maps: Vec<Vec<usize>>,
}

impl AugmentedBatch {
    pub fn len(&self) -> usize {
        self.source_layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_layers.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.targets.ncols()
    }
}

/// Build the augmented batch: for each layer, `n_aug_per_layer` induced
/// subgraphs on round(r·M) nodes, encoded with that layer's encoders, noised
/// at node level, then pooled.
///
/// Node subsets come from `subset_rng`; dropout masks and embedding noise
/// come from `rng`, so subsets can be held fixed across epochs while noise
/// stays fresh.
pub fn augment_layers<R1: Rng, R2: Rng>(
    tape: &Tape,
    model: &CademModel,
    binding: &TapeBinding,
    graph: &MultiplexGraph,
    opts: &AugmentOptions,
    subset_rng: &mut R1,
    rng: &mut R2,
) -> Result<AugmentedBatch> {
    if !(opts.sample_ratio > 0.0 && opts.sample_ratio <= 1.0) {
        return Err(CademError::Config(format!(
            "sample ratio r={} outside (0, 1]",
            opts.sample_ratio
        )));
    }
    if opts.noise_std < 0.0 {
        return Err(CademError::Config("negative noise std".into()));
    }
    if opts.n_aug_per_layer == 0 {
        return Err(CademError::Config("n_aug_per_layer must be >= 1".into()));
    }
    let m = graph.n_nodes;
    let n_sample = (opts.sample_ratio * m as f64).round() as usize;
    if n_sample == 0 {
        return Err(CademError::Config(format!(
            "round(r*M) = 0 for r={} and M={m}",
            opts.sample_ratio
        )));
    }
    let n_layers = graph.n_layers();
    let n_total = n_layers * opts.n_aug_per_layer;

    // Draw every node subset up front from the dedicated stream.
    let mut all_maps = Vec::with_capacity(n_total);
    for _ in 0..n_total {
        let mut nodes: Vec<usize> =
            rand::seq::index::sample(subset_rng, m, n_sample).into_vec();
        nodes.sort_unstable();
        all_maps.push(nodes);
    }

    let mut source_layers = Vec::with_capacity(n_total);
    let mut targets = Array2::zeros((n_total, n_layers));
    let mut h_common = Vec::with_capacity(n_total);
    let mut h_private = Vec::with_capacity(n_total);
    let mut node_maps = Vec::with_capacity(n_total);

    let noise = if opts.noise_std > 0.0 {
        Some(Normal::new(0.0, opts.noise_std).expect("validated std"))
    } else {
        None
    };

    let mut row = 0;
    let mut maps_iter = all_maps.into_iter();
    for layer_idx in 0..n_layers {
        for _ in 0..opts.n_aug_per_layer {
            let nodes = maps_iter.next().expect("one map per batch row");
            let sub = induced_subgraph(&graph.layers[layer_idx], &nodes)?;
            let (mut c, mut p) = model.encode_layer(
                tape,
                binding,
                layer_idx,
                &sub,
                opts.train_mode,
                opts.dropout,
                rng,
            )?;
            if let Some(dist) = &noise {
                let d = model.config.embed_dim;
                let mut draw = |r: &mut R2| {
                    Array2::from_shape_fn((n_sample, d), |_| dist.sample(r))
                };
                let nc = tape.constant(draw(rng));
                let np = tape.constant(draw(rng));
                c = tape.add(c, nc)?;
                p = tape.add(p, np)?;
            }
            h_common.push(tape.pool_rows(c, opts.pooling)?);
            h_private.push(tape.pool_rows(p, opts.pooling)?);
            targets[[row, layer_idx]] = 1.0;
            source_layers.push(layer_idx);
            node_maps.push(nodes);
            row += 1;
        }
    }

    Ok(AugmentedBatch {
        source_layers,
        targets,
        h_common,
        h_private,
        node_maps,
    })
}
