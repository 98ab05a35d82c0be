//! Synthetic multiplex dataset generators.
//!
//! Syn1: per-layer SBM structure with shared identity features and mixed
//! final labels. Syn2: shared global SBM blended with layer-private label
//! perturbations via a convex combination of edge probabilities. Syn3: shared
//! KNN spiral topology with low-pass common and band-pass layer-specific
//! graph signals. Syn4 (see [`dynamics`]): shared ER topologies driven by
//! different nonlinear dynamical systems per layer.

mod dynamics;

pub use dynamics::{
    gen_syn4, integrate_dynamics, DynamicsKind, DynamicsParams, Syn4Dataset, Syn4Spec,
    DYNAMICS_CLASSES,
};

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CademError, Result};
use crate::graph::{
    bfs_hop_distances, is_connected, knn_graph, laplacian, spectral_radius, FeatureMatrix,
    LayerGraph, MultiplexGraph, UNREACHABLE,
};
use crate::linalg::{jacobi_eigen, SymEig};

/// Specification of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SynSpec {
    Syn1(Syn1Spec),
    Syn2(Syn2Spec),
    Syn3(Syn3Spec),
    Syn4(Syn4Spec),
}

impl SynSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            SynSpec::Syn1(s) => s.validate(),
            SynSpec::Syn2(s) => s.validate(),
            SynSpec::Syn3(s) => s.validate(),
            SynSpec::Syn4(s) => s.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SynSpec::Syn1(_) => "syn1",
            SynSpec::Syn2(_) => "syn2",
            SynSpec::Syn3(_) => "syn3",
            SynSpec::Syn4(_) => "syn4",
        }
    }
}

fn prob_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

// ---------------------------------------------------------------------------
// Syn1: distinct SBM structure per layer, shared identity features.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Syn1Spec {
    pub m: usize,
    pub n_layers: usize,
    pub communities: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Probability that a node's final label copies each layer's label.
    pub final_mix: Vec<f64>,
    pub seed: u64,
}

impl Default for Syn1Spec {
    fn default() -> Self {
        Self {
            m: 100,
            n_layers: 3,
            communities: 3,
            p_intra: 0.7,
            p_inter: 0.1,
            final_mix: vec![0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl Syn1Spec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_layers == 0 || self.communities == 0 {
            return Err(CademError::Config("syn1 sizes must be positive".into()));
        }
        if !prob_ok(self.p_intra) || !prob_ok(self.p_inter) {
            return Err(CademError::Config("syn1 probabilities outside [0,1]".into()));
        }
        if self.final_mix.len() != self.n_layers
            || self.final_mix.iter().any(|&p| !prob_ok(p))
            || (self.final_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(CademError::Config(
                "syn1 final_mix must be a probability vector over layers".into(),
            ));
        }
        Ok(())
    }
}

fn sample_sbm_edges<R: Rng>(
    labels: &[usize],
    p_intra: f64,
    p_inter: f64,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let m = labels.len();
    let mut edges = Vec::new();
    for u in 0..m {
        for v in (u + 1)..m {
            let p = if labels[u] == labels[v] { p_intra } else { p_inter };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

fn categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Per-layer SBM communities with identity features; per-layer community
/// labelings plus a `final` labeling sampled per node from the layer labels.
pub fn gen_syn1(spec: &Syn1Spec) -> Result<MultiplexGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut layers = Vec::with_capacity(spec.n_layers);
    let mut labelings: Vec<Vec<usize>> = Vec::with_capacity(spec.n_layers);
    for _ in 0..spec.n_layers {
        let labels: Vec<usize> = (0..spec.m)
            .map(|_| rng.random_range(0..spec.communities))
            .collect();
        let edges = sample_sbm_edges(&labels, spec.p_intra, spec.p_inter, &mut rng);
        layers.push(LayerGraph::new(
            spec.m,
            edges,
            FeatureMatrix::identity(spec.m),
        )?);
        labelings.push(labels);
    }
    let final_labels: Vec<usize> = (0..spec.m)
        .map(|i| {
            let source = categorical(&spec.final_mix, &mut rng);
            labelings[source][i]
        })
        .collect();

    let mut node_labels = BTreeMap::new();
    for (l, labels) in labelings.into_iter().enumerate() {
        node_labels.insert(format!("layer{l}"), labels);
    }
    node_labels.insert("final".to_string(), final_labels);
    MultiplexGraph::new(
        layers,
        node_labels,
        serde_json::json!({"generator": "syn1", "seed": spec.seed}),
    )
}

// ---------------------------------------------------------------------------
// Syn2: shared SBM blended with layer-private reassignments.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Syn2Spec {
    pub m: usize,
    pub n_layers: usize,
    pub communities: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    /// Trade-off between shared (γ) and private (1-γ) structure.
    pub gamma: f64,
    /// Fraction of node labels reassigned per layer.
    pub reassign: f64,
    pub seed: u64,
}

impl Default for Syn2Spec {
    fn default() -> Self {
        Self {
            m: 1000,
            n_layers: 3,
            communities: 3,
            p_intra: 0.3,
            p_inter: 0.01,
            gamma: 0.5,
            reassign: 0.5,
            seed: 0,
        }
    }
}

impl Syn2Spec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_layers == 0 || self.communities == 0 {
            return Err(CademError::Config("syn2 sizes must be positive".into()));
        }
        if !prob_ok(self.p_intra) || !prob_ok(self.p_inter) || !prob_ok(self.gamma)
            || !prob_ok(self.reassign)
        {
            return Err(CademError::Config("syn2 parameters outside [0,1]".into()));
        }
        Ok(())
    }
}

/// Edge probability of the convex combination of shared and private SBMs
/// (the private block matrix equals the shared one).
pub fn syn2_edge_probability(
    gamma: f64,
    p_intra: f64,
    p_inter: f64,
    shared_same: bool,
    private_same: bool,
) -> f64 {
    let shared = if shared_same { p_intra } else { p_inter };
    let private = if private_same { p_intra } else { p_inter };
    gamma * shared + (1.0 - gamma) * private
}

/// Shared community labels with per-layer private reassignments; edges from
/// the γ-blend of both structures. One-hot node features.
pub fn gen_syn2(spec: &Syn2Spec) -> Result<MultiplexGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared: Vec<usize> = (0..spec.m)
        .map(|_| rng.random_range(0..spec.communities))
        .collect();

    let mut layers = Vec::with_capacity(spec.n_layers);
    let mut private_labelings = Vec::with_capacity(spec.n_layers);
    for _ in 0..spec.n_layers {
        let mut private = shared.clone();
        let n_reassign = (spec.reassign * spec.m as f64).round() as usize;
        let picks = rand::seq::index::sample(&mut rng, spec.m, n_reassign);
        for idx in picks {
            private[idx] = rng.random_range(0..spec.communities);
        }
        let mut edges = Vec::new();
        for u in 0..spec.m {
            for v in (u + 1)..spec.m {
                let p = syn2_edge_probability(
                    spec.gamma,
                    spec.p_intra,
                    spec.p_inter,
                    shared[u] == shared[v],
                    private[u] == private[v],
                );
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        layers.push(LayerGraph::new(
            spec.m,
            edges,
            FeatureMatrix::identity(spec.m),
        )?);
        private_labelings.push(private);
    }

    let mut node_labels = BTreeMap::new();
    node_labels.insert("shared".to_string(), shared);
    for (l, labels) in private_labelings.into_iter().enumerate() {
        node_labels.insert(format!("private_layer{l}"), labels);
    }
    MultiplexGraph::new(
        layers,
        node_labels,
        serde_json::json!({"generator": "syn2", "seed": spec.seed, "gamma": spec.gamma}),
    )
}

// ---------------------------------------------------------------------------
// Syn3: shared spiral KNN topology, spectral layer-specific signals.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Syn3Spec {
    pub m: usize,
    pub k_nn: usize,
    pub centers_per_layer: usize,
    pub n_layers: usize,
    /// Hop radius both for the BFS atom neighborhoods and the node labels.
    pub hop_radius: usize,
    /// Weight of the shared low-frequency component in the layer signal.
    pub common_mix: f64,
    pub seed: u64,
}

impl Default for Syn3Spec {
    fn default() -> Self {
        Self {
            m: 600,
            k_nn: 15,
            centers_per_layer: 3,
            n_layers: 2,
            hop_radius: 3,
            common_mix: 0.3,
            seed: 0,
        }
    }
}

impl Syn3Spec {
    pub fn validate(&self) -> Result<()> {
        if self.m <= self.k_nn {
            return Err(CademError::Config("syn3 needs m > k_nn".into()));
        }
        if self.n_layers == 0 || self.centers_per_layer == 0 {
            return Err(CademError::Config("syn3 sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Evenly-spaced points on an Archimedean spiral: θ over [0, 4π],
/// ρ = 0.1 + 0.05 θ.
pub fn spiral_points(m: usize) -> Array2<f64> {
    Array2::from_shape_fn((m, 2), |(i, j)| {
        let theta = 4.0 * std::f64::consts::PI * i as f64 / (m.max(2) - 1) as f64;
        let rho = 0.1 + 0.05 * theta;
        if j == 0 {
            rho * theta.cos()
        } else {
            rho * theta.sin()
        }
    })
}

/// Apply a spectral filter f(λ) through the eigendecomposition:
/// y = Q f(Λ) Qᵀ x.
pub fn apply_spectral_filter(
    eig: &SymEig,
    f: impl Fn(f64) -> f64,
    signal: &Array2<f64>,
) -> Array2<f64> {
    let q = &eig.eigenvectors;
    let coeffs = q.t().dot(signal);
    let mut filtered = coeffs.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let g = f(lambda);
        for j in 0..filtered.ncols() {
            filtered[[k, j]] *= g;
        }
    }
    q.dot(&filtered)
}

/// Cosine-taper weight at `hop` for a neighborhood of radius `hop_max`.
pub fn cosine_taper(hop: usize, hop_max: usize) -> f64 {
    0.5 * (1.0 + (std::f64::consts::PI * hop as f64 / (hop_max as f64 + 1.0)).cos())
}

/// Layer-specific center nodes: evenly spaced along the spiral with a
/// layer-dependent phase offset.
fn layer_centers(m: usize, centers: usize, layer: usize, n_layers: usize) -> Vec<usize> {
    (0..centers)
        .map(|k| {
            let frac = (k as f64 + 0.5 + layer as f64 / n_layers as f64) / centers as f64;
            ((frac * m as f64) as usize) % m
        })
        .collect()
}

/// Shared low-pass signal plus per-layer superpositions of band-pass wavelet
/// atoms centered on layer-specific spiral nodes. Labels mark nodes within
/// `hop_radius` of the layer's centers.
pub fn gen_syn3(spec: &Syn3Spec) -> Result<MultiplexGraph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = spiral_points(spec.m);
    let edges = knn_graph(&points, spec.k_nn)?;
    if !is_connected(&edges, spec.m) {
        // The spiral is deterministic, so a fresh seed cannot change the
        // topology; surface the failure instead of looping.
        eprintln!(
            "warning: syn3 KNN graph disconnected for m={} k={}",
            spec.m, spec.k_nn
        );
        return Err(CademError::InvalidArgument(
            "syn3 KNN graph is disconnected; increase k_nn".into(),
        ));
    }

    let lap = laplacian(&edges, spec.m);
    let eig = jacobi_eigen(&lap, 1e-9, 60)?;

    // Scale t = 20 / λ_max with λ_max estimated by power iteration.
    let mut lap_entries = Vec::new();
    for i in 0..spec.m {
        for j in 0..spec.m {
            if lap[[i, j]] != 0.0 {
                lap_entries.push((i, j, lap[[i, j]]));
            }
        }
    }
    let lap_sparse =
        crate::autodiff::SparseMatrix::from_entries(spec.m, spec.m, lap_entries)?;
    let lambda_max = spectral_radius(&lap_sparse)?;
    if lambda_max <= 0.0 {
        return Err(CademError::NonFinite("syn3 Laplacian has no spectrum".into()));
    }
    let t = 20.0 / lambda_max;

    // Shared low-frequency component: h(λ) = e^{-λ} on white noise.
    let z = Array2::from_shape_fn((spec.m, 1), |_| {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
    });
    let x_common = apply_spectral_filter(&eig, |l: f64| (-l).exp(), &z);

    let mut layers = Vec::with_capacity(spec.n_layers);
    let mut node_labels = BTreeMap::new();
    let mut centers_meta = Vec::new();
    for layer in 0..spec.n_layers {
        let centers = layer_centers(spec.m, spec.centers_per_layer, layer, spec.n_layers);
        let hops = bfs_hop_distances(&edges, spec.m, &centers)?;

        // Combined atom coefficients: band-pass filtering is linear, so all
        // tapered deltas are filtered in one pass.
        let mut coeffs = Array2::zeros((spec.m, 1));
        for center in &centers {
            let local = bfs_hop_distances(&edges, spec.m, &[*center])?;
            for (q, &hop) in local.iter().enumerate() {
                if hop != UNREACHABLE && hop <= spec.hop_radius {
                    coeffs[[q, 0]] += cosine_taper(hop, spec.hop_radius);
                }
            }
        }
        let x_private =
            apply_spectral_filter(&eig, |l: f64| t * l * (-(t * l).powi(2)).exp(), &coeffs);
        let x = &x_common * spec.common_mix + &x_private;
        layers.push(LayerGraph::new(
            spec.m,
            edges.clone(),
            FeatureMatrix::Dense(x),
        )?);

        let labels: Vec<usize> = hops
            .iter()
            .map(|&h| usize::from(h != UNREACHABLE && h <= spec.hop_radius))
            .collect();
        node_labels.insert(format!("layer{layer}"), labels);
        centers_meta.push(centers);
    }

    MultiplexGraph::new(
        layers,
        node_labels,
        serde_json::json!({
            "generator": "syn3",
            "seed": spec.seed,
            "t": t,
            "lambda_max": lambda_max,
            "centers": centers_meta,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn syn1_cliques_when_deterministic_probabilities() {
        let spec = Syn1Spec {
            m: 30,
            p_intra: 1.0,
            p_inter: 0.0,
            seed: 7,
            ..Default::default()
        };
        let g = gen_syn1(&spec).unwrap();
        for l in 0..3 {
            let labels = g.labels(&format!("layer{l}")).unwrap();
            let layer = &g.layers[l];
            // Every intra pair present, no inter edges.
            for u in 0..30 {
                for v in (u + 1)..30 {
                    let has = layer.edges().binary_search(&(u, v)).is_ok();
                    assert_eq!(has, labels[u] == labels[v], "({u},{v})");
                }
            }
        }
    }

    #[test]
    fn syn1_intra_edge_count_within_binomial_bound() {
        // Sum intra edges over 20 seeds; compare against the binomial
        // expectation from realized community sizes with a 3-sigma bound.
        let mut total = 0.0f64;
        let mut expected = 0.0f64;
        let mut variance = 0.0f64;
        for seed in 0..20 {
            let spec = Syn1Spec {
                m: 60,
                seed,
                ..Default::default()
            };
            let g = gen_syn1(&spec).unwrap();
            let labels = g.labels("layer0").unwrap();
            let intra_pairs = (0..60)
                .flat_map(|u| ((u + 1)..60).map(move |v| (u, v)))
                .filter(|&(u, v)| labels[u] == labels[v])
                .count() as f64;
            let intra_edges = g.layers[0]
                .edges()
                .iter()
                .filter(|&&(u, v)| labels[u] == labels[v])
                .count() as f64;
            total += intra_edges;
            expected += intra_pairs * 0.7;
            variance += intra_pairs * 0.7 * 0.3;
        }
        let sigma = variance.sqrt();
        assert!(
            (total - expected).abs() < 3.0 * sigma,
            "total {total} expected {expected} sigma {sigma}"
        );
    }

    #[test]
    fn syn1_degenerate_mix_copies_first_layer() {
        let spec = Syn1Spec {
            m: 40,
            final_mix: vec![1.0, 0.0, 0.0],
            seed: 3,
            ..Default::default()
        };
        let g = gen_syn1(&spec).unwrap();
        assert_eq!(g.labels("final").unwrap(), g.labels("layer0").unwrap());
    }

    #[test]
    fn syn1_deterministic_given_seed() {
        let spec = Syn1Spec {
            m: 25,
            seed: 123,
            ..Default::default()
        };
        let a = gen_syn1(&spec).unwrap();
        let b = gen_syn1(&spec).unwrap();
        for l in 0..3 {
            assert_eq!(a.layers[l].edges(), b.layers[l].edges());
        }
        assert_eq!(a.node_labels, b.node_labels);
    }

    #[test]
    fn syn2_edge_probability_formula() {
        // γ=0.5, shared agree, private disagree: 0.5·0.3 + 0.5·0.01.
        let p = syn2_edge_probability(0.5, 0.3, 0.01, true, false);
        assert!((p - 0.155).abs() < 1e-12);
        // γ=0 depends only on the private labels.
        assert_eq!(syn2_edge_probability(0.0, 0.3, 0.01, true, false), 0.01);
        assert_eq!(syn2_edge_probability(0.0, 0.3, 0.01, false, true), 0.3);
    }

    #[test]
    fn syn2_gamma_one_empirical_intra_rate() {
        let spec = Syn2Spec {
            m: 150,
            gamma: 1.0,
            seed: 5,
            ..Default::default()
        };
        let g = gen_syn2(&spec).unwrap();
        let shared = g.labels("shared").unwrap();
        let intra_pairs = (0..150)
            .flat_map(|u| ((u + 1)..150).map(move |v| (u, v)))
            .filter(|&(u, v)| shared[u] == shared[v])
            .count() as f64;
        let intra_edges = g.layers[0]
            .edges()
            .iter()
            .filter(|&&(u, v)| shared[u] == shared[v])
            .count() as f64;
        let sigma = (intra_pairs * 0.3 * 0.7).sqrt();
        assert!(
            (intra_edges - intra_pairs * 0.3).abs() < 3.0 * sigma,
            "{intra_edges} vs {}",
            intra_pairs * 0.3
        );
    }

    #[test]
    fn syn2_reassignment_fraction() {
        let spec = Syn2Spec {
            m: 200,
            seed: 9,
            ..Default::default()
        };
        let g = gen_syn2(&spec).unwrap();
        let shared = g.labels("shared").unwrap();
        for l in 0..3 {
            let private = g.labels(&format!("private_layer{l}")).unwrap();
            let changed = shared
                .iter()
                .zip(private)
                .filter(|(a, b)| a != b)
                .count() as f64;
            // 100 nodes redrawn uniformly over 3 labels: ~2/3 actually change.
            assert!(changed <= 100.0);
            assert!(changed >= 40.0, "changed {changed}");
        }
    }

    #[test]
    fn spiral_knn_graph_is_connected() {
        let spec = Syn3Spec {
            m: 80,
            k_nn: 6,
            ..Default::default()
        };
        let points = spiral_points(spec.m);
        let edges = knn_graph(&points, spec.k_nn).unwrap();
        assert!(is_connected(&edges, spec.m));
    }

    #[test]
    fn low_pass_filter_preserves_constant_vector() {
        let lap = laplacian(&[(0, 1), (1, 2), (0, 2)], 3);
        let eig = jacobi_eigen(&lap, 1e-12, 40).unwrap();
        let ones = Array2::ones((3, 1));
        let filtered = apply_spectral_filter(&eig, |l: f64| (-l).exp(), &ones);
        for v in filtered.iter() {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn band_pass_two_node_closed_form() {
        // Path on 2 nodes: Λ = {0, 2}, high eigenvector (e0 - e1)/√2.
        // g(λ) = λ e^{-λ²} at t = 1 gives ψ = 2e^{-4} [0.5, -0.5].
        let lap = laplacian(&[(0, 1)], 2);
        let eig = jacobi_eigen(&lap, 1e-14, 30).unwrap();
        let mut delta = Array2::zeros((2, 1));
        delta[[0, 0]] = 1.0;
        let psi = apply_spectral_filter(&eig, |l: f64| l * (-(l * l)).exp(), &delta);
        let expected = 2.0 * (-4.0f64).exp() * 0.5;
        assert!((psi[[0, 0]] - expected).abs() < 1e-12);
        assert!((psi[[1, 0]] + expected).abs() < 1e-12);
    }

    #[test]
    fn syn3_atoms_have_zero_graph_mean_and_labels_within_radius() {
        let spec = Syn3Spec {
            m: 90,
            k_nn: 6,
            seed: 2,
            ..Default::default()
        };
        let g = gen_syn3(&spec).unwrap();
        let meta = &g.metadata;
        let t = meta["t"].as_f64().unwrap();
        assert!(t > 0.0);

        // x_ℓ - 0.3·x_common is a pure band-pass signal: zero DC component.
        // Reconstruct the common part from both layers (shared draw).
        let x0 = g.layers[0].features().to_dense();
        let x1 = g.layers[1].features().to_dense();
        // x0 = 0.3c + p0, x1 = 0.3c + p1 where mean(p0) = mean(p1) = 0, so
        // mean(x0 - x1) = 0.
        let diff_mean = (&x0 - &x1).sum() / 90.0;
        assert!(diff_mean.abs() < 1e-9, "mean {diff_mean}");

        // Labels: nodes within hop radius of the layer centers.
        for l in 0..2 {
            let labels = g.labels(&format!("layer{l}")).unwrap();
            let centers: Vec<usize> = meta["centers"][l]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap() as usize)
                .collect();
            let hops = bfs_hop_distances(g.layers[l].edges(), 90, &centers).unwrap();
            for i in 0..90 {
                assert_eq!(labels[i] == 1, hops[i] <= 3);
            }
            assert!(labels.iter().any(|&x| x == 1));
            assert!(labels.iter().any(|&x| x == 0));
        }
    }

    #[test]
    fn cosine_taper_profile() {
        assert!((cosine_taper(0, 3) - 1.0).abs() < 1e-12);
        assert!(cosine_taper(1, 3) > cosine_taper(2, 3));
        assert!(cosine_taper(3, 3) > 0.0);
    }

    #[test]
    fn syn3_deterministic_given_seed() {
        let spec = Syn3Spec {
            m: 60,
            k_nn: 5,
            seed: 11,
            ..Default::default()
        };
        let a = gen_syn3(&spec).unwrap();
        let b = gen_syn3(&spec).unwrap();
        assert_eq!(
            a.layers[0].features().to_dense(),
            b.layers[0].features().to_dense()
        );
        assert_eq!(a.node_labels, b.node_labels);
    }
}
