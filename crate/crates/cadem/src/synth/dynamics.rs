//! Nonlinear network dynamics and the Syn4 generator.
//!
//! Three dynamical classes (degree-driven, homogeneous, degree-avert), each
//! instantiated by two systems, simulated with fixed-step forward Euler on
//! Erdős–Rényi topologies whose adjacency is rescaled by its spectral radius
//! and a class-dependent coupling β.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::SparseMatrix;
use crate::error::{CademError, Result};
use crate::graph::{is_connected, spectral_radius, FeatureMatrix, LayerGraph, MultiplexGraph};

/// The six node-state dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    Population,
    RegulatoryDegreeDriven,
    Epidemic,
    Biochemical,
    Mutualistic,
    RegulatoryDegreeAvert,
}

impl DynamicsKind {
    pub const ALL: [DynamicsKind; 6] = [
        DynamicsKind::Population,
        DynamicsKind::RegulatoryDegreeDriven,
        DynamicsKind::Epidemic,
        DynamicsKind::Biochemical,
        DynamicsKind::Mutualistic,
        DynamicsKind::RegulatoryDegreeAvert,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DynamicsKind::Population => "population",
            DynamicsKind::RegulatoryDegreeDriven => "regulatory_degree_driven",
            DynamicsKind::Epidemic => "epidemic",
            DynamicsKind::Biochemical => "biochemical",
            DynamicsKind::Mutualistic => "mutualistic",
            DynamicsKind::RegulatoryDegreeAvert => "regulatory_degree_avert",
        }
    }

    /// Subclass index in [0, 6).
    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|d| d == self).unwrap()
    }

    /// dx/dt given the current state (column vector) and the scaled coupling
    /// matrix W = β·Ã.
    pub fn rhs(&self, x: &Array2<f64>, w: &SparseMatrix) -> Result<Array2<f64>> {
        let coupled = |v: &Array2<f64>| w.mul_dense(v);
        Ok(match self {
            DynamicsKind::Population => {
                // -x³ + Σ W_ij x_j²
                let agg = coupled(&x.mapv(|v| v * v))?;
                x.mapv(|v| -v.powi(3)) + agg
            }
            DynamicsKind::RegulatoryDegreeDriven => {
                // -x + Σ W_ij x_j^{1/3} / (1 + x_j^{1/3})
                let transformed = x.mapv(|v| {
                    let c = v.cbrt();
                    c / (1.0 + c)
                });
                -x + &coupled(&transformed)?
            }
            DynamicsKind::Epidemic => {
                // -x + (1 - x) ∘ Σ W_ij x_j
                let agg = coupled(x)?;
                -x + &(&x.mapv(|v| 1.0 - v) * &agg)
            }
            DynamicsKind::Biochemical => {
                // 1 - x - x ∘ Σ W_ij x_j
                let agg = coupled(x)?;
                x.mapv(|v| 1.0 - v) - &(x * &agg)
            }
            DynamicsKind::Mutualistic => {
                // x(1 - x) + x ∘ Σ W_ij x_j² / (1 + x_j²)
                let transformed = x.mapv(|v| v * v / (1.0 + v * v));
                let agg = coupled(&transformed)?;
                x.mapv(|v| v * (1.0 - v)) + &(x * &agg)
            }
            DynamicsKind::RegulatoryDegreeAvert => {
                // -x + Σ W_ij x_j² / (1 + x_j²)
                let transformed = x.mapv(|v| v * v / (1.0 + v * v));
                -x + &coupled(&transformed)?
            }
        })
    }

    /// Dynamic-specific initial state distribution.
    pub fn sample_initial<R: Rng>(&self, m: usize, rng: &mut R) -> Array2<f64> {
        match self {
            DynamicsKind::Population => Array2::from_shape_fn((m, 1), |_| {
                let n: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                0.5 * n
            }),
            DynamicsKind::RegulatoryDegreeDriven => {
                Array2::from_shape_fn((m, 1), |_| rng.random::<f64>() * 0.5)
            }
            DynamicsKind::Epidemic => Array2::from_shape_fn((m, 1), |_| rng.random::<f64>() * 0.4),
            DynamicsKind::Biochemical => Array2::from_shape_fn((m, 1), |_| beta22(rng)),
            DynamicsKind::Mutualistic | DynamicsKind::RegulatoryDegreeAvert => {
                Array2::from_shape_fn((m, 1), |_| rng.random::<f64>() * 0.6)
            }
        }
    }
}

/// Beta(2,2) via two Gamma(2,1) draws, each the sum of two exponentials.
fn beta22<R: Rng>(rng: &mut R) -> f64 {
    let mut exp = |r: &mut R| -> f64 { -(1.0 - r.random::<f64>()).ln() };
    let g1 = exp(rng) + exp(rng);
    let g2 = exp(rng) + exp(rng);
    g1 / (g1 + g2)
}

/// Integration settings per dynamical class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    pub steps: usize,
    pub dt: f64,
    /// Coupling scale β applied to the radius-normalized adjacency.
    pub beta: f64,
}

/// The three dynamical classes with their member systems and integration
/// parameters.
pub const DYNAMICS_CLASSES: [(&str, [DynamicsKind; 2], DynamicsParams); 3] = [
    (
        "degree_driven",
        [DynamicsKind::Population, DynamicsKind::RegulatoryDegreeDriven],
        DynamicsParams {
            steps: 250,
            dt: 0.04,
            beta: 1.0,
        },
    ),
    (
        "homogeneous",
        [DynamicsKind::Epidemic, DynamicsKind::Biochemical],
        DynamicsParams {
            steps: 300,
            dt: 0.04,
            beta: 1.2,
        },
    ),
    (
        "degree_avert",
        [DynamicsKind::Mutualistic, DynamicsKind::RegulatoryDegreeAvert],
        DynamicsParams {
            steps: 100,
            dt: 0.02,
            beta: 0.2,
        },
    ),
];

/// Fixed-step forward Euler: x_{k+1} = x_k + Δt·rhs(x_k). Returns every
/// state including the initial one. Errors with the offending step if the
/// state leaves the finite range.
pub fn integrate_dynamics(
    kind: DynamicsKind,
    w_scaled: &SparseMatrix,
    x0: Array2<f64>,
    steps: usize,
    dt: f64,
) -> Result<Vec<Array2<f64>>> {
    if dt <= 0.0 || steps == 0 {
        return Err(CademError::Config(format!(
            "integration needs dt > 0 and steps >= 1, got dt={dt}, steps={steps}"
        )));
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0;
    states.push(x.clone());
    for step in 0..steps {
        let dx = kind.rhs(&x, w_scaled)?;
        x = &x + &(dx * dt);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CademError::NonFinite(format!(
                "{} dynamics diverged at step {step}",
                kind.name()
            )));
        }
        states.push(x.clone());
    }
    Ok(states)
}

/// Syn4 configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Syn4Spec {
    pub n_base_graphs: usize,
    pub m: usize,
    pub p_er: f64,
    pub seed: u64,
}

impl Default for Syn4Spec {
    fn default() -> Self {
        Self {
            n_base_graphs: 30,
            m: 100,
            p_er: 0.08,
            seed: 0,
        }
    }
}

impl Syn4Spec {
    pub fn validate(&self) -> Result<()> {
        if self.n_base_graphs == 0 || self.m == 0 {
            return Err(CademError::Config("syn4 sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_er) {
            return Err(CademError::Config("syn4 edge probability outside [0,1]".into()));
        }
        Ok(())
    }
}

/// Graph-level dataset: one multiplex sample per (base graph, dynamical
/// class).
#[derive(Debug, Clone)]
pub struct Syn4Dataset {
    pub samples: Vec<MultiplexGraph>,
    /// Dynamical class per sample, in [0, 3).
    pub class_labels: Vec<usize>,
    /// Subclass (dynamics index in [0, 6)) per layer of each sample.
    pub subclass_labels: Vec<[usize; 2]>,
    /// Shared-topology group id per sample.
    pub base_graph_ids: Vec<usize>,
}

impl Syn4Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

fn sample_connected_er<R: Rng>(m: usize, p: f64, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    for _ in 0..1000 {
        let mut edges = Vec::new();
        for u in 0..m {
            for v in (u + 1)..m {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        if is_connected(&edges, m) {
            return Ok(edges);
        }
    }
    Err(CademError::InvalidArgument(format!(
        "could not sample a connected ER graph with m={m}, p={p}"
    )))
}

/// Node features from a trajectory: final state, temporal mean, temporal
/// variance (population variance over all stored states).
fn trajectory_features(states: &[Array2<f64>]) -> Array2<f64> {
    let m = states[0].nrows();
    let t = states.len() as f64;
    let mut out = Array2::zeros((m, 3));
    for i in 0..m {
        let series: Vec<f64> = states.iter().map(|s| s[[i, 0]]).collect();
        let mean = series.iter().sum::<f64>() / t;
        let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
        out[[i, 0]] = series[series.len() - 1];
        out[[i, 1]] = mean;
        out[[i, 2]] = var;
    }
    out
}

/// Generate the Syn4 collection: `n_base_graphs` connected ER topologies,
/// each instantiated under all three dynamical classes as a 2-layer multiplex
/// (two distinct dynamics of the class, dynamic-specific random initial
/// states).
pub fn gen_syn4(spec: &Syn4Spec) -> Result<Syn4Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut bases = Vec::with_capacity(spec.n_base_graphs);
    for _ in 0..spec.n_base_graphs {
        bases.push(sample_connected_er(spec.m, spec.p_er, &mut rng)?);
    }

    let mut samples = Vec::new();
    let mut class_labels = Vec::new();
    let mut subclass_labels = Vec::new();
    let mut base_graph_ids = Vec::new();

    for (base_id, edges) in bases.iter().enumerate() {
        // Adjacency rescaled by its spectral radius, shared by both layers.
        let mut entries = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            entries.push((u, v, 1.0));
            entries.push((v, u, 1.0));
        }
        let adj = SparseMatrix::from_entries(spec.m, spec.m, entries)?;
        let rho = spectral_radius(&adj)?;
        if rho <= 0.0 {
            return Err(CademError::NonFinite("ER graph with zero spectral radius".into()));
        }

        for (class_idx, (class_name, members, params)) in DYNAMICS_CLASSES.iter().enumerate() {
            let scale = params.beta / rho;
            let w_entries: Vec<(usize, usize, f64)> = adj
                .entries()
                .iter()
                .map(|&(r, c, w)| (r, c, w * scale))
                .collect();
            let w = SparseMatrix::from_entries(spec.m, spec.m, w_entries)?;

            let mut layers = Vec::with_capacity(2);
            let mut subs = [0usize; 2];
            for (slot, kind) in members.iter().enumerate() {
                let x0 = kind.sample_initial(spec.m, &mut rng);
                let states = integrate_dynamics(*kind, &w, x0, params.steps, params.dt)?;
                layers.push(LayerGraph::new(
                    spec.m,
                    edges.clone(),
                    FeatureMatrix::Dense(trajectory_features(&states)),
                )?);
                subs[slot] = kind.index();
            }
            let sample = MultiplexGraph::new(
                layers,
                Default::default(),
                serde_json::json!({
                    "generator": "syn4",
                    "seed": spec.seed,
                    "base_graph_id": base_id,
                    "class": class_idx,
                    "class_name": class_name,
                    "subclasses": subs.to_vec(),
                }),
            )?;
            samples.push(sample);
            class_labels.push(class_idx);
            subclass_labels.push(subs);
            base_graph_ids.push(base_id);
        }
    }

    Ok(Syn4Dataset {
        samples,
        class_labels,
        subclass_labels,
        base_graph_ids,
    })
}
