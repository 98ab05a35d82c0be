//! CaDeM: causality-driven disentangled representation learning on multiplex
//! graphs.
//!
//! The crate covers the full pipeline: synthetic multiplex generators, a
//! minimal reverse-mode autodiff engine, dual GCN encoders with common and
//! private branches, the matching / self-supervised / causal objectives,
//! graph augmentation for confounder stratification, and the clustering and
//! classification evaluation harness (K-means, ARI/NMI/F1, linear probes,
//! nested stratified cross-validation).

pub mod augment;
pub mod autodiff;
pub mod config;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod gradcheck;
pub mod graph;
pub mod linalg;
pub mod losses;
pub mod synth;
pub mod trainer;

pub use error::{CademError, Result};
