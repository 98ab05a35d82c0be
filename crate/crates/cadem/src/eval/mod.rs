//! Evaluation harness: K-means clustering, agreement metrics, linear probes,
//! and nested stratified cross-validation.

mod cv;
mod kmeans;
mod metrics;
mod probe;

pub use cv::{grouped_stratified_kfold, nested_cv, stratified_kfold, CvReport, FoldMetrics};
pub use kmeans::{kmeans, KmeansResult};
pub use metrics::{ari, f1_scores, nmi};
pub use probe::{linear_probe, mha_joint_probe, MhaProbeInputs, ProbeOutcome, ProbeSettings};

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;

/// JSON metrics report. `per_fold` holds one named-value map per fold or
/// clustering run; `mean`/`std` aggregate each named series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub per_fold: Vec<BTreeMap<String, f64>>,
    pub mean: BTreeMap<String, f64>,
    pub std: BTreeMap<String, f64>,
    pub config_hash: String,
    pub seed: u64,
}

impl MetricsReport {
    pub fn from_series(
        task: impl Into<String>,
        per_fold: Vec<BTreeMap<String, f64>>,
        config_hash: impl Into<String>,
        seed: u64,
    ) -> Self {
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        if let Some(first) = per_fold.first() {
            for key in first.keys() {
                let series: Vec<f64> = per_fold.iter().filter_map(|f| f.get(key).copied()).collect();
                mean.insert(key.clone(), mean_of(&series));
                std.insert(key.clone(), std_of(&series));
            }
        }
        Self {
            task: task.into(),
            per_fold,
            mean,
            std,
            config_hash: config_hash.into(),
            seed,
        }
    }
}

pub fn mean_of(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
pub fn std_of(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let m = mean_of(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Repeat K-means `runs` times (one initialization per run, seeds derived
/// from `seed`) and score each run against `labels`. Returns the per-run ARI
/// and NMI series.
pub fn kmeans_agreement_runs(
    x: &Array2<f64>,
    k: usize,
    labels: &[usize],
    runs: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut aris = Vec::with_capacity(runs);
    let mut nmis = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(run as u64 + 1);
        let result = kmeans(x, k, 1, 300, 1e-6, &mut rng)?;
        aris.push(ari(&result.labels, labels)?);
        nmis.push(nmi(&result.labels, labels)?);
    }
    Ok((aris, nmis))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        num += (a - mx) * (b - my);
        dx += (a - mx) * (a - mx);
        dy += (b - my) * (b - my);
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap().then(a.cmp(&b)));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_monotone_series() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up = [0.1, 0.5, 0.6, 0.9, 1.4];
        let down = [1.4, 0.9, 0.6, 0.5, 0.1];
        assert!((spearman(&xs, &up) - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &down) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_handles_ties() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [0.0, 1.0, 1.0, 2.0];
        let rho = spearman(&xs, &ys);
        assert!(rho > 0.9 && rho <= 1.0);
    }

    #[test]
    fn report_aggregates_mean_and_std() {
        let mut f1 = BTreeMap::new();
        f1.insert("macro_f1".to_string(), 0.8);
        let mut f2 = BTreeMap::new();
        f2.insert("macro_f1".to_string(), 0.6);
        let report = MetricsReport::from_series("node_classification", vec![f1, f2], "abc", 7);
        assert!((report.mean["macro_f1"] - 0.7).abs() < 1e-12);
        assert!((report.std["macro_f1"] - 0.1).abs() < 1e-12);
    }
}
