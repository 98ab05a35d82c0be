//! The three training objectives: matching (generalized Procrustes
//! alignment), self-supervised layer prediction, and the stratified causal
//! loss, plus their weighted combination.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::AugmentedBatch;
use crate::autodiff::{Tape, Value};
use crate::error::{CademError, Result};
use crate::linalg::{column_center, thin_svd};

/// Consensus configuration from generalized Procrustes analysis.
///
/// `s` has orthonormal, zero-mean columns; it is treated as a constant in the
/// matching loss (recomputed every step, never differentiated through).
#[derive(Debug, Clone)]
pub struct ConsensusResult {
    pub s: Array2<f64>,
    /// Total discrepancy Σ‖C_ℓ − S‖²_F at the solution.
    pub residual: f64,
    /// Smallest singular value of the centered aggregate; near zero means
    /// the consensus directions are not fully determined.
    pub min_singular: f64,
}

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight on the matching loss.
    pub matching: f64,
    /// α: weight on the self-supervised loss.
    pub self_supervised: f64,
    /// β: weight on the causal loss.
    pub causal: f64,
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.matching < 0.0 || self.self_supervised < 0.0 || self.causal < 0.0 {
            return Err(CademError::Config("loss weights must be >= 0".into()));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            matching: 1.0,
            self_supervised: 1.0,
            causal: 1.0,
        }
    }
}

/// Pairing strategy of the causal loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "k")]
pub enum Pairing {
    /// All N'² (private, common) pairs.
    Full,
    /// K sampled common partners per private embedding, without replacement.
    MonteCarlo(usize),
}

/// Consensus S of the common embeddings: aggregate, column-center, thin SVD,
/// S = U Vᵀ.
pub fn procrustes_consensus(c_list: &[Array2<f64>]) -> Result<ConsensusResult> {
    if c_list.is_empty() {
        return Err(CademError::InvalidArgument(
            "procrustes_consensus needs at least one matrix".into(),
        ));
    }
    let (m, d) = c_list[0].dim();
    if m < d {
        return Err(CademError::InvalidArgument(format!(
            "procrustes_consensus needs rows >= cols, got {m}x{d}"
        )));
    }
    if c_list.iter().any(|c| c.dim() != (m, d)) {
        return Err(CademError::Shape(
            "common embeddings must share a shape".into(),
        ));
    }
    let mut aggregate = Array2::zeros((m, d));
    for c in c_list {
        aggregate += c;
    }
    let centered = column_center(&aggregate);
    let svd = thin_svd(&centered)?;
    let min_singular = svd.singular_values.last().copied().unwrap_or(0.0);
    if min_singular < 1e-10 {
        eprintln!(
            "warning: procrustes aggregate is rank deficient (sigma_min = {min_singular:.3e}); \
             consensus directions chosen deterministically"
        );
    }
    let s = svd.u.dot(&svd.vt);
    let residual = c_list
        .iter()
        .map(|c| (c - &s).iter().map(|x| x * x).sum::<f64>())
        .sum();
    Ok(ConsensusResult {
        s,
        residual,
        min_singular,
    })
}

/// Matching loss Σ_ℓ ‖C_ℓ − S‖²_F with S from [`procrustes_consensus`]
/// entering as a constant (stop-gradient).
pub fn matching_loss(tape: &Tape, c_layers: &[Value]) -> Result<(Value, ConsensusResult)> {
    let data: Vec<Array2<f64>> = c_layers
        .iter()
        .map(|&c| tape.data(c))
        .collect::<Result<_>>()?;
    let consensus = procrustes_consensus(&data)?;
    let s_const = tape.constant(consensus.s.clone());
    let mut loss: Option<Value> = None;
    for &c in c_layers {
        let term = tape.frobenius_sq(tape.sub(c, s_const)?)?;
        loss = Some(match loss {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
    }
    Ok((loss.expect("nonempty layer list"), consensus))
}

/// Cross-entropy of φ on pooled private embeddings against the one-hot layer
/// targets: −(1/N') Σ yᵀ log φ(h_P).
pub fn self_supervised_loss(
    tape: &Tape,
    batch: &AugmentedBatch,
    head_phi: Value,
) -> Result<Value> {
    if batch.is_empty() {
        return Err(CademError::InvalidArgument("empty augmented batch".into()));
    }
    let h = tape.stack_rows(&batch.h_private)?;
    let logits = tape.matmul(h, head_phi)?;
    tape.softmax_cross_entropy(logits, &batch.targets)
}

/// Stratified causal loss: every private embedding is re-paired with common
/// embeddings of other augmented graphs and ψ must still predict the source
/// layer. Full pairing averages over all N'² pairs; Monte Carlo samples K
/// partners per private embedding.
pub fn causal_loss<R: Rng>(
    tape: &Tape,
    batch: &AugmentedBatch,
    head_psi: Value,
    pairing: Pairing,
    rng: &mut R,
) -> Result<Value> {
    let n = batch.len();
    if n == 0 {
        return Err(CademError::InvalidArgument("empty augmented batch".into()));
    }
    let n_classes = batch.n_classes();
    let mut rows: Vec<Value> = Vec::new();
    let mut row_sources: Vec<usize> = Vec::new();
    match pairing {
        Pairing::Full => {
            for i in 0..n {
                for j in 0..n {
                    rows.push(tape.concat_cols(batch.h_private[i], batch.h_common[j])?);
                    row_sources.push(batch.source_layers[i]);
                }
            }
        }
        Pairing::MonteCarlo(k) => {
            if k == 0 || k > n {
                return Err(CademError::Config(format!(
                    "monte carlo pairing needs 1 <= K <= N'={n}, got {k}"
                )));
            }
            for i in 0..n {
                let js = rand::seq::index::sample(rng, n, k);
                for j in js {
                    rows.push(tape.concat_cols(batch.h_private[i], batch.h_common[j])?);
                    row_sources.push(batch.source_layers[i]);
                }
            }
        }
    }
    let x = tape.stack_rows(&rows)?;
    let logits = tape.matmul(x, head_psi)?;
    let mut targets = Array2::zeros((rows.len(), n_classes));
    for (r, &src) in row_sources.iter().enumerate() {
        targets[[r, src]] = 1.0;
    }
    tape.softmax_cross_entropy(logits, &targets)
}

/// Combined objective: w_match·L_matching + α·L_self + β·L_causal. Missing
/// terms contribute nothing.
pub fn total_loss(
    tape: &Tape,
    matching: Value,
    self_supervised: Option<Value>,
    causal: Option<Value>,
    weights: &LossWeights,
) -> Result<Value> {
    weights.validate()?;
    let mut acc = tape.scale(matching, weights.matching)?;
    if let Some(s) = self_supervised {
        acc = tape.add(acc, tape.scale(s, weights.self_supervised)?)?;
    }
    if let Some(c) = causal {
        acc = tape.add(acc, tape.scale(c, weights.causal)?)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck;
    use crate::linalg::frobenius_norm;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0f64..1.0))
    }

    /// Orthonormal zero-mean matrix: U factor of a centered random matrix.
    fn orthonormal_centered(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let a = column_center(&random_matrix(rows, cols, seed));
        thin_svd(&a).unwrap().u
    }

    fn consensus_invariants(s: &Array2<f64>) {
        let d = s.ncols();
        let gram = s.t().dot(s);
        assert!(frobenius_norm(&(&gram - &Array2::<f64>::eye(d))) < 1e-8);
        let col_sums: f64 = (0..d).map(|j| s.column(j).sum().powi(2)).sum::<f64>().sqrt();
        assert!(col_sums < 1e-8);
    }

    #[test]
    fn consensus_fixed_point() {
        let q = orthonormal_centered(8, 3, 1);
        let res = procrustes_consensus(&[q.clone(), q.clone()]).unwrap();
        assert!(frobenius_norm(&(&res.s - &q)) < 1e-9);
        assert!(res.residual < 1e-18);
        consensus_invariants(&res.s);
    }

    #[test]
    fn consensus_single_matrix_is_svd_of_centered_input() {
        let c = random_matrix(7, 2, 2);
        let res = procrustes_consensus(&[c.clone()]).unwrap();
        let svd = thin_svd(&column_center(&c)).unwrap();
        let expected = svd.u.dot(&svd.vt);
        assert!(frobenius_norm(&(&res.s - &expected)) < 1e-10);
        consensus_invariants(&res.s);
    }

    #[test]
    fn consensus_invariants_hold_on_random_inputs() {
        for seed in 0..100 {
            let n = 1 + (seed as usize % 3);
            let cs: Vec<Array2<f64>> = (0..n)
                .map(|i| random_matrix(6 + (seed as usize % 4), 2, 1000 + seed * 7 + i as u64))
                .collect();
            let res = procrustes_consensus(&cs).unwrap();
            consensus_invariants(&res.s);
        }
    }

    #[test]
    fn consensus_maximizes_trace_over_rotation_grid() {
        // In 2D, S = U R(θ) Vᵀ stays feasible for every rotation/reflection
        // R(θ); trace(Sᵀ C̃) must peak at the computed optimum (θ = 0).
        let cs: Vec<Array2<f64>> = (0..3).map(|i| random_matrix(6, 2, 50 + i)).collect();
        let res = procrustes_consensus(&cs).unwrap();
        let mut aggregate = Array2::zeros((6, 2));
        for c in &cs {
            aggregate += c;
        }
        let centered = column_center(&aggregate);
        let svd = thin_svd(&centered).unwrap();
        let best = (res.s.t().dot(&centered)).diag().sum();
        let steps = 1000;
        for i in 0..steps {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
            let (s, c) = theta.sin_cos();
            for reflect in [false, true] {
                let r = if reflect {
                    ndarray::arr2(&[[c, s], [s, -c]])
                } else {
                    ndarray::arr2(&[[c, -s], [s, c]])
                };
                let cand = svd.u.dot(&r).dot(&svd.vt);
                let tr = (cand.t().dot(&centered)).diag().sum();
                assert!(tr <= best + 1e-9, "theta {theta} reflect {reflect}");
            }
        }
    }

    #[test]
    fn matching_loss_zero_at_consensus() {
        let q = orthonormal_centered(9, 3, 3);
        let tape = Tape::new();
        let c1 = tape.leaf(q.clone());
        let c2 = tape.leaf(q.clone());
        let (loss, _) = matching_loss(&tape, &[c1, c2]).unwrap();
        assert!(tape.scalar(loss).unwrap() < 1e-16);
    }

    #[test]
    fn matching_loss_row_shift_closed_form() {
        // C_ℓ = Q + 1cᵀ for both layers: centering removes the shift from S
        // but not from C, so the loss is 2·M·‖c‖².
        let m = 8;
        let q = orthonormal_centered(m, 2, 4);
        let c_shift = [0.3, -0.7];
        let mut shifted = q.clone();
        for mut row in shifted.rows_mut() {
            row[0] += c_shift[0];
            row[1] += c_shift[1];
        }
        let tape = Tape::new();
        let c1 = tape.leaf(shifted.clone());
        let c2 = tape.leaf(shifted.clone());
        let (loss, consensus) = matching_loss(&tape, &[c1, c2]).unwrap();
        let expected = 2.0 * m as f64 * (c_shift[0].powi(2) + c_shift[1].powi(2));
        assert!(
            (tape.scalar(loss).unwrap() - expected).abs() < 1e-8,
            "{} vs {expected}",
            tape.scalar(loss).unwrap()
        );
        assert!(frobenius_norm(&(&consensus.s - &q)) < 1e-8);
    }

    #[test]
    fn matching_loss_gradient_is_twice_residual() {
        let tape = Tape::new();
        let c1 = tape.leaf(random_matrix(6, 2, 5));
        let c2 = tape.leaf(random_matrix(6, 2, 6));
        let (loss, consensus) = matching_loss(&tape, &[c1, c2]).unwrap();
        tape.backward(loss).unwrap();
        for &c in &[c1, c2] {
            let expected = (&tape.data(c).unwrap() - &consensus.s) * 2.0;
            let got = tape.grad(c).unwrap();
            assert!(frobenius_norm(&(&got - &expected)) < 1e-12);
        }
    }

    #[test]
    fn matching_loss_gradient_matches_finite_differences() {
        // The consensus is re-solved inside the loss closure, so this also
        // exercises the envelope property of the GPA optimum.
        let inputs = vec![random_matrix(6, 2, 7), random_matrix(6, 2, 8)];
        let eval = |params: &[Array2<f64>]| {
            let tape = Tape::new();
            let vals: Vec<Value> = params.iter().map(|p| tape.leaf(p.clone())).collect();
            let (loss, _) = matching_loss(&tape, &vals).unwrap();
            tape.scalar(loss).unwrap()
        };
        let tape = Tape::new();
        let vals: Vec<Value> = inputs.iter().map(|p| tape.leaf(p.clone())).collect();
        let (loss, _) = matching_loss(&tape, &vals).unwrap();
        tape.backward(loss).unwrap();
        let analytic: Vec<Array2<f64>> =
            vals.iter().map(|&v| tape.grad(v).unwrap()).collect();
        let err = gradcheck::max_relative_error(eval, &inputs, &analytic, 1e-5);
        assert!(err < 1e-4, "relative error {err}");
    }

    // -- batch losses -------------------------------------------------------

    fn hand_batch(tape: &Tape, h_p: Vec<Array2<f64>>, h_c: Vec<Array2<f64>>, layers: Vec<usize>, n_classes: usize) -> AugmentedBatch {
        let n = layers.len();
        let mut targets = Array2::zeros((n, n_classes));
        for (i, &l) in layers.iter().enumerate() {
            targets[[i, l]] = 1.0;
        }
        AugmentedBatch {
            source_layers: layers,
            targets,
            h_common: h_c.into_iter().map(|h| tape.constant(h)).collect(),
            h_private: h_p.into_iter().map(|h| tape.constant(h)).collect(),
            node_maps: vec![Vec::new(); n],
        }
    }

    #[test]
    fn self_supervised_uniform_head_gives_log_n() {
        let tape = Tape::new();
        let batch = hand_batch(
            &tape,
            vec![random_matrix(1, 4, 10), random_matrix(1, 4, 11)],
            vec![random_matrix(1, 4, 12), random_matrix(1, 4, 13)],
            vec![0, 2],
            3,
        );
        let phi = tape.leaf(Array2::zeros((4, 3)));
        let loss = self_supervised_loss(&tape, &batch, phi).unwrap();
        assert!((tape.scalar(loss).unwrap() - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn self_supervised_saturates_to_zero_for_perfect_head() {
        let tape = Tape::new();
        let h0 = ndarray::arr2(&[[1.0, 0.0]]);
        let h1 = ndarray::arr2(&[[0.0, 1.0]]);
        let batch = hand_batch(&tape, vec![h0, h1], vec![random_matrix(1, 2, 1), random_matrix(1, 2, 2)], vec![0, 1], 2);
        // Large-margin head: logit +100 on the correct class.
        let phi = tape.leaf(ndarray::arr2(&[[100.0, -100.0], [-100.0, 100.0]]));
        let loss = self_supervised_loss(&tape, &batch, phi).unwrap();
        assert!(tape.scalar(loss).unwrap() < 1e-12);
    }

    #[test]
    fn self_supervised_matches_scalar_oracle() {
        let tape = Tape::new();
        let h0 = ndarray::arr2(&[[0.5, -0.3]]);
        let h1 = ndarray::arr2(&[[-0.2, 0.8]]);
        let phi_data = ndarray::arr2(&[[0.4, -0.1], [0.2, 0.6]]);
        let batch = hand_batch(&tape, vec![h0.clone(), h1.clone()], vec![h0.clone(), h1.clone()], vec![0, 1], 2);
        let phi = tape.leaf(phi_data.clone());
        let loss = self_supervised_loss(&tape, &batch, phi).unwrap();

        let mut expected = 0.0;
        for (h, cls) in [(h0, 0usize), (h1, 1usize)] {
            let logits = h.dot(&phi_data);
            let e: Vec<f64> = logits.iter().map(|v| v.exp()).collect();
            let z: f64 = e.iter().sum();
            expected -= (e[cls] / z).ln();
        }
        expected /= 2.0;
        assert!((tape.scalar(loss).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn causal_single_graph_equals_single_pair_cross_entropy() {
        let tape = Tape::new();
        let h_p = random_matrix(1, 3, 20);
        let h_c = random_matrix(1, 3, 21);
        let batch = hand_batch(&tape, vec![h_p.clone()], vec![h_c.clone()], vec![1], 2);
        let psi_data = random_matrix(6, 2, 22);
        let psi = tape.leaf(psi_data.clone());
        let mut rng = StdRng::seed_from_u64(0);
        let loss = causal_loss(&tape, &batch, psi, Pairing::Full, &mut rng).unwrap();

        let mut pair = Array2::zeros((1, 6));
        pair.slice_mut(ndarray::s![.., ..3]).assign(&h_p);
        pair.slice_mut(ndarray::s![.., 3..]).assign(&h_c);
        let logits = pair.dot(&psi_data);
        let e: Vec<f64> = logits.iter().map(|v| v.exp()).collect();
        let z: f64 = e.iter().sum();
        let expected = -(e[1] / z).ln();
        assert_eq!(tape.scalar(loss).unwrap(), expected);
    }

    #[test]
    fn causal_with_common_blind_psi_equals_self_supervised() {
        let tape = Tape::new();
        let batch = hand_batch(
            &tape,
            vec![random_matrix(1, 3, 30), random_matrix(1, 3, 31), random_matrix(1, 3, 32)],
            vec![random_matrix(1, 3, 33), random_matrix(1, 3, 34), random_matrix(1, 3, 35)],
            vec![0, 1, 2],
            3,
        );
        let phi_data = random_matrix(3, 3, 36);
        let phi = tape.leaf(phi_data.clone());
        // ψ ignores the common half: bottom rows zero, top rows equal φ.
        let mut psi_data = Array2::zeros((6, 3));
        psi_data.slice_mut(ndarray::s![..3, ..]).assign(&phi_data);
        let psi = tape.leaf(psi_data);
        let mut rng = StdRng::seed_from_u64(0);
        let causal = causal_loss(&tape, &batch, psi, Pairing::Full, &mut rng).unwrap();
        let selfsup = self_supervised_loss(&tape, &batch, phi).unwrap();
        assert!(
            (tape.scalar(causal).unwrap() - tape.scalar(selfsup).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn causal_full_pairing_matches_pair_enumeration_oracle() {
        let tape = Tape::new();
        let h_p = vec![random_matrix(1, 2, 40), random_matrix(1, 2, 41)];
        let h_c = vec![random_matrix(1, 2, 42), random_matrix(1, 2, 43)];
        let batch = hand_batch(&tape, h_p.clone(), h_c.clone(), vec![0, 1], 2);
        let psi_data = random_matrix(4, 2, 44);
        let psi = tape.leaf(psi_data.clone());
        let mut rng = StdRng::seed_from_u64(0);
        let loss = causal_loss(&tape, &batch, psi, Pairing::Full, &mut rng).unwrap();

        let mut expected = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let mut pair = Array2::zeros((1, 4));
                pair.slice_mut(ndarray::s![.., ..2]).assign(&h_p[i]);
                pair.slice_mut(ndarray::s![.., 2..]).assign(&h_c[j]);
                let logits = pair.dot(&psi_data);
                let e: Vec<f64> = logits.iter().map(|v| v.exp()).collect();
                let z: f64 = e.iter().sum();
                expected -= (e[i] / z).ln();
            }
        }
        expected /= 4.0;
        assert!((tape.scalar(loss).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn causal_full_pairing_is_batch_order_invariant() {
        let h_p = vec![
            random_matrix(1, 2, 50),
            random_matrix(1, 2, 51),
            random_matrix(1, 2, 52),
        ];
        let h_c = vec![
            random_matrix(1, 2, 53),
            random_matrix(1, 2, 54),
            random_matrix(1, 2, 55),
        ];
        let psi_data = random_matrix(4, 3, 56);
        let eval = |order: Vec<usize>| {
            let tape = Tape::new();
            let batch = hand_batch(
                &tape,
                order.iter().map(|&i| h_p[i].clone()).collect(),
                order.iter().map(|&i| h_c[i].clone()).collect(),
                order.clone(),
                3,
            );
            let psi = tape.leaf(psi_data.clone());
            let mut rng = StdRng::seed_from_u64(0);
            let loss = causal_loss(&tape, &batch, psi, Pairing::Full, &mut rng).unwrap();
            tape.scalar(loss).unwrap()
        };
        let a = eval(vec![0, 1, 2]);
        let b = eval(vec![2, 0, 1]);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn causal_monte_carlo_k_bounds() {
        let tape = Tape::new();
        let batch = hand_batch(
            &tape,
            vec![random_matrix(1, 2, 60), random_matrix(1, 2, 61)],
            vec![random_matrix(1, 2, 62), random_matrix(1, 2, 63)],
            vec![0, 1],
            2,
        );
        let psi = tape.leaf(random_matrix(4, 2, 64));
        let mut rng = StdRng::seed_from_u64(0);
        assert!(causal_loss(&tape, &batch, psi, Pairing::MonteCarlo(3), &mut rng).is_err());
        assert!(causal_loss(&tape, &batch, psi, Pairing::MonteCarlo(2), &mut rng).is_ok());
    }

    #[test]
    fn total_loss_weighting_and_linearity() {
        let tape = Tape::new();
        let m = tape.constant(ndarray::arr2(&[[2.0]]));
        let s = tape.constant(ndarray::arr2(&[[3.0]]));
        let c = tape.constant(ndarray::arr2(&[[5.0]]));

        let only_matching = total_loss(
            &tape,
            m,
            Some(s),
            Some(c),
            &LossWeights {
                matching: 1.0,
                self_supervised: 0.0,
                causal: 0.0,
            },
        )
        .unwrap();
        assert_eq!(tape.scalar(only_matching).unwrap(), 2.0);

        // Syn1 published weights (w_match, α, β) = (0.9, 1.5, 3.4).
        let syn1 = LossWeights {
            matching: 0.9,
            self_supervised: 1.5,
            causal: 3.4,
        };
        let combined = total_loss(&tape, m, Some(s), Some(c), &syn1).unwrap();
        let expected = 0.9 * 2.0 + 1.5 * 3.0 + 3.4 * 5.0;
        assert!((tape.scalar(combined).unwrap() - expected).abs() < 1e-12);

        let doubled = LossWeights {
            matching: 1.8,
            self_supervised: 3.0,
            causal: 6.8,
        };
        let twice = total_loss(&tape, m, Some(s), Some(c), &doubled).unwrap();
        assert!((tape.scalar(twice).unwrap() - 2.0 * expected).abs() < 1e-12);
    }

    #[test]
    fn negative_weights_rejected() {
        let w = LossWeights {
            matching: 1.0,
            self_supervised: -0.1,
            causal: 0.0,
        };
        assert!(w.validate().is_err());
    }
}
