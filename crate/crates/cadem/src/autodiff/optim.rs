//! Persistent parameter storage and the Adam optimizer.

use ndarray::Array2;
use rand::Rng;

use crate::error::{CademError, Result};

/// Named trainable parameters with gradient buffers. Lives across epochs;
/// bound to a fresh tape each forward pass.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    data: Vec<Array2<f64>>,
    grads: Vec<Array2<f64>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a parameter; returns its index.
    pub fn add(&mut self, name: impl Into<String>, data: Array2<f64>) -> usize {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.grads.push(Array2::zeros(data.raw_dim()));
        self.data.push(data);
        self.names.push(name);
        self.names.len() - 1
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn data(&self, idx: usize) -> &Array2<f64> {
        &self.data[idx]
    }

    pub fn data_mut(&mut self, idx: usize) -> &mut Array2<f64> {
        &mut self.data[idx]
    }

    pub fn grad(&self, idx: usize) -> &Array2<f64> {
        &self.grads[idx]
    }

    pub fn set_grad(&mut self, idx: usize, grad: Array2<f64>) -> Result<()> {
        if grad.raw_dim() != self.data[idx].raw_dim() {
            return Err(CademError::Shape(format!(
                "gradient shape {:?} for parameter {} of shape {:?}",
                grad.dim(),
                self.names[idx],
                self.data[idx].dim()
            )));
        }
        self.grads[idx] = grad;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    /// Flat view of all parameters, in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.data.iter().flat_map(|d| d.iter().copied()).collect()
    }

    /// Overwrite all parameters from a flat buffer in registration order.
    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.data.iter().map(|d| d.len()).sum();
        if flat.len() != total {
            return Err(CademError::Shape(format!(
                "flat buffer has {} values, parameters need {total}",
                flat.len()
            )));
        }
        let mut at = 0;
        for d in &mut self.data {
            let n = d.len();
            for (dst, src) in d.iter_mut().zip(&flat[at..at + n]) {
                *dst = *src;
            }
            at += n;
        }
        Ok(())
    }
}

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
pub(crate) fn uniform_init<R: Rng>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Array2<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

/// Parameter indices sharing a learning rate and weight decay.
#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub indices: Vec<usize>,
    pub lr: f64,
    pub weight_decay: f64,
}

/// Adam with L2 weight decay folded into the gradient, one moment pair per
/// parameter. State persists across steps.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    moments: Vec<Option<(Array2<f64>, Array2<f64>)>>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }

    /// One optimization step over the given groups. Parameters outside every
    /// group are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, groups: &[ParamGroup]) -> Result<()> {
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        let mut seen = vec![false; store.len()];
        for group in groups {
            for &idx in &group.indices {
                if idx >= store.len() {
                    return Err(CademError::InvalidArgument(format!(
                        "parameter index {idx} out of range"
                    )));
                }
                if seen[idx] {
                    return Err(CademError::Contract(format!(
                        "parameter {} appears in more than one group",
                        store.name(idx)
                    )));
                }
                seen[idx] = true;
                if store.grad(idx).iter().any(|v| !v.is_finite()) {
                    return Err(CademError::NonFinite(format!(
                        "gradient of parameter {}",
                        store.name(idx)
                    )));
                }
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);

        for group in groups {
            for &idx in &group.indices {
                let g = if group.weight_decay != 0.0 {
                    store.grad(idx) + &(store.data(idx) * group.weight_decay)
                } else {
                    store.grad(idx).clone()
                };
                let (m, v) = self.moments[idx].get_or_insert_with(|| {
                    (
                        Array2::zeros(g.raw_dim()),
                        Array2::zeros(g.raw_dim()),
                    )
                });
                m.zip_mut_with(&g, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
                v.zip_mut_with(&g, |vi, &gi| {
                    *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi
                });
                let lr = group.lr;
                let eps = self.eps;
                let data = store.data_mut(idx);
                ndarray::Zip::from(&mut *data)
                    .and(&*m)
                    .and(&*v)
                    .for_each(|p, &mi, &vi| {
                        let m_hat = mi / bc1;
                        let v_hat = vi / bc2;
                        *p -= lr * m_hat / (v_hat.sqrt() + eps);
                    });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn single_group(store: &ParamStore, lr: f64, wd: f64) -> Vec<ParamGroup> {
        vec![ParamGroup {
            indices: (0..store.len()).collect(),
            lr,
            weight_decay: wd,
        }]
    }

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        let mut store = ParamStore::new();
        store.add("w", arr2(&[[1.0, -2.0]]));
        let mut adam = Adam::with_defaults();
        let groups = single_group(&store, 1e-2, 0.0);
        adam.step(&mut store, &groups).unwrap();
        assert_eq!(store.data(0), &arr2(&[[1.0, -2.0]]));
    }

    #[test]
    fn first_step_matches_closed_form() {
        // With m_hat = g and v_hat = g^2, step = -lr * g / (|g| + eps).
        let mut store = ParamStore::new();
        store.add("w", arr2(&[[0.0, 0.0]]));
        store.set_grad(0, arr2(&[[0.5, -2.0]])).unwrap();
        let mut adam = Adam::with_defaults();
        let groups = single_group(&store, 1e-2, 0.0);
        adam.step(&mut store, &groups).unwrap();
        for (p, g) in store.data(0).iter().zip([0.5f64, -2.0]) {
            let expected = -1e-2 * g / (g.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn per_group_learning_rates_apply_independently() {
        let mut store = ParamStore::new();
        store.add("fast", arr2(&[[0.0]]));
        store.add("slow", arr2(&[[0.0]]));
        store.set_grad(0, arr2(&[[1.0]])).unwrap();
        store.set_grad(1, arr2(&[[1.0]])).unwrap();
        let groups = vec![
            ParamGroup {
                indices: vec![0],
                lr: 1e-2,
                weight_decay: 0.0,
            },
            ParamGroup {
                indices: vec![1],
                lr: 1e-4,
                weight_decay: 0.0,
            },
        ];
        let mut adam = Adam::with_defaults();
        adam.step(&mut store, &groups).unwrap();
        let ratio = store.data(0)[[0, 0]] / store.data(1)[[0, 0]];
        assert!((ratio - 100.0).abs() < 1e-6, "ratio {ratio}");
    }

    #[test]
    fn nan_grad_aborts_with_parameter_name() {
        let mut store = ParamStore::new();
        store.add("phi.weight", arr2(&[[0.0]]));
        store.set_grad(0, arr2(&[[f64::NAN]])).unwrap();
        let mut adam = Adam::with_defaults();
        let groups = single_group(&store, 1e-2, 0.0);
        let err = adam.step(&mut store, &groups).unwrap_err();
        assert!(err.to_string().contains("phi.weight"));
    }

    #[test]
    fn weight_decay_pulls_parameters_toward_zero() {
        let mut store = ParamStore::new();
        store.add("w", arr2(&[[1.0]]));
        // zero gradient: only decay drives the update
        let mut adam = Adam::with_defaults();
        let groups = single_group(&store, 1e-2, 1e-1);
        adam.step(&mut store, &groups).unwrap();
        assert!(store.data(0)[[0, 0]] < 1.0);
    }

    #[test]
    fn flatten_unflatten_roundtrip() {
        let mut store = ParamStore::new();
        store.add("a", arr2(&[[1.0, 2.0]]));
        store.add("b", arr2(&[[3.0], [4.0]]));
        let flat = store.flatten();
        let mut other = store.clone();
        other.data_mut(0).fill(0.0);
        other.unflatten(&flat).unwrap();
        assert_eq!(other.data(0), store.data(0));
        assert_eq!(other.data(1), store.data(1));
    }
}
