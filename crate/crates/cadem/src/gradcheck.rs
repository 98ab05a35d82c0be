//! Central finite-difference gradient checking.
//!
//! The checker only ever evaluates the loss function forward, so it stays
//! independent of the reverse-mode path it is used to validate.

use ndarray::Array2;

/// Default perturbation for central differences.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error between an analytic and a numeric gradient entry.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Numeric gradients of `loss` with respect to each input matrix, via central
/// differences with step `h`. `loss` must be a pure function of its inputs.
pub fn finite_difference_gradients<F>(loss: F, inputs: &[Array2<f64>], h: f64) -> Vec<Array2<f64>>
where
    F: Fn(&[Array2<f64>]) -> f64,
{
    let mut work: Vec<Array2<f64>> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for p in 0..inputs.len() {
        let mut g = Array2::zeros(inputs[p].raw_dim());
        for idx in 0..inputs[p].len() {
            let (r, c) = (idx / inputs[p].ncols(), idx % inputs[p].ncols());
            let orig = work[p][[r, c]];
            work[p][[r, c]] = orig + h;
            let up = loss(&work);
            work[p][[r, c]] = orig - h;
            let down = loss(&work);
            work[p][[r, c]] = orig;
            g[[r, c]] = (up - down) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Largest relative error between analytic and finite-difference gradients.
pub fn max_relative_error<F>(
    loss: F,
    inputs: &[Array2<f64>],
    analytic: &[Array2<f64>],
    h: f64,
) -> f64
where
    F: Fn(&[Array2<f64>]) -> f64,
{
    let numeric = finite_difference_gradients(loss, inputs, h);
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        for (&av, &nv) in a.iter().zip(n.iter()) {
            worst = worst.max(relative_error(av, nv));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn finite_differences_recover_quadratic_gradient() {
        // f(x) = sum(x^2) has gradient 2x.
        let x = arr2(&[[1.0, -0.5], [2.0, 0.25]]);
        let grads = finite_difference_gradients(
            |inputs| inputs[0].iter().map(|v| v * v).sum(),
            &[x.clone()],
            1e-6,
        );
        for (g, v) in grads[0].iter().zip(x.iter()) {
            assert!((g - 2.0 * v).abs() < 1e-8);
        }
    }

    #[test]
    fn relative_error_uses_unit_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-9).abs() < 1e-18);
    }
}
