//! Central finite-difference gradient oracle.
//!
//! Lives next to the layers so every analytic backward pass in the
//! crate can be checked against the same independent estimate.

use super::tensor::Parameter;

/// Default perturbation; balances truncation against round-off in f64.
pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Central differences of a scalar function of a model's parameters.
///
/// `params` projects the mutable parameter set out of the model and
/// `eval` computes the scalar with the parameters as they currently
/// are; each coordinate is perturbed in place and restored exactly.
/// Returns one gradient vector per parameter, in projection order.
pub fn finite_difference_grad<M>(
    model: &mut M,
    mut params: impl FnMut(&mut M) -> Vec<&mut Parameter>,
    mut eval: impl FnMut(&mut M) -> f64,
    eps: f64,
) -> Vec<Vec<f64>> {
    assert!(eps > 0.0, "fd eps must be positive");
    let sizes: Vec<usize> = params(model).iter().map(|p| p.len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (pi, &n) in sizes.iter().enumerate() {
        let mut grad = vec![0.0; n];
        for (i, slot) in grad.iter_mut().enumerate() {
            let orig = params(model)[pi].value().data()[i];
            params(model)[pi].value_mut().data_mut()[i] = orig + eps;
            let plus = eval(model);
            params(model)[pi].value_mut().data_mut()[i] = orig - eps;
            let minus = eval(model);
            params(model)[pi].value_mut().data_mut()[i] = orig;
            *slot = (plus - minus) / (2.0 * eps);
        }
        out.push(grad);
    }
    out
}

/// Central differences of a scalar function over a flat vector.
pub fn fd_grad_flat(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    assert!(eps > 0.0, "fd eps must be positive");
    let mut work = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let plus = f(&work);
        work[i] = orig - eps;
        let minus = f(&work);
        work[i] = orig;
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Worst relative disagreement between analytic and numeric gradients,
/// with an absolute floor so near-zero entries do not blow up the ratio.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
