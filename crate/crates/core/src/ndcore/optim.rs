use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::tensor::Parameter;

fn check_finite(grads: &[f64], what: &str) -> Result<()> {
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient in {what}")));
    }
    Ok(())
}

/// Plain gradient descent on a parameter set. Gradients are consumed:
/// they are reset to zero after the update.
pub fn sgd_step(params: &mut [&mut Parameter], lr: f64) -> Result<()> {
    for p in params.iter() {
        check_finite(p.grad().data(), &p.id)?;
    }
    for p in params.iter_mut() {
        let grads: Vec<f64> = p.grad().data().to_vec();
        for (v, g) in p.value_mut().data_mut().iter_mut().zip(&grads) {
            *v -= lr * g;
        }
        p.zero_grad();
    }
    Ok(())
}

/// Flat-slice SGD used for the task-model parameter vector.
pub fn sgd_step_flat(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_finite(grads, "flat sgd")?;
    for (v, g) in params.iter_mut().zip(grads) {
        *v -= lr * g;
    }
    Ok(())
}

/// One coordinate-wise Adam update with bias correction. `t` is the
/// 1-based step count after incrementing.
fn adam_update(
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    values: &mut [f64],
    grads: &[f64],
    lr: f64,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam over a set of [`Parameter`]s. Moment buffers are keyed by the
/// position of each parameter in the slice handed to [`Adam::step`], so
/// the same ordering must be used on every call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one Adam step and resets the gradients.
    pub fn step(&mut self, params: &mut [&mut Parameter], lr: f64) -> Result<()> {
        for p in params.iter() {
            check_finite(p.grad().data(), &p.id)?;
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        if self.m.len() != params.len() {
            return Err(Error::Argument(format!(
                "adam was initialized for {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.step += 1;
        for (idx, p) in params.iter_mut().enumerate() {
            if self.m[idx].len() != p.len() {
                return Err(Error::Shape(format!(
                    "adam moment {} has {} entries, parameter {} has {}",
                    idx,
                    self.m[idx].len(),
                    p.id,
                    p.len()
                )));
            }
            let grads: Vec<f64> = p.grad().data().to_vec();
            adam_update(
                &mut self.m[idx],
                &mut self.v[idx],
                self.step,
                self.beta1,
                self.beta2,
                self.eps,
                p.value_mut().data_mut(),
                &grads,
                lr,
            );
            p.zero_grad();
        }
        Ok(())
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new()
    }
}

/// Adam over one flat parameter vector (the task model's theta).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatAdam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl FlatAdam {
    pub fn new(dim: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        check_finite(grads, "flat adam")?;
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "flat adam dim {} vs params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        adam_update(
            &mut self.m,
            &mut self.v,
            self.step,
            self.beta1,
            self.beta2,
            self.eps,
            params,
            grads,
            lr,
        );
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::Tensor;

    fn param(vals: &[f64]) -> Parameter {
        Parameter::new("p", Tensor::new(vec![vals.len()], vals.to_vec()).unwrap())
    }

    #[test]
    fn zero_grad_leaves_value_unchanged() {
        let mut p = param(&[1.5, -2.0]);
        sgd_step(&mut [&mut p], 0.1).unwrap();
        assert_eq!(p.value().data(), &[1.5, -2.0]);

        let mut p = param(&[1.5, -2.0]);
        let mut adam = Adam::new();
        adam.step(&mut [&mut p], 0.1).unwrap();
        assert_eq!(p.value().data(), &[1.5, -2.0]);
    }

    #[test]
    fn sgd_one_step_arithmetic() {
        let mut p = param(&[1.0]);
        p.accumulate_grad(&[2.0]);
        sgd_step(&mut [&mut p], 0.5).unwrap();
        assert_eq!(p.value().data(), &[0.0]);
        assert_eq!(p.grad().data(), &[0.0]);
    }

    #[test]
    fn adam_first_step_matches_hand_formula() {
        // From zero moments, one step on gradient g:
        //   m_hat = g, v_hat = g^2, delta = lr * g / (|g| + eps).
        let g = 3.0_f64;
        let lr = 0.01;
        let eps = 1e-8;
        let expected = 1.0 - lr * g / (g.abs() + eps);

        let mut p = param(&[1.0]);
        p.accumulate_grad(&[g]);
        let mut adam = Adam::new();
        adam.step(&mut [&mut p], lr).unwrap();
        assert!((p.value().data()[0] - expected).abs() < 1e-15);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn two_runs_are_bit_identical() {
        let run = || {
            let mut p = param(&[0.3, -0.7]);
            let mut adam = Adam::new();
            for step in 0..5 {
                p.accumulate_grad(&[0.1 * (step as f64 + 1.0), -0.2]);
                adam.step(&mut [&mut p], 0.05).unwrap();
            }
            p.value().data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b, "optimizer must be deterministic bit-for-bit");
    }

    #[test]
    fn non_finite_grad_is_rejected() {
        let mut p = param(&[1.0]);
        p.accumulate_grad(&[f64::NAN]);
        assert!(sgd_step(&mut [&mut p], 0.1).is_err());

        let mut p = param(&[1.0]);
        p.accumulate_grad(&[f64::INFINITY]);
        let mut adam = Adam::new();
        assert!(adam.step(&mut [&mut p], 0.1).is_err());
    }

    #[test]
    fn flat_and_parameter_adam_agree() {
        let mut p = param(&[0.5, 1.5]);
        p.accumulate_grad(&[0.2, -0.4]);
        let mut adam = Adam::new();
        adam.step(&mut [&mut p], 0.03).unwrap();

        let mut flat = vec![0.5, 1.5];
        let mut fadam = FlatAdam::new(2);
        fadam.step(&mut flat, &[0.2, -0.4], 0.03).unwrap();
        assert_eq!(p.value().data(), flat.as_slice());
    }
}
