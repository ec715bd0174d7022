use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::taskgen::{DomainSuite, Example, Label};
use crate::StreamRng;

/// Anything the meta-learner can adapt: a scalar objective over a flat
/// parameter vector, differentiable by an analytic backward pass.
///
/// Implementations must be pure functions of `(params, data)`; they are
/// evaluated from multiple threads during a meta-batch.
pub trait AdaptiveModel: Sync {
    fn param_count(&self) -> usize;
    /// Mean per-example loss.
    fn loss(&self, params: &[f64], data: &[Example]) -> f64;
    /// Mean per-example loss and its gradient.
    fn loss_grad(&self, params: &[f64], data: &[Example]) -> (f64, Vec<f64>);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossKind {
    SquaredError,
    CrossEntropy,
}

/// The task network: input -> hidden -> hidden -> output with tanh
/// between the affine stages. Parameters live in one flat vector so
/// adaptation, Hessian-vector products, and finite differences all work
/// on plain slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub loss_kind: LossKind,
}

impl TaskModel {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, loss_kind: LossKind) -> Self {
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            loss_kind,
        }
    }

    /// Model matching a suite's example format.
    pub fn for_suite(suite: &DomainSuite, hidden_dim: usize) -> Self {
        let family = &suite.sources[0].family;
        let loss_kind = if family.is_classification() {
            LossKind::CrossEntropy
        } else {
            LossKind::SquaredError
        };
        Self::new(family.input_dim(), hidden_dim, family.output_dim(), loss_kind)
    }

    // Layout: w1 [h,in] b1 [h] w2 [h,h] b2 [h] w3 [out,h] b3 [out]
    fn sizes(&self) -> [usize; 6] {
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        [h * i, h, h * h, h, o * h, o]
    }

    fn offsets(&self) -> [usize; 6] {
        let sizes = self.sizes();
        let mut off = [0usize; 6];
        for i in 1..6 {
            off[i] = off[i - 1] + sizes[i - 1];
        }
        off
    }

    /// Xavier-uniform initialization of a fresh parameter vector.
    pub fn init_params(&self, rng: &mut StreamRng) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        let off = self.offsets();
        let sizes = self.sizes();
        let bounds = [
            (6.0 / (self.input_dim + self.hidden_dim) as f64).sqrt(),
            0.0,
            (6.0 / (2 * self.hidden_dim) as f64).sqrt(),
            0.0,
            (6.0 / (self.hidden_dim + self.output_dim) as f64).sqrt(),
            0.0,
        ];
        for (i, bound) in bounds.iter().enumerate() {
            if *bound > 0.0 {
                for p in &mut params[off[i]..off[i] + sizes[i]] {
                    *p = rng.gen_range(-bound..*bound);
                }
            }
        }
        params
    }

    pub fn predict(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.forward(params, x).output
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> ForwardPass {
        debug_assert_eq!(x.len(), self.input_dim);
        debug_assert_eq!(params.len(), self.param_count());
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let off = self.offsets();
        let (w1, b1) = (&params[off[0]..off[1]], &params[off[1]..off[2]]);
        let (w2, b2) = (&params[off[2]..off[3]], &params[off[3]..off[4]]);
        let (w3, b3) = (&params[off[4]..off[5]], &params[off[5]..]);

        let mut a1 = vec![0.0; h];
        for r in 0..h {
            let row = &w1[r * i..(r + 1) * i];
            let z: f64 = b1[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            a1[r] = z.tanh();
        }
        let mut a2 = vec![0.0; h];
        for r in 0..h {
            let row = &w2[r * h..(r + 1) * h];
            let z: f64 = b2[r] + row.iter().zip(&a1).map(|(w, v)| w * v).sum::<f64>();
            a2[r] = z.tanh();
        }
        let mut output = vec![0.0; o];
        for r in 0..o {
            let row = &w3[r * h..(r + 1) * h];
            output[r] = b3[r] + row.iter().zip(&a2).map(|(w, v)| w * v).sum::<f64>();
        }
        ForwardPass { a1, a2, output }
    }

    fn example_loss_and_delta(&self, out: &[f64], label: &Label) -> (f64, Vec<f64>) {
        match (self.loss_kind, label) {
            (LossKind::SquaredError, Label::Real(y)) => {
                debug_assert_eq!(y.len(), out.len());
                let mut loss = 0.0;
                let mut delta = vec![0.0; out.len()];
                for (d, (&p, &t)) in delta.iter_mut().zip(out.iter().zip(y)) {
                    let r = p - t;
                    loss += r * r;
                    *d = 2.0 * r;
                }
                (loss, delta)
            }
            (LossKind::CrossEntropy, Label::Class(c)) => {
                let probs = crate::ndcore::softmax(out).expect("non-empty logits");
                let loss = -(probs[*c].max(1e-300)).ln();
                let mut delta = probs;
                delta[*c] -= 1.0;
                (loss, delta)
            }
            _ => panic!("label kind does not match model loss"),
        }
    }
}

struct ForwardPass {
    a1: Vec<f64>,
    a2: Vec<f64>,
    output: Vec<f64>,
}

impl AdaptiveModel for TaskModel {
    fn param_count(&self) -> usize {
        self.sizes().iter().sum()
    }

    fn loss(&self, params: &[f64], data: &[Example]) -> f64 {
        assert!(!data.is_empty(), "loss over empty data");
        let total: f64 = data
            .iter()
            .map(|ex| self.example_loss_and_delta(&self.forward(params, &ex.x).output, &ex.label).0)
            .sum();
        total / data.len() as f64
    }

    fn loss_grad(&self, params: &[f64], data: &[Example]) -> (f64, Vec<f64>) {
        assert!(!data.is_empty(), "loss over empty data");
        let (i, h, o) = (self.input_dim, self.hidden_dim, self.output_dim);
        let off = self.offsets();
        let mut grad = vec![0.0; self.param_count()];
        let mut total = 0.0;
        let inv_n = 1.0 / data.len() as f64;

        for ex in data {
            let pass = self.forward(params, &ex.x);
            let (loss, mut dz3) = self.example_loss_and_delta(&pass.output, &ex.label);
            total += loss;
            for d in &mut dz3 {
                *d *= inv_n;
            }

            let (w2, w3) = (&params[off[2]..off[3]], &params[off[4]..off[5]]);
            {
                let (gw3, rest) = grad[off[4]..].split_at_mut(o * h);
                for r in 0..o {
                    rest[r] += dz3[r];
                    let row = &mut gw3[r * h..(r + 1) * h];
                    for c in 0..h {
                        row[c] += dz3[r] * pass.a2[c];
                    }
                }
            }
            let mut dz2 = vec![0.0; h];
            for c in 0..h {
                let mut da = 0.0;
                for r in 0..o {
                    da += dz3[r] * w3[r * h + c];
                }
                dz2[c] = da * (1.0 - pass.a2[c] * pass.a2[c]);
            }
            {
                let (gw2, rest) = grad[off[2]..off[4]].split_at_mut(h * h);
                for r in 0..h {
                    rest[r] += dz2[r];
                    let row = &mut gw2[r * h..(r + 1) * h];
                    for c in 0..h {
                        row[c] += dz2[r] * pass.a1[c];
                    }
                }
            }
            let mut dz1 = vec![0.0; h];
            for c in 0..h {
                let mut da = 0.0;
                for r in 0..h {
                    da += dz2[r] * w2[r * h + c];
                }
                dz1[c] = da * (1.0 - pass.a1[c] * pass.a1[c]);
            }
            {
                let (gw1, rest) = grad[off[0]..off[2]].split_at_mut(h * i);
                for r in 0..h {
                    rest[r] += dz1[r];
                    let row = &mut gw1[r * i..(r + 1) * i];
                    for c in 0..i {
                        row[c] += dz1[r] * ex.x[c];
                    }
                }
            }
        }
        (total * inv_n, grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::{fd_grad_flat, max_rel_error};
    use crate::rng::{stream, tags};

    fn regression_examples(n: usize, seed: u64) -> Vec<Example> {
        let mut rng = stream(seed, tags::TASK_DRAW, 90);
        (0..n)
            .map(|_| Example {
                x: vec![rng.gen_range(-2.0..2.0)],
                label: Label::Real(vec![rng.gen_range(-1.0..1.0)]),
            })
            .collect()
    }

    #[test]
    fn loss_grad_matches_finite_differences() {
        let model = TaskModel::new(1, 5, 1, LossKind::SquaredError);
        let mut rng = stream(3, tags::THETA_INIT, 0);
        let params = model.init_params(&mut rng);
        let data = regression_examples(4, 3);
        let (_, analytic) = model.loss_grad(&params, &data);
        let numeric = fd_grad_flat(&mut |p| model.loss(p, &data), &params, 1e-5);
        assert!(max_rel_error(&analytic, &numeric, 1e-6) < 1e-5);
    }

    #[test]
    fn classification_grad_matches_finite_differences() {
        let model = TaskModel::new(2, 4, 3, LossKind::CrossEntropy);
        let mut rng = stream(8, tags::THETA_INIT, 0);
        let params = model.init_params(&mut rng);
        let data: Vec<Example> = (0..6)
            .map(|i| Example {
                x: vec![(i as f64 * 0.37).sin(), (i as f64 * 0.61).cos()],
                label: Label::Class(i % 3),
            })
            .collect();
        let (_, analytic) = model.loss_grad(&params, &data);
        let numeric = fd_grad_flat(&mut |p| model.loss(p, &data), &params, 1e-5);
        assert!(max_rel_error(&analytic, &numeric, 1e-6) < 1e-5);
    }

    #[test]
    fn zero_predictor_on_unit_labels_has_unit_mse() {
        let model = TaskModel::new(1, 3, 1, LossKind::SquaredError);
        let params = vec![0.0; model.param_count()];
        let data = vec![
            Example {
                x: vec![0.5],
                label: Label::Real(vec![1.0]),
            },
            Example {
                x: vec![-0.5],
                label: Label::Real(vec![-1.0]),
            },
        ];
        assert_eq!(model.loss(&params, &data), 1.0);
    }
}
