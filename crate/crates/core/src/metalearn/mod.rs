//! Inner/outer meta-training loops.
//!
//! The inner loop adapts shared parameters theta to one task's support
//! set; the outer loop updates theta from the query losses of the
//! adapted models. Four variants: full MAML (second-order term via
//! Hessian-vector products), first-order MAML, Reptile, and a plain
//! multi-task mode with no inner adaptation.

mod model;

pub use model::{AdaptiveModel, LossKind, TaskModel};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ndcore::FlatAdam;
use crate::taskgen::{Example, TaskInstance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaVariant {
    Maml,
    Fomaml,
    Reptile,
    Mtl,
}

impl FromStr for MetaVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maml" => Ok(MetaVariant::Maml),
            "fomaml" => Ok(MetaVariant::Fomaml),
            "reptile" => Ok(MetaVariant::Reptile),
            "mtl" => Ok(MetaVariant::Mtl),
            other => Err(Error::Config(format!("unknown meta variant '{other}'"))),
        }
    }
}

impl fmt::Display for MetaVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MetaVariant::Maml => "maml",
            MetaVariant::Fomaml => "fomaml",
            MetaVariant::Reptile => "reptile",
            MetaVariant::Mtl => "mtl",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterOptKind {
    Sgd,
    Adam,
}

impl FromStr for OuterOptKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OuterOptKind::Sgd),
            "adam" => Ok(OuterOptKind::Adam),
            other => Err(Error::Config(format!("unknown outer optimizer '{other}'"))),
        }
    }
}

impl fmt::Display for OuterOptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OuterOptKind::Sgd => write!(f, "sgd"),
            OuterOptKind::Adam => write!(f, "adam"),
        }
    }
}

/// Hyperparameters of the meta-training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaConfig {
    pub variant: MetaVariant,
    /// Inner (adaptation) step size.
    pub alpha: f64,
    pub inner_steps: usize,
    /// Outer (meta) step size.
    pub beta: f64,
    /// Domains sampled per meta-batch (M).
    pub batch_domains: usize,
    pub outer_opt: OuterOptKind,
    /// Base perturbation for the central-difference Hessian-vector
    /// product; scaled by `1 + |theta|_inf` at use.
    pub hvp_eps: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            variant: MetaVariant::Fomaml,
            alpha: 0.01,
            inner_steps: 1,
            beta: 0.001,
            batch_domains: 3,
            outer_opt: OuterOptKind::Adam,
            hvp_eps: 1e-4,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || self.beta <= 0.0 {
            return Err(Error::Config("alpha and beta must be positive".into()));
        }
        if self.batch_domains < 1 {
            return Err(Error::Config("batch_domains must be >= 1".into()));
        }
        if self.hvp_eps <= 0.0 {
            return Err(Error::Config("hvp_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one outer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaBatchResult {
    pub domain_ids: Vec<usize>,
    pub task_losses: Vec<f64>,
    pub outer_grad_norm: f64,
}

/// Outer optimizer state over the flat theta vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum OuterOptimizer {
    Sgd,
    Adam(FlatAdam),
}

impl OuterOptimizer {
    pub fn new(kind: OuterOptKind, dim: usize) -> Self {
        match kind {
            OuterOptKind::Sgd => OuterOptimizer::Sgd,
            OuterOptKind::Adam => OuterOptimizer::Adam(FlatAdam::new(dim)),
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) -> Result<()> {
        match self {
            OuterOptimizer::Sgd => crate::ndcore::sgd_step_flat(theta, grad, lr),
            OuterOptimizer::Adam(adam) => adam.step(theta, grad, lr),
        }
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Gradient-descent adaptation on the support set. The input theta is
/// never mutated; the adapted copy is returned.
pub fn inner_adapt<M: AdaptiveModel>(
    model: &M,
    theta: &[f64],
    support: &[Example],
    alpha: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    if support.is_empty() {
        return Err(Error::Argument("inner_adapt on empty support set".into()));
    }
    let mut adapted = theta.to_vec();
    for _ in 0..steps {
        let (loss, grad) = model.loss_grad(&adapted, support);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("inner adaptation loss {loss}")));
        }
        for (p, g) in adapted.iter_mut().zip(&grad) {
            *p -= alpha * g;
        }
    }
    Ok(adapted)
}

/// Mean per-example loss of adapted parameters on a query set.
pub fn query_loss<M: AdaptiveModel>(model: &M, theta_prime: &[f64], query: &[Example]) -> f64 {
    model.loss(theta_prime, query)
}

/// Central-difference Hessian-vector product of the support loss.
fn hvp<M: AdaptiveModel>(
    model: &M,
    theta: &[f64],
    data: &[Example],
    v: &[f64],
    base_eps: f64,
) -> Vec<f64> {
    let norm = l2_norm(v);
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    let delta = base_eps * (1.0 + linf_norm(theta));
    let mut plus = theta.to_vec();
    let mut minus = theta.to_vec();
    for i in 0..theta.len() {
        let step = delta * v[i] / norm;
        plus[i] += step;
        minus[i] -= step;
    }
    let (_, gp) = model.loss_grad(&plus, data);
    let (_, gm) = model.loss_grad(&minus, data);
    gp.iter()
        .zip(&gm)
        .map(|(a, b)| (a - b) * norm / (2.0 * delta))
        .collect()
}

struct TaskContribution {
    query_loss: f64,
    /// Gradient w.r.t. theta (gradient variants) or the adapted delta
    /// theta' - theta (reptile).
    direction: Vec<f64>,
}

fn task_contribution<M: AdaptiveModel>(
    model: &M,
    theta: &[f64],
    task: &TaskInstance,
    cfg: &MetaConfig,
) -> Result<TaskContribution> {
    match cfg.variant {
        MetaVariant::Mtl => {
            let mut combined = task.support.clone();
            combined.extend_from_slice(&task.query);
            let (loss, grad) = model.loss_grad(theta, &combined);
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("training loss {loss}")));
            }
            Ok(TaskContribution {
                query_loss: loss,
                direction: grad,
            })
        }
        MetaVariant::Reptile => {
            let adapted = inner_adapt(model, theta, &task.support, cfg.alpha, cfg.inner_steps)?;
            let ql = query_loss(model, &adapted, &task.query);
            let direction = adapted.iter().zip(theta).map(|(a, t)| a - t).collect();
            Ok(TaskContribution {
                query_loss: ql,
                direction,
            })
        }
        MetaVariant::Fomaml | MetaVariant::Maml => {
            // Keep the parameter trajectory so the second-order term can
            // be backpropagated through every inner step.
            let mut path = Vec::with_capacity(cfg.inner_steps);
            let mut adapted = theta.to_vec();
            for _ in 0..cfg.inner_steps {
                let (loss, grad) = model.loss_grad(&adapted, &task.support);
                if !loss.is_finite() {
                    return Err(Error::Numeric(format!("inner adaptation loss {loss}")));
                }
                path.push(adapted.clone());
                for (p, g) in adapted.iter_mut().zip(&grad) {
                    *p -= cfg.alpha * g;
                }
            }
            let (ql, mut grad) = model.loss_grad(&adapted, &task.query);
            if !ql.is_finite() {
                return Err(Error::Numeric(format!("query loss {ql}")));
            }
            if cfg.variant == MetaVariant::Maml {
                for step_theta in path.iter().rev() {
                    let hv = hvp(model, step_theta, &task.support, &grad, cfg.hvp_eps);
                    for (g, h) in grad.iter_mut().zip(&hv) {
                        *g -= cfg.alpha * h;
                    }
                }
            }
            Ok(TaskContribution {
                query_loss: ql,
                direction: grad,
            })
        }
    }
}

/// Outer gradient of the summed query losses over a task batch, without
/// applying it. Defined for the gradient-based variants; Reptile has no
/// outer gradient and is handled inside [`meta_step`].
pub fn outer_gradient<M: AdaptiveModel>(
    model: &M,
    theta: &[f64],
    tasks: &[TaskInstance],
    cfg: &MetaConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if cfg.variant == MetaVariant::Reptile {
        return Err(Error::Argument("reptile has no outer gradient".into()));
    }
    let contribs = collect_contributions(model, theta, tasks, cfg, false)?;
    let mut grad = vec![0.0; theta.len()];
    let mut losses = Vec::with_capacity(contribs.len());
    for c in &contribs {
        for (g, d) in grad.iter_mut().zip(&c.direction) {
            *g += d;
        }
        losses.push(c.query_loss);
    }
    Ok((grad, losses))
}

fn collect_contributions<M: AdaptiveModel>(
    model: &M,
    theta: &[f64],
    tasks: &[TaskInstance],
    cfg: &MetaConfig,
    parallel: bool,
) -> Result<Vec<TaskContribution>> {
    if parallel && tasks.len() > 1 {
        // Ordered collect keeps the reduction order fixed regardless of
        // thread scheduling, so results match the sequential path bitwise.
        tasks
            .par_iter()
            .map(|t| task_contribution(model, theta, t, cfg))
            .collect()
    } else {
        tasks
            .iter()
            .map(|t| task_contribution(model, theta, t, cfg))
            .collect()
    }
}

/// One outer update of theta on a batch of `batch_domains` tasks.
pub fn meta_step<M: AdaptiveModel>(
    model: &M,
    theta: &mut Vec<f64>,
    opt: &mut OuterOptimizer,
    tasks: &[TaskInstance],
    cfg: &MetaConfig,
    parallel: bool,
) -> Result<MetaBatchResult> {
    if tasks.len() != cfg.batch_domains {
        return Err(Error::Config(format!(
            "meta_step expects {} tasks, got {}",
            cfg.batch_domains,
            tasks.len()
        )));
    }
    let contribs = collect_contributions(model, theta, tasks, cfg, parallel)?;
    let domain_ids = tasks.iter().map(|t| t.domain_id).collect();
    let task_losses: Vec<f64> = contribs.iter().map(|c| c.query_loss).collect();

    let norm;
    match cfg.variant {
        MetaVariant::Reptile => {
            // theta <- theta + beta * mean(theta'_j - theta)
            let mut direction = vec![0.0; theta.len()];
            for c in &contribs {
                for (d, v) in direction.iter_mut().zip(&c.direction) {
                    *d += v;
                }
            }
            let inv = 1.0 / contribs.len() as f64;
            for d in &mut direction {
                *d *= inv;
            }
            norm = l2_norm(&direction);
            if !norm.is_finite() {
                return Err(Error::Numeric("non-finite reptile direction".into()));
            }
            for (p, d) in theta.iter_mut().zip(&direction) {
                *p += cfg.beta * d;
            }
        }
        _ => {
            let mut grad = vec![0.0; theta.len()];
            for c in &contribs {
                for (g, d) in grad.iter_mut().zip(&c.direction) {
                    *g += d;
                }
            }
            norm = l2_norm(&grad);
            opt.step(theta, &grad, cfg.beta)?;
        }
    }

    Ok(MetaBatchResult {
        domain_ids,
        task_losses,
        outer_grad_norm: norm,
    })
}

/// Post-adaptation evaluation over a fixed set of held-out tasks:
/// adapt on the first `shots` support examples, score on the query set.
/// Returns (mean, sample std, per-task losses).
pub fn evaluate_adaptation<M: AdaptiveModel>(
    model: &M,
    theta: &[f64],
    tasks: &[TaskInstance],
    shots: usize,
    steps: usize,
    alpha: f64,
) -> Result<(f64, f64, Vec<f64>)> {
    if tasks.is_empty() {
        return Err(Error::Argument("evaluate_adaptation needs >= 1 task".into()));
    }
    let mut losses = Vec::with_capacity(tasks.len());
    for task in tasks {
        if shots > task.support.len() {
            return Err(Error::Argument(format!(
                "shots {} exceeds support size {}",
                shots,
                task.support.len()
            )));
        }
        let adapted = if steps == 0 {
            theta.to_vec()
        } else {
            inner_adapt(model, theta, &task.support[..shots], alpha, steps)?
        };
        losses.push(query_loss(model, &adapted, &task.query));
    }
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    let var = if losses.len() > 1 {
        losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (losses.len() - 1) as f64
    } else {
        0.0
    };
    Ok((mean, var.sqrt(), losses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::{fd_grad_flat, max_rel_error};
    use crate::rng::{stream, tags};
    use crate::taskgen::Label;
    use rand::Rng;

    /// loss(theta) = mean_i (theta_0 - x_i)^2 — a 1-parameter quadratic.
    struct Quadratic;

    impl AdaptiveModel for Quadratic {
        fn param_count(&self) -> usize {
            1
        }
        fn loss(&self, params: &[f64], data: &[Example]) -> f64 {
            data.iter()
                .map(|e| (params[0] - e.x[0]).powi(2))
                .sum::<f64>()
                / data.len() as f64
        }
        fn loss_grad(&self, params: &[f64], data: &[Example]) -> (f64, Vec<f64>) {
            let g = data.iter().map(|e| 2.0 * (params[0] - e.x[0])).sum::<f64>()
                / data.len() as f64;
            (self.loss(params, data), vec![g])
        }
    }

    /// loss(theta) = mean_i x_i . theta — linear, so the Hessian is zero.
    struct LinearLoss {
        dim: usize,
    }

    impl AdaptiveModel for LinearLoss {
        fn param_count(&self) -> usize {
            self.dim
        }
        fn loss(&self, params: &[f64], data: &[Example]) -> f64 {
            data.iter()
                .map(|e| e.x.iter().zip(params).map(|(a, b)| a * b).sum::<f64>())
                .sum::<f64>()
                / data.len() as f64
        }
        fn loss_grad(&self, params: &[f64], data: &[Example]) -> (f64, Vec<f64>) {
            let mut g = vec![0.0; params.len()];
            for e in data {
                for (gi, xi) in g.iter_mut().zip(&e.x) {
                    *gi += xi / data.len() as f64;
                }
            }
            (self.loss(params, data), g)
        }
    }

    fn point(x: f64) -> Example {
        Example {
            x: vec![x],
            label: Label::Real(vec![0.0]),
        }
    }

    fn task_1d(support: &[f64], query: &[f64]) -> TaskInstance {
        TaskInstance {
            domain_id: 0,
            support: support.iter().copied().map(point).collect(),
            query: query.iter().copied().map(point).collect(),
        }
    }

    #[test]
    fn zero_step_size_is_identity() {
        let adapted = inner_adapt(&Quadratic, &[1.5], &[point(0.0)], 0.0, 3).unwrap();
        assert_eq!(adapted, vec![1.5]);
    }

    #[test]
    fn quadratic_one_step_with_half_rate_solves_exactly() {
        // d/dtheta (theta - c)^2 = 2(theta - c); alpha = 0.5 lands on c.
        let adapted = inner_adapt(&Quadratic, &[10.0], &[point(3.0)], 0.5, 1).unwrap();
        assert_eq!(adapted, vec![3.0]);
    }

    #[test]
    fn multi_step_adaptation_matches_hand_iteration() {
        let support = [1.0, 2.0, -1.0, 4.0];
        let data: Vec<Example> = support.iter().copied().map(point).collect();
        let alpha = 0.1;
        let mut expect = 0.5;
        for _ in 0..3 {
            let g: f64 =
                support.iter().map(|x| 2.0 * (expect - x)).sum::<f64>() / support.len() as f64;
            expect -= alpha * g;
        }
        let adapted = inner_adapt(&Quadratic, &[0.5], &data, alpha, 3).unwrap();
        assert!((adapted[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn inner_adapt_never_mutates_theta() {
        let theta = vec![0.25];
        let before = theta.clone();
        let _ = inner_adapt(&Quadratic, &theta, &[point(1.0)], 0.3, 5).unwrap();
        assert_eq!(theta, before);
    }

    #[test]
    fn maml_outer_gradient_matches_closed_form() {
        // Support loss (theta-a)^2, query loss (theta-b)^2.
        // theta' = theta - alpha*2(theta-a); outer grad =
        // (1 - 2 alpha) * 2 (theta' - b).
        let alpha = 0.2;
        let (theta, a, b) = (1.0, 3.0, -2.0);
        let cfg = MetaConfig {
            variant: MetaVariant::Maml,
            alpha,
            inner_steps: 1,
            ..Default::default()
        };
        let task = task_1d(&[a], &[b]);
        let (grad, _) = outer_gradient(&Quadratic, &[theta], &[task], &cfg).unwrap();
        let theta_prime = theta - alpha * 2.0 * (theta - a);
        let expect = (1.0 - 2.0 * alpha) * 2.0 * (theta_prime - b);
        assert!(
            (grad[0] - expect).abs() < 1e-7,
            "maml grad {} vs closed form {}",
            grad[0],
            expect
        );
    }

    #[test]
    fn maml_matches_finite_differences_of_meta_objective() {
        let model = TaskModel::new(1, 1, 1, LossKind::SquaredError);
        assert!(model.param_count() <= 10, "fixture wants a tiny model");
        let mut rng = stream(5, tags::THETA_INIT, 1);
        let theta = model.init_params(&mut rng);
        let mk = |vals: &[(f64, f64)]| -> Vec<Example> {
            vals.iter()
                .map(|&(x, y)| Example {
                    x: vec![x],
                    label: Label::Real(vec![y]),
                })
                .collect()
        };
        let task = TaskInstance {
            domain_id: 0,
            support: mk(&[(0.1, 0.4), (-0.7, -0.2), (1.2, 0.9)]),
            query: mk(&[(0.5, 0.55), (-1.1, -0.6)]),
        };
        let cfg = MetaConfig {
            variant: MetaVariant::Maml,
            alpha: 0.05,
            inner_steps: 2,
            ..Default::default()
        };
        let (grad, _) = outer_gradient(&model, &theta, std::slice::from_ref(&task), &cfg).unwrap();
        let numeric = fd_grad_flat(
            &mut |th| {
                let adapted =
                    inner_adapt(&model, th, &task.support, cfg.alpha, cfg.inner_steps).unwrap();
                query_loss(&model, &adapted, &task.query)
            },
            &theta,
            1e-5,
        );
        let err = max_rel_error(&grad, &numeric, 1e-6);
        assert!(err < 1e-3, "max rel error {err}");
    }

    #[test]
    fn fomaml_equals_maml_when_curvature_is_zero() {
        let model = LinearLoss { dim: 2 };
        let mut rng = stream(6, tags::THETA_INIT, 2);
        let mk = |n: usize, rng: &mut crate::StreamRng| -> Vec<Example> {
            (0..n)
                .map(|_| Example {
                    x: vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    label: Label::Real(vec![0.0]),
                })
                .collect()
        };
        let task = TaskInstance {
            domain_id: 0,
            support: mk(4, &mut rng),
            query: mk(4, &mut rng),
        };
        let theta = vec![0.3, -0.8];
        let mut cfg = MetaConfig {
            variant: MetaVariant::Maml,
            alpha: 0.1,
            inner_steps: 2,
            ..Default::default()
        };
        let (maml, _) = outer_gradient(&model, &theta, std::slice::from_ref(&task), &cfg).unwrap();
        cfg.variant = MetaVariant::Fomaml;
        let (fomaml, _) =
            outer_gradient(&model, &theta, std::slice::from_ref(&task), &cfg).unwrap();
        for (a, b) in maml.iter().zip(&fomaml) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn reptile_zero_inner_steps_leaves_theta_fixed() {
        let cfg = MetaConfig {
            variant: MetaVariant::Reptile,
            inner_steps: 0,
            batch_domains: 1,
            ..Default::default()
        };
        let mut theta = vec![0.7];
        let mut opt = OuterOptimizer::new(cfg.outer_opt, 1);
        let task = task_1d(&[1.0], &[2.0]);
        let res = meta_step(&Quadratic, &mut theta, &mut opt, &[task], &cfg, false).unwrap();
        assert_eq!(theta, vec![0.7]);
        assert_eq!(res.outer_grad_norm, 0.0);
    }

    #[test]
    fn reptile_update_is_exactly_the_mean_delta() {
        let cfg = MetaConfig {
            variant: MetaVariant::Reptile,
            alpha: 0.25,
            inner_steps: 1,
            beta: 1.0,
            batch_domains: 2,
            ..Default::default()
        };
        let theta0 = 0.5;
        let tasks = [task_1d(&[2.0], &[0.0]), task_1d(&[-1.0], &[0.0])];
        let deltas: Vec<f64> = tasks
            .iter()
            .map(|t| {
                let adapted =
                    inner_adapt(&Quadratic, &[theta0], &t.support, cfg.alpha, 1).unwrap();
                adapted[0] - theta0
            })
            .collect();
        let mean_delta = deltas.iter().sum::<f64>() / deltas.len() as f64;

        let mut theta = vec![theta0];
        let mut opt = OuterOptimizer::new(cfg.outer_opt, 1);
        meta_step(&Quadratic, &mut theta, &mut opt, &tasks, &cfg, false).unwrap();
        assert!((theta[0] - (theta0 + cfg.beta * mean_delta)).abs() < 1e-15);
    }

    #[test]
    fn batch_gradient_is_sum_of_single_task_gradients() {
        let cfg = MetaConfig {
            variant: MetaVariant::Fomaml,
            alpha: 0.05,
            inner_steps: 1,
            batch_domains: 2,
            ..Default::default()
        };
        let theta = vec![0.2];
        let tasks = [task_1d(&[1.0], &[3.0]), task_1d(&[-2.0], &[1.0])];
        let (batch, _) = outer_gradient(&Quadratic, &theta, &tasks, &cfg).unwrap();
        let (g0, _) = outer_gradient(&Quadratic, &theta, &tasks[..1], &cfg).unwrap();
        let (g1, _) = outer_gradient(&Quadratic, &theta, &tasks[1..], &cfg).unwrap();
        assert!((batch[0] - (g0[0] + g1[0])).abs() < 1e-15);
    }

    #[test]
    fn meta_step_rejects_batch_size_mismatch() {
        let cfg = MetaConfig {
            batch_domains: 3,
            ..Default::default()
        };
        let mut theta = vec![0.0];
        let mut opt = OuterOptimizer::new(cfg.outer_opt, 1);
        let tasks = [task_1d(&[1.0], &[1.0])];
        assert!(meta_step(&Quadratic, &mut theta, &mut opt, &tasks, &cfg, false).is_err());
    }

    #[test]
    fn mtl_uses_combined_training_loss_and_no_adaptation() {
        let cfg = MetaConfig {
            variant: MetaVariant::Mtl,
            batch_domains: 1,
            outer_opt: OuterOptKind::Sgd,
            beta: 0.5,
            ..Default::default()
        };
        let mut theta = vec![0.0];
        let mut opt = OuterOptimizer::new(cfg.outer_opt, 1);
        let task = task_1d(&[1.0], &[3.0]);
        let res = meta_step(&Quadratic, &mut theta, &mut opt, &[task], &cfg, false).unwrap();
        // Combined data {1, 3}: loss at 0 is (1 + 9)/2 = 5, grad = -4.
        assert!((res.task_losses[0] - 5.0).abs() < 1e-15);
        assert!((theta[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn parallel_and_sequential_steps_agree_bitwise() {
        let model = TaskModel::new(1, 4, 1, LossKind::SquaredError);
        let mut rng = stream(11, tags::THETA_INIT, 3);
        let theta0 = model.init_params(&mut rng);
        let mk_task = |seed: u64| {
            let mut r = stream(seed, tags::TASK_DRAW, 9);
            let ex = |r: &mut crate::StreamRng| Example {
                x: vec![r.gen_range(-2.0..2.0)],
                label: Label::Real(vec![r.gen_range(-1.0..1.0)]),
            };
            TaskInstance {
                domain_id: seed as usize,
                support: (0..6).map(|_| ex(&mut r)).collect(),
                query: (0..6).map(|_| ex(&mut r)).collect(),
            }
        };
        let tasks: Vec<TaskInstance> = (0..3).map(mk_task).collect();
        let cfg = MetaConfig {
            variant: MetaVariant::Maml,
            batch_domains: 3,
            ..Default::default()
        };
        let run = |parallel: bool| {
            let mut theta = theta0.clone();
            let mut opt = OuterOptimizer::new(cfg.outer_opt, theta.len());
            for _ in 0..5 {
                meta_step(&model, &mut theta, &mut opt, &tasks, &cfg, parallel).unwrap();
            }
            theta
        };
        assert_eq!(run(false), run(true));
    }

    #[test]
    fn evaluation_with_zero_steps_is_seed_independent() {
        let task = task_1d(&[1.0, 2.0], &[0.5, 1.5]);
        let (m1, _, _) =
            evaluate_adaptation(&Quadratic, &[0.3], std::slice::from_ref(&task), 2, 0, 0.1)
                .unwrap();
        let (m2, _, _) =
            evaluate_adaptation(&Quadratic, &[0.3], std::slice::from_ref(&task), 2, 0, 0.1)
                .unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn adaptation_improves_over_no_adaptation() {
        let task = task_1d(&[2.0, 2.0], &[2.0, 2.0]);
        let theta = vec![0.0];
        let (unadapted, _, _) =
            evaluate_adaptation(&Quadratic, &theta, std::slice::from_ref(&task), 2, 0, 0.1)
                .unwrap();
        let (adapted, _, _) =
            evaluate_adaptation(&Quadratic, &theta, std::slice::from_ref(&task), 2, 10, 0.1)
                .unwrap();
        assert!(adapted < unadapted);
    }

    #[test]
    fn aggregation_matches_direct_recomputation() {
        let tasks: Vec<TaskInstance> = (0..50)
            .map(|i| task_1d(&[i as f64 * 0.1], &[i as f64 * 0.05 - 1.0]))
            .collect();
        let (mean, std, losses) =
            evaluate_adaptation(&Quadratic, &[0.4], &tasks, 1, 1, 0.2).unwrap();
        let m = losses.iter().sum::<f64>() / losses.len() as f64;
        let v = losses.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / (losses.len() - 1) as f64;
        assert!((mean - m).abs() < 1e-15);
        assert!((std - v.sqrt()).abs() < 1e-15);
    }
}
