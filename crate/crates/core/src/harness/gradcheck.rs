//! The finite-difference audit: every analytic backward pass in the
//! crate checked against central differences over many random shapes
//! and parameter draws.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::metalearn::{
    inner_adapt, outer_gradient, query_loss, AdaptiveModel, LossKind, MetaConfig, MetaVariant,
    TaskModel,
};
use crate::ndcore::{
    fd_grad_flat, finite_difference_grad, max_rel_error, softmax, softmax_backward, Activation,
    AttentionUnit, LinearLayer, LstmCell, Tensor,
};
use crate::rng::stream;
use crate::sampling::{
    policy_forward, surrogate_phi_gradient, surrogate_value, PolicyConfig, PolicyNetwork,
    PolicyState, SurrogateForm,
};
use crate::taskgen::{Example, Label, TaskInstance};
use crate::StreamRng;

#[derive(Debug, Clone)]
pub struct ComponentReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl ComponentReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub seed: u64,
    pub rounds: usize,
    pub components: Vec<ComponentReport>,
}

impl GradCheckReport {
    pub fn all_passed(&self) -> bool {
        self.components.iter().all(ComponentReport::passed)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradient check: seed {}, {} rounds per component",
            self.seed, self.rounds
        )?;
        for c in &self.components {
            writeln!(
                f,
                "  {:26} max rel err {:.3e}  (tol {:.0e})  {}",
                c.name,
                c.max_rel_error,
                c.tolerance,
                if c.passed() { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

const FD_EPS: f64 = 1e-5;
const REL_FLOOR: f64 = 1e-6;
const GRADCHECK_TAG: u64 = 0x6AD0_CEC5;

fn rand_vec(rng: &mut StreamRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Random values bounded away from zero, for the relu kink.
fn rand_vec_off_zero(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = rng.gen_range(0.1..2.0);
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn check_linear(rng: &mut StreamRng) -> f64 {
    let (inp, out) = (rng.gen_range(1..5), rng.gen_range(1..5));
    let mut layer = LinearLayer::new("l", inp, out);
    layer.init_xavier(rng);
    for b in layer.bias.value_mut().data_mut() {
        *b = rng.gen_range(-0.5..0.5);
    }
    let x = Tensor::new(vec![inp], rand_vec(rng, inp, 1.5)).unwrap();
    let probe = rand_vec(rng, out, 1.0);

    let (_, cache) = layer.forward(&x).unwrap();
    let dy = Tensor::new(vec![out], probe.clone()).unwrap();
    let dx = layer.backward(&cache, &dy);
    let analytic: Vec<Vec<f64>> = layer
        .params_mut()
        .iter()
        .map(|p| p.grad().data().to_vec())
        .collect();
    for p in layer.params_mut() {
        p.zero_grad();
    }

    let numeric = finite_difference_grad(
        &mut layer,
        |l| l.params_mut(),
        |l| {
            let (y, _) = l.forward(&x).unwrap();
            y.data().iter().zip(&probe).map(|(a, b)| a * b).sum()
        },
        FD_EPS,
    );
    let mut err: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        err = err.max(max_rel_error(a, n, REL_FLOOR));
    }
    let numeric_dx = fd_grad_flat(
        &mut |xv| {
            let xt = Tensor::new(vec![inp], xv.to_vec()).unwrap();
            let (y, _) = layer.forward(&xt).unwrap();
            y.data().iter().zip(&probe).map(|(a, b)| a * b).sum()
        },
        x.data(),
        FD_EPS,
    );
    err.max(max_rel_error(dx.data(), &numeric_dx, REL_FLOOR))
}

fn check_activation(kind: Activation, rng: &mut StreamRng) -> f64 {
    let n = rng.gen_range(2..7);
    let xv = match kind {
        Activation::Relu => rand_vec_off_zero(rng, n),
        _ => rand_vec(rng, n, 2.0),
    };
    let probe = rand_vec(rng, n, 1.0);
    let x = Tensor::new(vec![n], xv.clone()).unwrap();
    let y = kind.forward(&x);
    let dy = Tensor::new(vec![n], probe.clone()).unwrap();
    let dx = kind.backward(&x, &y, &dy);
    let numeric = fd_grad_flat(
        &mut |v| {
            let t = Tensor::new(vec![n], v.to_vec()).unwrap();
            kind.forward(&t)
                .data()
                .iter()
                .zip(&probe)
                .map(|(a, b)| a * b)
                .sum()
        },
        &xv,
        FD_EPS,
    );
    max_rel_error(dx.data(), &numeric, REL_FLOOR)
}

fn check_softmax(rng: &mut StreamRng) -> f64 {
    let n = rng.gen_range(2..7);
    let logits = rand_vec(rng, n, 2.0);
    let probe = rand_vec(rng, n, 1.0);
    let y = softmax(&logits).unwrap();
    let dx = softmax_backward(&y, &probe);
    let numeric = fd_grad_flat(
        &mut |v| {
            softmax(v)
                .unwrap()
                .iter()
                .zip(&probe)
                .map(|(a, b)| a * b)
                .sum()
        },
        &logits,
        FD_EPS,
    );
    max_rel_error(&dx, &numeric, REL_FLOOR)
}

fn check_lstm(rng: &mut StreamRng) -> f64 {
    let (inp, hid) = (rng.gen_range(2..6), rng.gen_range(2..6));
    let mut cell = LstmCell::new("lstm", inp, hid);
    cell.init_uniform(rng);
    let x = rand_vec(rng, inp, 1.0);
    let h0 = rand_vec(rng, hid, 0.8);
    let c0 = rand_vec(rng, hid, 0.8);
    let probe_h = rand_vec(rng, hid, 1.0);
    let probe_c = rand_vec(rng, hid, 1.0);

    let scalar_of = |h: &[f64], c: &[f64]| -> f64 {
        h.iter().zip(&probe_h).map(|(a, b)| a * b).sum::<f64>()
            + c.iter().zip(&probe_c).map(|(a, b)| a * b).sum::<f64>()
    };

    let (_, _, cache) = cell.forward(&x, &h0, &c0).unwrap();
    let (dx, dh_prev, dc_prev) = cell.backward(&cache, &probe_h, &probe_c);
    let analytic: Vec<Vec<f64>> = cell
        .params_mut()
        .iter()
        .map(|p| p.grad().data().to_vec())
        .collect();
    for p in cell.params_mut() {
        p.zero_grad();
    }
    let numeric = finite_difference_grad(
        &mut cell,
        |c| c.params_mut(),
        |c| {
            let (h, cc, _) = c.forward(&x, &h0, &c0).unwrap();
            scalar_of(&h, &cc)
        },
        FD_EPS,
    );
    let mut err: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        err = err.max(max_rel_error(a, n, REL_FLOOR));
    }

    let num_dx = fd_grad_flat(
        &mut |v| {
            let (h, c, _) = cell.forward(v, &h0, &c0).unwrap();
            scalar_of(&h, &c)
        },
        &x,
        FD_EPS,
    );
    let num_dh = fd_grad_flat(
        &mut |v| {
            let (h, c, _) = cell.forward(&x, v, &c0).unwrap();
            scalar_of(&h, &c)
        },
        &h0,
        FD_EPS,
    );
    let num_dc = fd_grad_flat(
        &mut |v| {
            let (h, c, _) = cell.forward(&x, &h0, v).unwrap();
            scalar_of(&h, &c)
        },
        &c0,
        FD_EPS,
    );
    err.max(max_rel_error(&dx, &num_dx, REL_FLOOR))
        .max(max_rel_error(&dh_prev, &num_dh, REL_FLOOR))
        .max(max_rel_error(&dc_prev, &num_dc, REL_FLOOR))
}

fn check_attention(rng: &mut StreamRng) -> f64 {
    let k = rng.gen_range(1..6);
    let attn_dim = rng.gen_range(2..6);
    let mut unit = AttentionUnit::new("attn", attn_dim);
    unit.init_xavier(rng);
    for b in unit.score_b.value_mut().data_mut() {
        *b = rng.gen_range(-0.3..0.3);
    }
    let feat = rand_vec(rng, 2 * k, 1.2);
    let features = Tensor::new(vec![k, 2], feat.clone()).unwrap();
    let probe = rand_vec(rng, 2 * k, 1.0);

    let (_, _, cache) = unit.forward(&features).unwrap();
    let dfeat = unit.backward(&cache, &probe);
    let analytic: Vec<Vec<f64>> = unit
        .params_mut()
        .iter()
        .map(|p| p.grad().data().to_vec())
        .collect();
    for p in unit.params_mut() {
        p.zero_grad();
    }
    let numeric = finite_difference_grad(
        &mut unit,
        |u| u.params_mut(),
        |u| {
            let (ctx, _, _) = u.forward(&features).unwrap();
            ctx.iter().zip(&probe).map(|(a, b)| a * b).sum()
        },
        FD_EPS,
    );
    let mut err: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        err = err.max(max_rel_error(a, n, REL_FLOOR));
    }
    let num_dfeat = fd_grad_flat(
        &mut |v| {
            let t = Tensor::new(vec![k, 2], v.to_vec()).unwrap();
            let (ctx, _, _) = unit.forward(&t).unwrap();
            ctx.iter().zip(&probe).map(|(a, b)| a * b).sum()
        },
        &feat,
        FD_EPS,
    );
    err.max(max_rel_error(dfeat.data(), &num_dfeat, REL_FLOOR))
}

fn check_policy_surrogate(rng: &mut StreamRng, form: SurrogateForm) -> f64 {
    // ln(P) in the logprob surrogate has steep curvature at small P, so
    // the central-difference oracle needs a finer step there.
    let fd_eps = match form {
        SurrogateForm::ProbWeighted => FD_EPS,
        SurrogateForm::LogProbWeighted => 1e-4,
    };
    let k = rng.gen_range(3..7);
    let cfg = PolicyConfig {
        attention_dim: rng.gen_range(3..6),
        lstm_input: rng.gen_range(4..8),
        lstm_hidden: rng.gen_range(4..9),
        surrogate: form,
        ..Default::default()
    };
    let mut net = PolicyNetwork::new(k, &cfg).unwrap();
    let mut init_rng = StreamRng::seed_from_u64(rng.gen());
    net.init(&mut init_rng);

    let mut state = PolicyState::initial(k, cfg.lstm_hidden).unwrap();
    state.h = rand_vec(rng, cfg.lstm_hidden, 0.5);
    state.c = rand_vec(rng, cfg.lstm_hidden, 0.5);
    let q = rand_vec(rng, k, 1.5);

    let m = rng.gen_range(1..=k.min(3));
    let mut order: Vec<usize> = (0..k).collect();
    for i in 0..m {
        let j = rng.gen_range(i..k);
        order.swap(i, j);
    }
    let mut selected = order[..m].to_vec();
    selected.sort_unstable();
    let losses: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..3.0)).collect();

    let (_, _, trace) = policy_forward(&net, &state, &q).unwrap();
    let analytic = surrogate_phi_gradient(&mut net, &cfg, &trace, &selected, &losses).unwrap();
    let numeric = finite_difference_grad(
        &mut net,
        |n| n.params_mut(),
        |n| {
            let (_, _, t) = policy_forward(n, &state, &q).unwrap();
            surrogate_value(t.probs(), &selected, &losses, &cfg)
        },
        fd_eps,
    );
    let mut err: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        err = err.max(max_rel_error(a, n, REL_FLOOR));
    }
    err
}

fn check_maml_outer(rng: &mut StreamRng) -> f64 {
    let model = TaskModel::new(1, 1, 1, LossKind::SquaredError);
    let theta: Vec<f64> = rand_vec(rng, model.param_count(), 0.8);
    let mk = |rng: &mut StreamRng, n: usize| -> Vec<Example> {
        (0..n)
            .map(|_| Example {
                x: vec![rng.gen_range(-2.0..2.0)],
                label: Label::Real(vec![rng.gen_range(-1.0..1.0)]),
            })
            .collect()
    };
    let task = TaskInstance {
        domain_id: 0,
        support: mk(rng, 4),
        query: mk(rng, 4),
    };
    let cfg = MetaConfig {
        variant: MetaVariant::Maml,
        alpha: 0.05,
        inner_steps: rng.gen_range(1..3),
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
        FD_EPS,
    );
    max_rel_error(&grad, &numeric, REL_FLOOR)
}

fn hash_name(name: &str) -> u64 {
    name.bytes().fold(1469598103934665603u64, |h, b| {
        (h ^ b as u64).wrapping_mul(1099511628211)
    })
}

/// Runs every component check `rounds` times with fresh random shapes
/// and draws, reporting the worst relative error per component.
pub fn gradcheck_suite(seed: u64, rounds: usize) -> GradCheckReport {
    let mut components: Vec<(&str, f64, Box<dyn FnMut(&mut StreamRng) -> f64>)> = vec![
        ("linear", 1e-4, Box::new(check_linear)),
        ("tanh", 1e-6, Box::new(|r| check_activation(Activation::Tanh, r))),
        (
            "sigmoid",
            1e-6,
            Box::new(|r| check_activation(Activation::Sigmoid, r)),
        ),
        ("relu", 1e-6, Box::new(|r| check_activation(Activation::Relu, r))),
        ("softmax", 1e-4, Box::new(check_softmax)),
        ("lstm-cell", 1e-4, Box::new(check_lstm)),
        ("attention", 1e-4, Box::new(check_attention)),
        (
            "policy-surrogate-prob",
            1e-4,
            Box::new(|r| check_policy_surrogate(r, SurrogateForm::ProbWeighted)),
        ),
        (
            "policy-surrogate-logprob",
            1e-4,
            Box::new(|r| check_policy_surrogate(r, SurrogateForm::LogProbWeighted)),
        ),
        ("maml-outer", 1e-3, Box::new(check_maml_outer)),
    ];

    let components = components
        .iter_mut()
        .map(|(name, tol, check)| {
            let mut worst: f64 = 0.0;
            for round in 0..rounds {
                let mut rng = stream(seed, GRADCHECK_TAG, round as u64 * 1009 + hash_name(name));
                worst = worst.max(check(&mut rng));
            }
            ComponentReport {
                name: name.to_string(),
                max_rel_error: worst,
                tolerance: *tol,
            }
        })
        .collect();

    GradCheckReport {
        seed,
        rounds,
        components,
    }
}
