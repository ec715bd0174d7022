//! The adversarial sampling policy.
//!
//! Per-domain features `[q_k, p_k]` (last query losses and previous
//! sampling probabilities) pass through feed-forward attention, a linear
//! projection, one LSTM step, and a softmax head to produce the next
//! sampling distribution. The policy is trained to *increase* the
//! meta-learner's query loss: one ascent step per iteration on a
//! score-function surrogate built from the selected domains' detached
//! losses.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ndcore::{
    softmax, softmax_backward, Adam, AttentionCache, AttentionUnit, LinearCache, LinearLayer,
    LstmCache, LstmCell, Parameter, Tensor,
};
use crate::{Error, Result, StreamRng};

use super::buffer::SamplingDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    TopM,
    Stochastic,
}

impl FromStr for SelectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top-m" => Ok(SelectionMode::TopM),
            "stochastic" => Ok(SelectionMode::Stochastic),
            other => Err(Error::Config(format!("unknown selection mode '{other}'"))),
        }
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMode::TopM => write!(f, "top-m"),
            SelectionMode::Stochastic => write!(f, "stochastic"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossNormalization {
    Zscore,
    Raw,
}

impl FromStr for LossNormalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zscore" => Ok(LossNormalization::Zscore),
            "raw" => Ok(LossNormalization::Raw),
            other => Err(Error::Config(format!("unknown loss normalization '{other}'"))),
        }
    }
}

impl fmt::Display for LossNormalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossNormalization::Zscore => write!(f, "zscore"),
            LossNormalization::Raw => write!(f, "raw"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurrogateForm {
    /// `sum_j P_j * L_j` — the literal score used by the update rule.
    ProbWeighted,
    /// `sum_j ln(P_j) * L_j` — the standard score-function estimator.
    LogProbWeighted,
}

impl FromStr for SurrogateForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob-weighted" => Ok(SurrogateForm::ProbWeighted),
            "logprob-weighted" => Ok(SurrogateForm::LogProbWeighted),
            other => Err(Error::Config(format!("unknown surrogate form '{other}'"))),
        }
    }
}

impl fmt::Display for SurrogateForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurrogateForm::ProbWeighted => write!(f, "prob-weighted"),
            SurrogateForm::LogProbWeighted => write!(f, "logprob-weighted"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntropySign {
    /// Entropy added to the maximization objective (exploration bonus).
    Bonus,
    Penalty,
}

impl FromStr for EntropySign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonus" => Ok(EntropySign::Bonus),
            "penalty" => Ok(EntropySign::Penalty),
            other => Err(Error::Config(format!("unknown entropy sign '{other}'"))),
        }
    }
}

impl fmt::Display for EntropySign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntropySign::Bonus => write!(f, "bonus"),
            EntropySign::Penalty => write!(f, "penalty"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardBaseline {
    /// Raw detached losses, the literal update rule.
    None,
    /// Losses centered by their batch mean before weighting; the
    /// standard variance-reduction baseline.
    Mean,
    /// Centered and divided by the batch mean, so the update scale is
    /// stationary across training phases.
    Relative,
}

impl FromStr for RewardBaseline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RewardBaseline::None),
            "mean" => Ok(RewardBaseline::Mean),
            "relative" => Ok(RewardBaseline::Relative),
            other => Err(Error::Config(format!("unknown reward baseline '{other}'"))),
        }
    }
}

impl fmt::Display for RewardBaseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardBaseline::None => write!(f, "none"),
            RewardBaseline::Mean => write!(f, "mean"),
            RewardBaseline::Relative => write!(f, "relative"),
        }
    }
}

/// Policy hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Policy learning rate.
    pub gamma: f64,
    pub entropy_weight: f64,
    pub entropy_sign: EntropySign,
    pub selection: SelectionMode,
    pub normalization: LossNormalization,
    pub surrogate: SurrogateForm,
    pub baseline: RewardBaseline,
    /// Decoupled weight decay applied with each ascent step. Acts on
    /// the parameters directly, so it keeps pulling the policy back
    /// toward uniform even where the softmax has saturated and
    /// probability-space gradients vanish.
    pub weight_decay: f64,
    /// Epsilon of the policy's Adam step. The default is the usual
    /// 1e-8; larger values keep small (noise-dominated) gradients from
    /// being renormalized up to full step size.
    pub adam_eps: f64,
    pub attention_dim: usize,
    pub lstm_input: usize,
    pub lstm_hidden: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            gamma: 0.035,
            entropy_weight: 1e-5,
            entropy_sign: EntropySign::Bonus,
            selection: SelectionMode::TopM,
            normalization: LossNormalization::Zscore,
            surrogate: SurrogateForm::ProbWeighted,
            baseline: RewardBaseline::None,
            weight_decay: 0.0,
            adam_eps: 1e-8,
            attention_dim: 16,
            lstm_input: 32,
            lstm_hidden: 100,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma <= 0.0 {
            return Err(Error::Config("policy gamma must be positive".into()));
        }
        if self.entropy_weight < 0.0 {
            return Err(Error::Config("entropy weight must be nonnegative".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        if self.adam_eps <= 0.0 {
            return Err(Error::Config("adam epsilon must be positive".into()));
        }
        if self.attention_dim == 0 || self.lstm_input == 0 || self.lstm_hidden == 0 {
            return Err(Error::Config("policy layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// The policy network parameters (phi).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyNetwork {
    pub attention: AttentionUnit,
    pub input_proj: LinearLayer,
    pub lstm: LstmCell,
    pub head: LinearLayer,
    domains: usize,
}

/// Recurrent state threaded between iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
    pub p_prev: Vec<f64>,
    pub step: u64,
}

impl PolicyState {
    pub fn initial(domains: usize, lstm_hidden: usize) -> Result<Self> {
        Ok(Self {
            h: vec![0.0; lstm_hidden],
            c: vec![0.0; lstm_hidden],
            p_prev: SamplingDistribution::uniform(domains)?.values().to_vec(),
            step: 0,
        })
    }
}

/// Saved activations of one forward pass; consumed by the ascent step.
#[derive(Debug, Clone)]
pub struct PolicyTrace {
    attn: AttentionCache,
    proj: LinearCache,
    lstm: LstmCache,
    head: LinearCache,
    probs: Vec<f64>,
}

impl PolicyTrace {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl PolicyNetwork {
    pub fn new(domains: usize, cfg: &PolicyConfig) -> Result<Self> {
        if domains == 0 {
            return Err(Error::Dimension("policy over zero domains".into()));
        }
        cfg.validate()?;
        Ok(Self {
            attention: AttentionUnit::new("policy.attn", cfg.attention_dim),
            input_proj: LinearLayer::new("policy.proj", 2 * domains, cfg.lstm_input),
            lstm: LstmCell::new("policy.lstm", cfg.lstm_input, cfg.lstm_hidden),
            head: LinearLayer::new("policy.head", cfg.lstm_hidden, domains),
            domains,
        })
    }

    pub fn init(&mut self, rng: &mut StreamRng) {
        self.attention.init_xavier(rng);
        self.input_proj.init_xavier(rng);
        self.lstm.init_uniform(rng);
        self.head.init_xavier(rng);
    }

    pub fn domains(&self) -> usize {
        self.domains
    }

    pub fn lstm_hidden(&self) -> usize {
        self.lstm.hidden_dim()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut ps = self.attention.params_mut();
        ps.extend(self.input_proj.params_mut());
        ps.extend(self.lstm.params_mut());
        ps.extend(self.head.params_mut());
        ps
    }

    pub fn param_count(&self) -> usize {
        let mut clone = self.clone();
        clone.params_mut().iter().map(|p| p.len()).sum()
    }
}

/// One forward pass: (normalized) buffer plus previous probabilities in,
/// next sampling distribution and advanced state out.
pub fn policy_forward(
    net: &PolicyNetwork,
    state: &PolicyState,
    q_input: &[f64],
) -> Result<(SamplingDistribution, PolicyState, PolicyTrace)> {
    let k = net.domains;
    if q_input.len() != k || state.p_prev.len() != k {
        return Err(Error::Dimension(format!(
            "policy expects {k} domains, got q[{}], p_prev[{}]",
            q_input.len(),
            state.p_prev.len()
        )));
    }
    if q_input.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite policy input".into()));
    }

    let mut feat = Vec::with_capacity(2 * k);
    for i in 0..k {
        feat.push(q_input[i]);
        feat.push(state.p_prev[i]);
    }
    let features = Tensor::new(vec![k, 2], feat)?;

    let (context, _weights, attn_cache) = net.attention.forward(&features)?;
    let context_t = Tensor::new(vec![2 * k], context)?;
    let (proj_out, proj_cache) = net.input_proj.forward(&context_t)?;
    let (h, c, lstm_cache) = net.lstm.forward(proj_out.data(), &state.h, &state.c)?;
    let h_t = Tensor::new(vec![net.lstm.hidden_dim()], h.clone())?;
    let (logits, head_cache) = net.head.forward(&h_t)?;
    let probs = softmax(logits.data())?;
    let dist = SamplingDistribution::from_weights(&probs)?;

    let new_state = PolicyState {
        h,
        c,
        p_prev: dist.values().to_vec(),
        step: state.step + 1,
    };
    let trace = PolicyTrace {
        attn: attn_cache,
        proj: proj_cache,
        lstm: lstm_cache,
        head: head_cache,
        probs: dist.values().to_vec(),
    };
    Ok((dist, new_state, trace))
}

/// Entropy of a probability vector, with `0 ln 0 = 0`.
fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

fn advantages(losses: &[f64], baseline: RewardBaseline) -> Vec<f64> {
    match baseline {
        RewardBaseline::None => losses.to_vec(),
        RewardBaseline::Mean => {
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            losses.iter().map(|l| l - mean).collect()
        }
        RewardBaseline::Relative => {
            let mean = losses.iter().sum::<f64>() / losses.len() as f64;
            let scale = mean.abs().max(1e-12);
            losses.iter().map(|l| (l - mean) / scale).collect()
        }
    }
}

/// The scalar the ascent step climbs: loss-weighted selected
/// probabilities plus the entropy term. Pure function of the
/// distribution so it doubles as the finite-difference oracle target.
pub fn surrogate_value(
    probs: &[f64],
    selected: &[usize],
    losses: &[f64],
    cfg: &PolicyConfig,
) -> f64 {
    debug_assert_eq!(selected.len(), losses.len());
    let adv = advantages(losses, cfg.baseline);
    let mut s = 0.0;
    for (&idx, &a) in selected.iter().zip(&adv) {
        s += match cfg.surrogate {
            SurrogateForm::ProbWeighted => probs[idx] * a,
            SurrogateForm::LogProbWeighted => probs[idx].max(1e-300).ln() * a,
        };
    }
    let sign = match cfg.entropy_sign {
        EntropySign::Bonus => 1.0,
        EntropySign::Penalty => -1.0,
    };
    s + sign * cfg.entropy_weight * entropy(probs)
}

/// d(surrogate)/d(probs).
fn surrogate_prob_grad(
    probs: &[f64],
    selected: &[usize],
    losses: &[f64],
    cfg: &PolicyConfig,
) -> Vec<f64> {
    let adv = advantages(losses, cfg.baseline);
    let mut dp = vec![0.0; probs.len()];
    for (&idx, &a) in selected.iter().zip(&adv) {
        dp[idx] += match cfg.surrogate {
            SurrogateForm::ProbWeighted => a,
            SurrogateForm::LogProbWeighted => a / probs[idx].max(1e-300),
        };
    }
    let sign = match cfg.entropy_sign {
        EntropySign::Bonus => 1.0,
        EntropySign::Penalty => -1.0,
    };
    for (d, &p) in dp.iter_mut().zip(probs) {
        let dent = -(p.max(1e-300).ln() + 1.0);
        *d += sign * cfg.entropy_weight * dent;
    }
    dp
}

/// Backpropagates a probability-space gradient through the whole policy
/// stack, accumulating into the network's parameter gradients.
fn backprop_through_policy(net: &mut PolicyNetwork, trace: &PolicyTrace, dp: &[f64]) -> Result<()> {
    let dlogits = softmax_backward(&trace.probs, dp);
    let dlogits_t = Tensor::new(vec![net.domains], dlogits)?;
    let dh = net.head.backward(&trace.head, &dlogits_t);
    let dc = vec![0.0; net.lstm.hidden_dim()];
    let (dx, _dh_prev, _dc_prev) = net.lstm.backward(&trace.lstm, dh.data(), &dc);
    let dx_t = Tensor::new(vec![net.lstm.input_dim()], dx)?;
    let dcontext = net.input_proj.backward(&trace.proj, &dx_t);
    let _dfeatures = net.attention.backward(&trace.attn, dcontext.data());
    Ok(())
}

/// Analytic d(surrogate)/d(phi), one vector per parameter in
/// `params_mut` order. Leaves the network's gradient buffers zeroed.
pub fn surrogate_phi_gradient(
    net: &mut PolicyNetwork,
    cfg: &PolicyConfig,
    trace: &PolicyTrace,
    selected: &[usize],
    losses: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let dp = surrogate_prob_grad(&trace.probs, selected, losses, cfg);
    backprop_through_policy(net, trace, &dp)?;
    let grads = net
        .params_mut()
        .iter()
        .map(|p| p.grad().data().to_vec())
        .collect();
    for p in net.params_mut() {
        p.zero_grad();
    }
    Ok(grads)
}

/// One adversarial ascent step on phi from the selected domains'
/// detached losses, using the trace of the forward pass that produced
/// the selection. Gradients flow through the current step only; the
/// recurrent inputs are treated as constants.
pub fn policy_update(
    net: &mut PolicyNetwork,
    opt: &mut Adam,
    cfg: &PolicyConfig,
    trace: &PolicyTrace,
    selected: &[usize],
    losses: &[f64],
) -> Result<()> {
    if selected.len() != losses.len() {
        return Err(Error::Argument(format!(
            "{} selected domains but {} losses",
            selected.len(),
            losses.len()
        )));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric("non-finite loss fed to policy update".into()));
    }
    let s = surrogate_value(&trace.probs, selected, losses, cfg);
    if !s.is_finite() {
        return Err(Error::Numeric(format!("non-finite policy surrogate {s}")));
    }

    // Ascent on S as descent on -S.
    let dp: Vec<f64> = surrogate_prob_grad(&trace.probs, selected, losses, cfg)
        .iter()
        .map(|g| -g)
        .collect();
    backprop_through_policy(net, trace, &dp)?;
    opt.eps = cfg.adam_eps;
    opt.step(&mut net.params_mut(), cfg.gamma)?;
    if cfg.weight_decay > 0.0 {
        let shrink = 1.0 - cfg.gamma * cfg.weight_decay;
        for p in net.params_mut() {
            for v in p.value_mut().data_mut() {
                *v *= shrink;
            }
        }
    }
    Ok(())
}

/// Picks `m` distinct domains from a sampling distribution.
///
/// Top-M takes the largest probabilities, ties broken toward the lower
/// index; stochastic mode draws without replacement proportional to the
/// probabilities. Returned ids are in ascending order.
pub fn select_domains(
    dist: &SamplingDistribution,
    m: usize,
    mode: SelectionMode,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    let k = dist.len();
    if m > k {
        return Err(Error::Config(format!("cannot select {m} of {k} domains")));
    }
    let mut ids = match mode {
        SelectionMode::TopM => {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| {
                dist.values()[b]
                    .partial_cmp(&dist.values()[a])
                    .expect("finite probabilities")
                    .then(a.cmp(&b))
            });
            order.truncate(m);
            order
        }
        SelectionMode::Stochastic => {
            let mut remaining: Vec<usize> = (0..k).collect();
            let mut picked = Vec::with_capacity(m);
            for _ in 0..m {
                let total: f64 = remaining.iter().map(|&i| dist.values()[i]).sum();
                let choice = if total <= 0.0 {
                    rng.gen_range(0..remaining.len())
                } else {
                    let mut u = rng.gen_range(0.0..total);
                    let mut idx = remaining.len() - 1;
                    for (pos, &i) in remaining.iter().enumerate() {
                        u -= dist.values()[i];
                        if u <= 0.0 {
                            idx = pos;
                            break;
                        }
                    }
                    idx
                };
                picked.push(remaining.remove(choice));
            }
            picked
        }
    };
    ids.sort_unstable();
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::{finite_difference_grad, max_rel_error};
    use crate::rng::{stream, tags};

    fn small_cfg() -> PolicyConfig {
        PolicyConfig {
            attention_dim: 5,
            lstm_input: 6,
            lstm_hidden: 8,
            ..Default::default()
        }
    }

    fn init_net(k: usize, cfg: &PolicyConfig, seed: u64) -> PolicyNetwork {
        let mut net = PolicyNetwork::new(k, cfg).unwrap();
        let mut rng = stream(seed, tags::PHI_INIT, 0);
        net.init(&mut rng);
        net
    }

    #[test]
    fn zero_parameters_output_uniform() {
        let cfg = small_cfg();
        let net = PolicyNetwork::new(5, &cfg).unwrap();
        let state = PolicyState::initial(5, cfg.lstm_hidden).unwrap();
        let (dist, _, _) = policy_forward(&net, &state, &[0.3, 1.0, -0.5, 2.0, 0.1]).unwrap();
        for p in dist.values() {
            assert!((p - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_a_pure_function_of_state_and_input() {
        let cfg = small_cfg();
        let net = init_net(4, &cfg, 3);
        let state = PolicyState::initial(4, cfg.lstm_hidden).unwrap();
        let q = [0.5, -1.0, 0.2, 0.0];
        let (d1, s1, _) = policy_forward(&net, &state, &q).unwrap();
        let (d2, s2, _) = policy_forward(&net, &state, &q).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(s1, s2);
        assert_eq!(s1.step, 1);
    }

    #[test]
    fn forward_rejects_non_finite_input() {
        let cfg = small_cfg();
        let net = init_net(3, &cfg, 4);
        let state = PolicyState::initial(3, cfg.lstm_hidden).unwrap();
        assert!(policy_forward(&net, &state, &[0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let cfg = small_cfg();
        let k = 5;
        let state = PolicyState::initial(k, cfg.lstm_hidden).unwrap();
        let q = [1.2, -0.3, 0.0, 0.8, 2.0];
        let selected = [1usize, 3];
        let losses = [0.7, 1.9];

        let mut net = init_net(k, &cfg, 7);
        let (dist, _, trace) = policy_forward(&net, &state, &q).unwrap();
        assert!(dist.is_valid());

        let analytic = surrogate_phi_gradient(&mut net, &cfg, &trace, &selected, &losses).unwrap();

        let numeric = finite_difference_grad(
            &mut net,
            |n| n.params_mut(),
            |n| {
                let (_, _, t) = policy_forward(n, &state, &q).unwrap();
                surrogate_value(&t.probs, &selected, &losses, &cfg)
            },
            1e-5,
        );
        for (a, n) in analytic.iter().zip(&numeric) {
            let err = max_rel_error(a, n, 1e-6);
            assert!(err < 1e-4, "surrogate gradient error {err}");
        }
    }

    #[test]
    fn zero_losses_and_zero_entropy_leave_phi_unchanged() {
        let mut cfg = small_cfg();
        cfg.entropy_weight = 0.0;
        let mut net = init_net(3, &cfg, 9);
        let before: Vec<Vec<f64>> = net
            .params_mut()
            .iter()
            .map(|p| p.value().data().to_vec())
            .collect();
        let state = PolicyState::initial(3, cfg.lstm_hidden).unwrap();
        let (_, _, trace) = policy_forward(&net, &state, &[1.0, 0.0, -1.0]).unwrap();
        let mut opt = Adam::new();
        policy_update(&mut net, &mut opt, &cfg, &trace, &[0, 2], &[0.0, 0.0]).unwrap();
        let after: Vec<Vec<f64>> = net
            .params_mut()
            .iter()
            .map(|p| p.value().data().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn zero_learning_rate_leaves_phi_unchanged() {
        let mut cfg = small_cfg();
        let mut net = init_net(3, &cfg, 10);
        cfg.gamma = 0.0;
        let before: Vec<Vec<f64>> = net
            .params_mut()
            .iter()
            .map(|p| p.value().data().to_vec())
            .collect();
        let state = PolicyState::initial(3, cfg.lstm_hidden).unwrap();
        let (_, _, trace) = policy_forward(&net, &state, &[1.0, 0.5, -1.0]).unwrap();
        let mut opt = Adam::new();
        policy_update(&mut net, &mut opt, &cfg, &trace, &[1], &[2.0]).unwrap();
        let after: Vec<Vec<f64>> = net
            .params_mut()
            .iter()
            .map(|p| p.value().data().to_vec())
            .collect();
        assert_eq!(before, after);
    }

    #[test]
    fn single_domain_update_raises_its_probability() {
        // Prob-weighted ascent with a positive detached loss must push
        // the selected domain's probability up on an identical re-run.
        let mut cfg = small_cfg();
        cfg.entropy_weight = 0.0;
        cfg.gamma = 1e-3;
        let mut net = init_net(4, &cfg, 11);
        let state = PolicyState::initial(4, cfg.lstm_hidden).unwrap();
        let q = [0.4, 1.1, -0.7, 0.0];
        let (before, _, trace) = policy_forward(&net, &state, &q).unwrap();
        let mut opt = Adam::new();
        policy_update(&mut net, &mut opt, &cfg, &trace, &[2], &[1.5]).unwrap();
        let (after, _, _) = policy_forward(&net, &state, &q).unwrap();
        assert!(
            after.values()[2] > before.values()[2],
            "selected probability must strictly increase: {} -> {}",
            before.values()[2],
            after.values()[2]
        );
    }

    #[test]
    fn logprob_surrogate_gradient_also_checks_out() {
        let mut cfg = small_cfg();
        cfg.surrogate = SurrogateForm::LogProbWeighted;
        let k = 4;
        let mut net = init_net(k, &cfg, 13);
        let state = PolicyState::initial(k, cfg.lstm_hidden).unwrap();
        let q = [0.9, -0.1, 0.4, 1.3];
        let selected = [0usize, 3];
        let losses = [1.1, 0.4];
        let (_, _, trace) = policy_forward(&net, &state, &q).unwrap();
        let analytic = surrogate_phi_gradient(&mut net, &cfg, &trace, &selected, &losses).unwrap();
        let numeric = finite_difference_grad(
            &mut net,
            |n| n.params_mut(),
            |n| {
                let (_, _, t) = policy_forward(n, &state, &q).unwrap();
                surrogate_value(&t.probs, &selected, &losses, &cfg)
            },
            1e-5,
        );
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(max_rel_error(a, n, 1e-6) < 1e-4);
        }
    }

    #[test]
    fn top_m_fixtures() {
        let mut rng = stream(0, tags::SELECT, 0);
        let d = SamplingDistribution::from_weights(&[0.5, 0.3, 0.15, 0.05]).unwrap();
        assert_eq!(
            select_domains(&d, 2, SelectionMode::TopM, &mut rng).unwrap(),
            vec![0, 1]
        );

        let u = SamplingDistribution::uniform(4).unwrap();
        assert_eq!(
            select_domains(&u, 4, SelectionMode::TopM, &mut rng).unwrap(),
            vec![0, 1, 2, 3]
        );

        let tie = SamplingDistribution::from_weights(&[0.4, 0.4, 0.2]).unwrap();
        assert_eq!(
            select_domains(&tie, 1, SelectionMode::TopM, &mut rng).unwrap(),
            vec![0],
            "ties break toward the lower index"
        );
    }

    #[test]
    fn selection_rejects_m_above_k() {
        let mut rng = stream(0, tags::SELECT, 0);
        let d = SamplingDistribution::uniform(3).unwrap();
        assert!(select_domains(&d, 4, SelectionMode::TopM, &mut rng).is_err());
    }

    #[test]
    fn top_m_is_invariant_under_positive_rescaling_of_scores() {
        let logits = [1.2, -0.4, 0.9, 0.1, 2.2];
        for scale in [0.5, 1.0, 3.0] {
            let scaled: Vec<f64> = logits.iter().map(|l| l * scale).collect();
            // Positive rescaling of logits preserves the ordering, so the
            // selected set is unchanged.
            let base = SamplingDistribution::from_weights(&softmax(&logits).unwrap()).unwrap();
            let resc = SamplingDistribution::from_weights(&softmax(&scaled).unwrap()).unwrap();
            let mut rng = stream(0, tags::SELECT, 1);
            let a = select_domains(&base, 2, SelectionMode::TopM, &mut rng).unwrap();
            let b = select_domains(&resc, 2, SelectionMode::TopM, &mut rng).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn stochastic_selection_returns_distinct_sorted_ids() {
        let d = SamplingDistribution::from_weights(&[0.7, 0.1, 0.1, 0.1]).unwrap();
        let mut rng = stream(5, tags::SELECT, 2);
        for _ in 0..100 {
            let ids = select_domains(&d, 3, SelectionMode::Stochastic, &mut rng).unwrap();
            assert_eq!(ids.len(), 3);
            assert!(ids.windows(2).all(|w| w[0] < w[1]));
            assert!(ids.iter().all(|&i| i < 4));
        }
    }

    #[test]
    fn checkpoint_round_trips_network_and_state() {
        let cfg = small_cfg();
        let net = init_net(4, &cfg, 21);
        let state = PolicyState::initial(4, cfg.lstm_hidden).unwrap();
        let (_, state, _) = policy_forward(&net, &state, &[0.1, 0.2, 0.3, 0.4]).unwrap();

        let text = serde_json::to_string(&(&net, &state)).unwrap();
        let (net2, state2): (PolicyNetwork, PolicyState) = serde_json::from_str(&text).unwrap();
        let q = [1.0, -0.5, 0.0, 0.25];
        let (d1, _, _) = policy_forward(&net, &state, &q).unwrap();
        let (d2, _, _) = policy_forward(&net2, &state2, &q).unwrap();
        assert_eq!(d1, d2);
    }
}
