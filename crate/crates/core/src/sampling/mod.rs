//! Domain samplers: five fixed baselines plus the adversarial policy.

mod baselines;
mod buffer;
mod policy;

pub use baselines::{ppq_probs, ppql_probs, uniform_probs, EmaAverager, PpqMode, WindowAverager};
pub use buffer::{kahan_sum, update_buffer, zscore, QueryLossBuffer, SamplingDistribution};
pub use policy::{
    policy_forward, policy_update, select_domains, surrogate_phi_gradient, surrogate_value,
    EntropySign, LossNormalization, PolicyConfig, PolicyNetwork, PolicyState, PolicyTrace,
    RewardBaseline, SelectionMode, SurrogateForm,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ndcore::Adam;
use crate::taskgen::DomainSuite;
use crate::{Error, Result, StreamRng};

/// Which sampler a run uses, with its per-kind knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplerChoice {
    Uniform,
    Ppq { mode: PpqMode },
    Ppql,
    Ppaql { window: usize },
    Ppeaql { decay: f64 },
    Ams,
}

impl SamplerChoice {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SamplerChoice::Uniform => "uniform",
            SamplerChoice::Ppq { .. } => "ppq",
            SamplerChoice::Ppql => "ppql",
            SamplerChoice::Ppaql { .. } => "ppaql",
            SamplerChoice::Ppeaql { .. } => "ppeaql",
            SamplerChoice::Ams => "ams",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerChoice::Ppaql { window } if *window < 1 => {
                Err(Error::Config("ppaql window must be >= 1".into()))
            }
            SamplerChoice::Ppeaql { decay } if !(*decay > 0.0 && *decay < 1.0) => {
                Err(Error::Config("ppeaql decay must be in (0,1)".into()))
            }
            _ => Ok(()),
        }
    }

    /// Selection mode used when the config says "default": the policy
    /// follows the deterministic top-M rule; the fixed baselines sample
    /// stochastically, which is what their definitions assume.
    pub fn default_selection(&self) -> SelectionMode {
        match self {
            SamplerChoice::Ams => SelectionMode::TopM,
            _ => SelectionMode::Stochastic,
        }
    }
}

impl FromStr for SamplerChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SamplerChoice::Uniform),
            "ppq" => Ok(SamplerChoice::Ppq {
                mode: PpqMode::Quantity,
            }),
            "ppql" => Ok(SamplerChoice::Ppql),
            "ppaql" => Ok(SamplerChoice::Ppaql { window: 10 }),
            "ppeaql" => Ok(SamplerChoice::Ppeaql { decay: 0.9 }),
            "ams" => Ok(SamplerChoice::Ams),
            other => Err(Error::Config(format!("unknown sampler '{other}'"))),
        }
    }
}

impl fmt::Display for SamplerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind_name())
    }
}

/// The adversarial sampler: policy network, recurrent state, optimizer,
/// and the trace of the most recent forward pass.
#[derive(Debug, Clone)]
pub struct AmsSampler {
    pub net: PolicyNetwork,
    pub state: PolicyState,
    pub opt: Adam,
    pub cfg: PolicyConfig,
    last_trace: Option<PolicyTrace>,
}

impl AmsSampler {
    pub fn new(domains: usize, cfg: PolicyConfig, rng: &mut StreamRng) -> Result<Self> {
        cfg.validate()?;
        let mut net = PolicyNetwork::new(domains, &cfg)?;
        net.init(rng);
        let state = PolicyState::initial(domains, cfg.lstm_hidden)?;
        Ok(Self {
            net,
            state,
            opt: Adam::new(),
            cfg,
            last_trace: None,
        })
    }

    fn policy_input(&self, buffer: &QueryLossBuffer) -> Vec<f64> {
        match self.cfg.normalization {
            LossNormalization::Zscore => zscore(buffer.values()),
            LossNormalization::Raw => buffer.values().to_vec(),
        }
    }

    pub fn probs(&mut self, buffer: &QueryLossBuffer) -> Result<SamplingDistribution> {
        let input = self.policy_input(buffer);
        let (dist, state, trace) = policy_forward(&self.net, &self.state, &input)?;
        self.state = state;
        self.last_trace = Some(trace);
        Ok(dist)
    }

    pub fn observe(&mut self, ids: &[usize], losses: &[f64]) -> Result<()> {
        let trace = self
            .last_trace
            .as_ref()
            .ok_or_else(|| Error::Argument("policy update before any forward pass".into()))?
            .clone();
        policy_update(&mut self.net, &mut self.opt, &self.cfg, &trace, ids, losses)
    }
}

/// Versioned checkpoint of the policy sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub config: PolicyConfig,
    pub net: PolicyNetwork,
    pub state: PolicyState,
    pub opt: Adam,
}

pub const POLICY_CHECKPOINT_VERSION: u32 = 1;

impl AmsSampler {
    pub fn to_checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            version: POLICY_CHECKPOINT_VERSION,
            config: self.cfg.clone(),
            net: self.net.clone(),
            state: self.state.clone(),
            opt: self.opt.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: PolicyCheckpoint) -> Result<Self> {
        if ckpt.version != POLICY_CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "policy checkpoint version {} unsupported (expected {})",
                ckpt.version, POLICY_CHECKPOINT_VERSION
            )));
        }
        Ok(Self {
            net: ckpt.net,
            state: ckpt.state,
            opt: ckpt.opt,
            cfg: ckpt.config,
            last_trace: None,
        })
    }
}

/// Runtime sampler driven by the training loop: produce a distribution
/// from the shared buffer, then observe the sampled domains' losses.
pub enum Sampler {
    Uniform { domains: usize },
    Ppq { dist: SamplingDistribution },
    Ppql { domains: usize },
    Ppaql(WindowAverager),
    Ppeaql(EmaAverager),
    Ams(Box<AmsSampler>),
}

impl Sampler {
    pub fn build(
        choice: &SamplerChoice,
        suite: &DomainSuite,
        policy_cfg: &PolicyConfig,
        phi_rng: &mut StreamRng,
    ) -> Result<Self> {
        choice.validate()?;
        let k = suite.num_sources();
        Ok(match choice {
            SamplerChoice::Uniform => Sampler::Uniform { domains: k },
            SamplerChoice::Ppq { mode } => Sampler::Ppq {
                dist: ppq_probs(suite, *mode)?,
            },
            SamplerChoice::Ppql => Sampler::Ppql { domains: k },
            SamplerChoice::Ppaql { window } => Sampler::Ppaql(WindowAverager::new(k, *window)),
            SamplerChoice::Ppeaql { decay } => Sampler::Ppeaql(EmaAverager::new(k, *decay)),
            SamplerChoice::Ams => {
                Sampler::Ams(Box::new(AmsSampler::new(k, policy_cfg.clone(), phi_rng)?))
            }
        })
    }

    /// Sampling distribution for the next iteration.
    pub fn probs(&mut self, buffer: &QueryLossBuffer) -> Result<SamplingDistribution> {
        match self {
            Sampler::Uniform { domains } => uniform_probs(*domains),
            Sampler::Ppq { dist } => Ok(dist.clone()),
            Sampler::Ppql { .. } => ppql_probs(buffer),
            Sampler::Ppaql(w) => w.probs(),
            Sampler::Ppeaql(e) => e.probs(),
            Sampler::Ams(a) => a.probs(buffer),
        }
    }

    /// Feeds back the sampled domains' detached losses.
    pub fn observe(&mut self, ids: &[usize], losses: &[f64]) -> Result<()> {
        match self {
            Sampler::Uniform { .. } | Sampler::Ppq { .. } | Sampler::Ppql { .. } => Ok(()),
            Sampler::Ppaql(w) => {
                w.observe(ids, losses);
                Ok(())
            }
            Sampler::Ppeaql(e) => {
                e.observe(ids, losses);
                Ok(())
            }
            Sampler::Ams(a) => a.observe(ids, losses),
        }
    }

    pub fn ams(&self) -> Option<&AmsSampler> {
        match self {
            Sampler::Ams(a) => Some(a),
            _ => None,
        }
    }
}
