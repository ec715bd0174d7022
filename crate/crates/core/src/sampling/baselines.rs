//! The five fixed baseline samplers.
//!
//! The loss-proportional family (PPQL, PPAQL, PPEAQL) weighs a domain by
//! its last-known loss signal. Domains that have never been sampled have
//! no signal yet; they are weighted at the maximum observed loss so the
//! all-zero initial buffer cannot permanently starve them.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::taskgen::{ln_combinations, DomainSuite};
use crate::Result;

use super::buffer::{QueryLossBuffer, SamplingDistribution};

/// Clamp floor for loss weights.
const LOSS_EPS: f64 = 1e-12;

/// Uniform over K domains.
pub fn uniform_probs(k: usize) -> Result<SamplingDistribution> {
    SamplingDistribution::uniform(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PpqMode {
    /// Proportional to pool size.
    Quantity,
    /// Softmax over `ln C(pool, w)`; faithful to the combinatorial task
    /// count but degenerates toward a point mass on the largest pool.
    LogCombination,
}

/// Probability proportional to task quantity.
pub fn ppq_probs(suite: &DomainSuite, mode: PpqMode) -> Result<SamplingDistribution> {
    match mode {
        PpqMode::Quantity => {
            let weights: Vec<f64> = suite.sources.iter().map(|s| s.pool_size as f64).collect();
            SamplingDistribution::from_weights(&weights)
        }
        PpqMode::LogCombination => {
            let w = suite.examples_per_task();
            let logs: Vec<f64> = suite
                .sources
                .iter()
                .map(|s| ln_combinations(s.pool_size, w))
                .collect::<Result<_>>()?;
            SamplingDistribution::from_weights(&crate::ndcore::softmax(&logs)?)
        }
    }
}

/// Weight for one domain given its loss signal and whether it has ever
/// been observed. `fallback` is the maximum observed weight.
fn loss_weight(signal: f64, seen: bool, fallback: f64) -> f64 {
    if seen {
        signal.max(LOSS_EPS)
    } else {
        fallback
    }
}

fn loss_proportional(signals: &[f64], seen: &[bool]) -> Result<SamplingDistribution> {
    if !seen.iter().any(|s| *s) {
        return SamplingDistribution::uniform(signals.len());
    }
    let fallback = signals
        .iter()
        .zip(seen)
        .filter(|(_, s)| **s)
        .map(|(v, _)| v.max(LOSS_EPS))
        .fold(LOSS_EPS, f64::max);
    let weights: Vec<f64> = signals
        .iter()
        .zip(seen)
        .map(|(&v, &s)| loss_weight(v, s, fallback))
        .collect();
    SamplingDistribution::from_weights(&weights)
}

/// Probability proportional to the last-known query loss.
pub fn ppql_probs(buffer: &QueryLossBuffer) -> Result<SamplingDistribution> {
    let seen: Vec<bool> = (0..buffer.len()).map(|k| buffer.observed(k)).collect();
    loss_proportional(buffer.values(), &seen)
}

/// Sliding-window average of the last `window` recorded losses per
/// domain (fewer while young).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WindowAverager {
    window: usize,
    history: Vec<VecDeque<f64>>,
}

impl WindowAverager {
    pub fn new(k: usize, window: usize) -> Self {
        assert!(window >= 1, "window must be >= 1");
        Self {
            window,
            history: vec![VecDeque::new(); k],
        }
    }

    pub fn observe(&mut self, ids: &[usize], losses: &[f64]) {
        for (&id, &loss) in ids.iter().zip(losses) {
            let h = &mut self.history[id];
            h.push_back(loss);
            if h.len() > self.window {
                h.pop_front();
            }
        }
    }

    pub fn mean(&self, k: usize) -> Option<f64> {
        let h = &self.history[k];
        if h.is_empty() {
            None
        } else {
            Some(h.iter().sum::<f64>() / h.len() as f64)
        }
    }

    pub fn probs(&self) -> Result<SamplingDistribution> {
        let signals: Vec<f64> = (0..self.history.len())
            .map(|k| self.mean(k).unwrap_or(0.0))
            .collect();
        let seen: Vec<bool> = self.history.iter().map(|h| !h.is_empty()).collect();
        loss_proportional(&signals, &seen)
    }
}

/// Exponential moving average of per-domain losses, updated only when a
/// domain is sampled.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmaAverager {
    decay: f64,
    ema: Vec<f64>,
    seen: Vec<bool>,
}

impl EmaAverager {
    pub fn new(k: usize, decay: f64) -> Self {
        assert!(decay > 0.0 && decay < 1.0, "decay must be in (0,1)");
        Self {
            decay,
            ema: vec![0.0; k],
            seen: vec![false; k],
        }
    }

    pub fn observe(&mut self, ids: &[usize], losses: &[f64]) {
        for (&id, &loss) in ids.iter().zip(losses) {
            self.ema[id] = self.decay * self.ema[id] + (1.0 - self.decay) * loss;
            self.seen[id] = true;
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        self.ema[k]
    }

    pub fn probs(&self) -> Result<SamplingDistribution> {
        loss_proportional(&self.ema, &self.seen)
    }
}
