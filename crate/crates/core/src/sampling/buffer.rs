use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Compensated (Kahan) summation.
pub fn kahan_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// K-dim probability vector over source domains.
///
/// Construction normalizes and then folds any residual rounding error
/// into the largest entry, so the compensated sum is exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingDistribution {
    p: Vec<f64>,
}

impl SamplingDistribution {
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Dimension("empty sampling distribution".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Numeric(format!(
                "sampling weights must be finite and nonnegative: {weights:?}"
            )));
        }
        let total = kahan_sum(weights);
        if total <= 0.0 {
            return Err(Error::Numeric("sampling weights sum to zero".into()));
        }
        let mut p: Vec<f64> = weights.iter().map(|w| w / total).collect();
        for _ in 0..4 {
            let residual = 1.0 - kahan_sum(&p);
            if residual == 0.0 {
                break;
            }
            let argmax = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
                .map(|(i, _)| i)
                .expect("non-empty");
            p[argmax] += residual;
        }
        Ok(Self { p })
    }

    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Dimension("uniform distribution over 0 domains".into()));
        }
        Self::from_weights(&vec![1.0; k])
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    /// Simplex validity: nonnegative entries summing to 1 within 1e-12.
    pub fn is_valid(&self) -> bool {
        self.p.iter().all(|v| v.is_finite() && *v >= 0.0)
            && (kahan_sum(&self.p) - 1.0).abs() <= 1e-12
    }
}

/// Last-known per-domain query losses, all zeros at start. An entry
/// changes only when its domain is sampled; everything else persists
/// bit-for-bit. The observed mask separates "never sampled" from a
/// genuine zero loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLossBuffer {
    q: Vec<f64>,
    observed: Vec<bool>,
}

impl QueryLossBuffer {
    pub fn new(k: usize) -> Self {
        Self {
            q: vec![0.0; k],
            observed: vec![false; k],
        }
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.q
    }

    pub fn observed(&self, k: usize) -> bool {
        self.observed[k]
    }

    pub fn any_observed(&self) -> bool {
        self.observed.iter().any(|o| *o)
    }

    /// Overwrites the sampled entries with their new losses.
    pub fn update(&mut self, ids: &[usize], losses: &[f64]) -> Result<()> {
        if ids.len() != losses.len() {
            return Err(Error::Argument(format!(
                "{} ids but {} losses",
                ids.len(),
                losses.len()
            )));
        }
        for (&id, &loss) in ids.iter().zip(losses) {
            if id >= self.q.len() {
                return Err(Error::Index(format!(
                    "domain {id} out of range 0..{}",
                    self.q.len()
                )));
            }
            self.q[id] = loss;
            self.observed[id] = true;
        }
        Ok(())
    }
}

/// Free-function form used by the training loop.
pub fn update_buffer(buffer: &mut QueryLossBuffer, ids: &[usize], losses: &[f64]) -> Result<()> {
    buffer.update(ids, losses)
}

/// Z-score across the K entries (population std). Degenerate spreads
/// map to all zeros so equal losses stay indistinguishable.
pub fn zscore(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    let std = var.sqrt();
    if std < 1e-12 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}
