//! Synthetic multi-domain task suites.
//!
//! Each domain is one generative function (a sinusoid, or a Gaussian
//! cluster layout) with a fixed finite example pool; a task is a draw of
//! `w` distinct pool examples split into support and query halves.
//! Suite presets control how example quantity and task difficulty are
//! distributed across domains.

mod quantity;

pub use quantity::{combinations_exact, ln_combinations};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{self, tags};
use crate::{Error, Result, StreamRng};

/// Input range for sinusoid regression examples.
const SINUSOID_X_RANGE: f64 = 2.5;

/// Example label: regression targets or a class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Label {
    Real(Vec<f64>),
    Class(usize),
}

/// One input/label pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub label: Label,
}

/// Generative family and difficulty parameters of one domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyParams {
    SinusoidRegression {
        amplitude: f64,
        omega: f64,
        phase: f64,
        noise_std: f64,
    },
    GaussianClusterClassification {
        classes: usize,
        overlap: f64,
    },
}

impl FamilyParams {
    pub fn input_dim(&self) -> usize {
        match self {
            FamilyParams::SinusoidRegression { .. } => 1,
            FamilyParams::GaussianClusterClassification { .. } => 2,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FamilyParams::SinusoidRegression { .. } => 1,
            FamilyParams::GaussianClusterClassification { classes, .. } => *classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, FamilyParams::GaussianClusterClassification { .. })
    }
}

/// Family selector for suite construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Sinusoid,
    Clusters,
}

impl FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoid" => Ok(FamilyKind::Sinusoid),
            "clusters" => Ok(FamilyKind::Clusters),
            other => Err(Error::Config(format!("unknown suite family '{other}'"))),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilyKind::Sinusoid => write!(f, "sinusoid"),
            FamilyKind::Clusters => write!(f, "clusters"),
        }
    }
}

/// One source or target domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub id: usize,
    pub family: FamilyParams,
    pub pool_size: usize,
    /// Seed of the domain's private example-pool stream.
    pub seed: u64,
}

impl DomainSpec {
    /// Scalar used only for ranking domains by difficulty. Monotone in
    /// every difficulty knob the presets vary.
    pub fn difficulty_score(&self) -> f64 {
        match &self.family {
            FamilyParams::SinusoidRegression { omega, noise_std, .. } => omega + noise_std,
            FamilyParams::GaussianClusterClassification { overlap, .. } => *overlap,
        }
    }

    /// Regenerates the domain's fixed example pool from its seed.
    pub fn generate_pool(&self) -> Vec<Example> {
        let mut rng = StreamRng::seed_from_u64(self.seed);
        (0..self.pool_size).map(|_| self.generate_example(&mut rng)).collect()
    }

    fn generate_example(&self, rng: &mut StreamRng) -> Example {
        match &self.family {
            FamilyParams::SinusoidRegression {
                amplitude,
                omega,
                phase,
                noise_std,
            } => {
                let x = rng.gen_range(-SINUSOID_X_RANGE..SINUSOID_X_RANGE);
                let noise: f64 = rng.sample(StandardNormal);
                let y = amplitude * (omega * x + phase).sin() + noise_std * noise;
                Example {
                    x: vec![x],
                    label: Label::Real(vec![y]),
                }
            }
            FamilyParams::GaussianClusterClassification { classes, overlap } => {
                let class = rng.gen_range(0..*classes);
                let angle = 2.0 * std::f64::consts::PI * class as f64 / *classes as f64;
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                Example {
                    x: vec![angle.cos() + overlap * nx, angle.sin() + overlap * ny],
                    label: Label::Class(class),
                }
            }
        }
    }
}

/// One sampled task: `w` pool examples split into equal support and
/// query halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub domain_id: usize,
    pub support: Vec<Example>,
    pub query: Vec<Example>,
}

/// Suite presets realizing the two imbalance modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuitePreset {
    Balanced,
    QuantityImbalance,
    DifficultyImbalance,
    Mixed,
}

impl SuitePreset {
    pub const ALL: [SuitePreset; 4] = [
        SuitePreset::Balanced,
        SuitePreset::QuantityImbalance,
        SuitePreset::DifficultyImbalance,
        SuitePreset::Mixed,
    ];

    fn varies_quantity(&self) -> bool {
        matches!(self, SuitePreset::QuantityImbalance | SuitePreset::Mixed)
    }

    fn varies_difficulty(&self) -> bool {
        matches!(self, SuitePreset::DifficultyImbalance | SuitePreset::Mixed)
    }
}

impl FromStr for SuitePreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(SuitePreset::Balanced),
            "quantity-imbalance" => Ok(SuitePreset::QuantityImbalance),
            "difficulty-imbalance" => Ok(SuitePreset::DifficultyImbalance),
            "mixed" => Ok(SuitePreset::Mixed),
            other => Err(Error::Config(format!("unknown suite preset '{other}'"))),
        }
    }
}

impl fmt::Display for SuitePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SuitePreset::Balanced => "balanced",
            SuitePreset::QuantityImbalance => "quantity-imbalance",
            SuitePreset::DifficultyImbalance => "difficulty-imbalance",
            SuitePreset::Mixed => "mixed",
        };
        write!(f, "{s}")
    }
}

/// All knobs needed to build a suite deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub preset: SuitePreset,
    pub domains: usize,
    pub examples_per_task: usize,
    pub family: FamilyKind,
    /// Smallest per-domain pool; also the uniform pool for presets that
    /// do not vary quantity.
    pub pool_size: usize,
    /// max:min pool ratio for the quantity-imbalanced presets.
    pub quantity_ratio: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub noise_min: f64,
    pub noise_max: f64,
    /// Cluster-count for the classification family.
    pub classes: usize,
    pub overlap_min: f64,
    pub overlap_max: f64,
}

impl SuiteConfig {
    pub fn new(preset: SuitePreset, domains: usize, examples_per_task: usize) -> Self {
        Self {
            preset,
            domains,
            examples_per_task,
            family: FamilyKind::Sinusoid,
            pool_size: 256,
            quantity_ratio: 8.0,
            omega_min: 0.3,
            omega_max: 2.5,
            noise_min: 0.05,
            noise_max: 0.08,
            classes: 3,
            overlap_min: 0.1,
            overlap_max: 0.6,
        }
    }
}

/// Difficulty fractions at which the held-out target domains sit,
/// inside the source range.
const TARGET_FRACTIONS: [f64; 2] = [0.52, 0.85];

/// The task suite: K source domains plus held-out targets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSuite {
    pub config: SuiteConfig,
    pub master_seed: u64,
    pub sources: Vec<DomainSpec>,
    pub targets: Vec<DomainSpec>,
    #[serde(skip)]
    source_pools: Vec<Vec<Example>>,
    #[serde(skip)]
    target_pools: Vec<Vec<Example>>,
}

impl PartialEq for DomainSuite {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.master_seed == other.master_seed
            && self.sources == other.sources
            && self.targets == other.targets
    }
}

/// Builds a suite from a preset. Difficulty fraction `t` runs over
/// domains; quantity-imbalanced presets assign geometric pool sizes
/// with the largest pool first, so `mixed` anti-correlates quantity
/// with difficulty by construction.
pub fn build_suite(cfg: &SuiteConfig, master_seed: u64) -> Result<DomainSuite> {
    let k = cfg.domains;
    let w = cfg.examples_per_task;
    if k < 2 {
        return Err(Error::Config(format!("suite needs at least 2 domains, got {k}")));
    }
    if w < 4 || w % 2 != 0 {
        return Err(Error::Config(format!(
            "examples_per_task must be even and >= 4, got {w}"
        )));
    }
    if cfg.quantity_ratio < 1.0 {
        return Err(Error::Config("quantity_ratio must be >= 1".into()));
    }

    let mut suite_rng = rng::stream(master_seed, tags::SUITE, 0);
    // One phase for the whole suite: domains differ by difficulty, not
    // by an unlearnable per-domain offset, and targets stay inside the
    // source family.
    let phase = suite_rng.gen_range(0.0..std::f64::consts::TAU);
    let mut sources = Vec::with_capacity(k);
    for idx in 0..k {
        let t = idx as f64 / (k - 1) as f64;
        let family = family_at(cfg, t, cfg.preset.varies_difficulty(), phase);
        let pool_size = pool_size_at(cfg, t, w)?;
        sources.push(DomainSpec {
            id: idx,
            family,
            pool_size,
            seed: rng::derive_seed(master_seed, tags::DOMAIN_POOL, idx as u64),
        });
    }

    let mut targets = Vec::with_capacity(TARGET_FRACTIONS.len());
    for (tidx, &frac) in TARGET_FRACTIONS.iter().enumerate() {
        // Targets always interpolate so their difficulty parameters stay
        // distinct from every source, including on uniform presets.
        let family = family_at(cfg, frac, true, phase);
        let pool_size = cfg.pool_size.max(w);
        targets.push(DomainSpec {
            id: tidx,
            family,
            pool_size,
            seed: rng::derive_seed(master_seed, tags::DOMAIN_POOL, 1_000_000 + tidx as u64),
        });
    }
    for t in &targets {
        if sources.iter().any(|s| difficulty_equal(&s.family, &t.family)) {
            return Err(Error::Config(
                "target difficulty collides with a source domain".into(),
            ));
        }
    }

    let mut suite = DomainSuite {
        config: cfg.clone(),
        master_seed,
        sources,
        targets,
        source_pools: Vec::new(),
        target_pools: Vec::new(),
    };
    suite.regenerate_pools();
    Ok(suite)
}

fn difficulty_equal(a: &FamilyParams, b: &FamilyParams) -> bool {
    match (a, b) {
        (
            FamilyParams::SinusoidRegression { omega: o1, noise_std: n1, .. },
            FamilyParams::SinusoidRegression { omega: o2, noise_std: n2, .. },
        ) => o1 == o2 && n1 == n2,
        (
            FamilyParams::GaussianClusterClassification { overlap: v1, .. },
            FamilyParams::GaussianClusterClassification { overlap: v2, .. },
        ) => v1 == v2,
        _ => false,
    }
}

fn family_at(cfg: &SuiteConfig, t: f64, interpolate: bool, phase: f64) -> FamilyParams {
    // Presets that do not vary difficulty pin it at mid-range.
    let t_eff = if interpolate { t } else { 0.5 };
    match cfg.family {
        FamilyKind::Sinusoid => {
            let omega = cfg.omega_min * (cfg.omega_max / cfg.omega_min).powf(t_eff);
            let noise = cfg.noise_min + (cfg.noise_max - cfg.noise_min) * t_eff;
            FamilyParams::SinusoidRegression {
                amplitude: 1.0,
                omega,
                phase,
                noise_std: noise,
            }
        }
        FamilyKind::Clusters => {
            let overlap = cfg.overlap_min + (cfg.overlap_max - cfg.overlap_min) * t_eff;
            FamilyParams::GaussianClusterClassification {
                classes: cfg.classes,
                overlap,
            }
        }
    }
}

fn pool_size_at(cfg: &SuiteConfig, t: f64, w: usize) -> Result<usize> {
    let size = if cfg.preset.varies_quantity() {
        // Geometric schedule from ratio*pool_size down to pool_size.
        (cfg.pool_size as f64 * cfg.quantity_ratio.powf(1.0 - t)).round() as usize
    } else {
        cfg.pool_size
    };
    if size < w {
        return Err(Error::Config(format!(
            "pool size {size} below examples_per_task {w}"
        )));
    }
    Ok(size)
}

impl DomainSuite {
    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn num_targets(&self) -> usize {
        self.targets.len()
    }

    pub fn examples_per_task(&self) -> usize {
        self.config.examples_per_task
    }

    fn regenerate_pools(&mut self) {
        self.source_pools = self.sources.iter().map(DomainSpec::generate_pool).collect();
        self.target_pools = self.targets.iter().map(DomainSpec::generate_pool).collect();
    }

    pub fn sample_source_task(&self, domain: usize, rng: &mut StreamRng) -> Result<TaskInstance> {
        let spec = self
            .sources
            .get(domain)
            .ok_or_else(|| Error::Index(format!("source domain {domain} out of range")))?;
        sample_task_from_pool(spec, &self.source_pools[domain], self.config.examples_per_task, rng)
    }

    pub fn sample_target_task(&self, target: usize, rng: &mut StreamRng) -> Result<TaskInstance> {
        let spec = self
            .targets
            .get(target)
            .ok_or_else(|| Error::Index(format!("target domain {target} out of range")))?;
        sample_task_from_pool(spec, &self.target_pools[target], self.config.examples_per_task, rng)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut suite: DomainSuite = serde_json::from_str(text)?;
        suite.regenerate_pools();
        Ok(suite)
    }
}

/// Draws `w` distinct indices uniformly without replacement; the first
/// half becomes the support set, the rest the query set.
fn sample_task_from_pool(
    spec: &DomainSpec,
    pool: &[Example],
    w: usize,
    rng: &mut StreamRng,
) -> Result<TaskInstance> {
    if pool.len() < w {
        return Err(Error::InsufficientPool {
            domain: spec.id,
            pool: pool.len(),
            needed: w,
        });
    }
    // Partial Fisher-Yates over the index range.
    let mut indices: Vec<usize> = (0..pool.len()).collect();
    for i in 0..w {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    let half = w / 2;
    let support = indices[..half].iter().map(|&i| pool[i].clone()).collect();
    let query = indices[half..w].iter().map(|&i| pool[i].clone()).collect();
    Ok(TaskInstance {
        domain_id: spec.id,
        support,
        query,
    })
}

/// Log task quantity of a domain: `ln C(pool, w)`.
pub fn task_quantity(pool: usize, w: usize) -> Result<f64> {
    ln_combinations(pool, w)
}
