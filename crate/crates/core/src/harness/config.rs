//! Experiment configuration: a flat `key = value` text format with
//! dotted sections, a closed key schema, and canonical re-serialization
//! so a resolved config echoes and reparses to an equal structure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metalearn::{MetaConfig, MetaVariant, OuterOptKind};
use crate::sampling::{PolicyConfig, PpqMode, SamplerChoice, SelectionMode};
use crate::taskgen::{SuiteConfig, SuitePreset};
use crate::{Error, Result};

/// Selection-mode setting: per-sampler default or an explicit mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionChoice {
    SamplerDefault,
    Mode(SelectionMode),
}

impl SelectionChoice {
    pub fn resolve(&self, sampler: &SamplerChoice) -> SelectionMode {
        match self {
            SelectionChoice::SamplerDefault => sampler.default_selection(),
            SelectionChoice::Mode(m) => *m,
        }
    }

    fn as_text(&self) -> String {
        match self {
            SelectionChoice::SamplerDefault => "default".into(),
            SelectionChoice::Mode(m) => m.to_string(),
        }
    }
}

impl FromStr for SelectionChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "default" {
            Ok(SelectionChoice::SamplerDefault)
        } else {
            Ok(SelectionChoice::Mode(s.parse()?))
        }
    }
}

/// Sampler kind plus the per-kind knobs (all carried so the echo is
/// lossless regardless of the active kind).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub kind: String,
    pub selection: SelectionChoice,
    pub window: usize,
    pub decay: f64,
    pub ppq_mode: PpqMode,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            kind: "uniform".into(),
            selection: SelectionChoice::SamplerDefault,
            window: 10,
            decay: 0.9,
            ppq_mode: PpqMode::Quantity,
        }
    }
}

impl SamplerSettings {
    pub fn choice(&self) -> Result<SamplerChoice> {
        Ok(match self.kind.parse::<SamplerChoice>()? {
            SamplerChoice::Ppq { .. } => SamplerChoice::Ppq { mode: self.ppq_mode },
            SamplerChoice::Ppaql { .. } => SamplerChoice::Ppaql { window: self.window },
            SamplerChoice::Ppeaql { .. } => SamplerChoice::Ppeaql { decay: self.decay },
            other => other,
        })
    }

    pub fn selection_mode(&self) -> Result<SelectionMode> {
        Ok(self.selection.resolve(&self.choice()?))
    }
}

/// Meta-test schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Evaluate every this many iterations (and at the final one).
    pub every: u64,
    pub n_tasks: usize,
    /// Support examples used for target adaptation.
    pub shots: usize,
    /// Adaptation steps at evaluation time.
    pub steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every: 50,
            n_tasks: 50,
            shots: 24,
            steps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub suite: SuiteConfig,
    pub sampler: SamplerSettings,
    pub policy: PolicyConfig,
    pub meta: MetaConfig,
    /// Hidden width of the task model.
    pub model_hidden: usize,
    /// Meta-training iterations (S).
    pub iterations: u64,
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    pub jobs: usize,
    /// Record wall-clock times in metrics. Off by default so metrics
    /// files are byte-identical across reruns.
    pub timing: bool,
    /// Samplers for the `compare` command.
    pub compare_samplers: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: SuiteConfig::new(SuitePreset::Balanced, 8, 48),
            sampler: SamplerSettings::default(),
            policy: PolicyConfig::default(),
            meta: MetaConfig::default(),
            model_hidden: 40,
            iterations: 2000,
            eval: EvalConfig::default(),
            seeds: vec![0],
            out_dir: None,
            jobs: 1,
            timing: false,
            compare_samplers: vec!["uniform".into(), "ppql".into(), "ams".into()],
        }
    }
}

/// Parses a seed list: a single value, a comma list, or an inclusive
/// `lo..hi` range.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Config("run.seeds must not be empty".into()));
    }
    if let Some((a, b)) = text.split_once("..") {
        let lo: u64 = a
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad seed range start '{a}': {e}")))?;
        let hi: u64 = b
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad seed range end '{b}': {e}")))?;
        if hi < lo {
            return Err(Error::Config(format!("empty seed range {lo}..{hi}")));
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::Config(format!("bad seed '{s}': {e}")))
        })
        .collect()
}

fn seeds_to_text(seeds: &[u64]) -> String {
    seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

/// Parses flat `key = value` text into an ordered map. `#` starts a
/// comment; duplicate keys are rejected.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("duplicate key '{key}'")));
        }
    }
    Ok(map)
}

struct KeyReader {
    map: BTreeMap<String, String>,
    used: std::collections::BTreeSet<String>,
}

impl KeyReader {
    fn new(map: BTreeMap<String, String>) -> Self {
        Self {
            map,
            used: Default::default(),
        }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.map.get(key).cloned()
    }

    fn parse<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<T>()
                .map_err(|e| Error::Config(format!("key '{key}': {e}"))),
        }
    }

    fn required(&mut self, key: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    fn finish(self) -> Result<()> {
        let unknown: Vec<String> = self
            .map
            .keys()
            .filter(|k| !self.used.contains(*k))
            .cloned()
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown key '{}'", unknown.join("', '"))))
        }
    }
}

impl ExperimentConfig {
    /// Resolves a key/value map into a validated config. Required keys:
    /// `suite.preset`, `sampler.kind`, `run.iterations`.
    pub fn from_map(map: BTreeMap<String, String>) -> Result<Self> {
        let mut r = KeyReader::new(map);
        let defaults = ExperimentConfig::default();

        let preset: SuitePreset = r.required("suite.preset")?.parse()?;
        let domains: usize = r.parse("suite.K", defaults.suite.domains)?;
        let w: usize = r.parse("suite.w", defaults.suite.examples_per_task)?;
        let mut suite = SuiteConfig::new(preset, domains, w);
        suite.family = match r.take("suite.family") {
            None => defaults.suite.family,
            Some(v) => v.parse()?,
        };
        suite.pool_size = r.parse("suite.pool_size", defaults.suite.pool_size)?;
        suite.quantity_ratio = r.parse("suite.quantity_ratio", defaults.suite.quantity_ratio)?;
        suite.omega_min = r.parse("suite.omega_min", defaults.suite.omega_min)?;
        suite.omega_max = r.parse("suite.omega_max", defaults.suite.omega_max)?;
        suite.noise_min = r.parse("suite.noise_min", defaults.suite.noise_min)?;
        suite.noise_max = r.parse("suite.noise_max", defaults.suite.noise_max)?;
        suite.classes = r.parse("suite.classes", defaults.suite.classes)?;
        suite.overlap_min = r.parse("suite.overlap_min", defaults.suite.overlap_min)?;
        suite.overlap_max = r.parse("suite.overlap_max", defaults.suite.overlap_max)?;

        let sampler = SamplerSettings {
            kind: r.required("sampler.kind")?,
            selection: match r.take("sampler.selection") {
                None => SelectionChoice::SamplerDefault,
                Some(v) => v.parse()?,
            },
            window: r.parse("sampler.window", defaults.sampler.window)?,
            decay: r.parse("sampler.decay", defaults.sampler.decay)?,
            ppq_mode: match r.take("sampler.ppq_mode") {
                None => defaults.sampler.ppq_mode,
                Some(v) => match v.as_str() {
                    "quantity" => PpqMode::Quantity,
                    "log-combination" => PpqMode::LogCombination,
                    other => {
                        return Err(Error::Config(format!(
                            "key 'sampler.ppq_mode': unknown mode '{other}'"
                        )))
                    }
                },
            },
        };
        sampler.choice()?.validate()?;

        let mut policy = PolicyConfig::default();
        policy.gamma = r.parse("policy.gamma", policy.gamma)?;
        policy.entropy_weight = r.parse("policy.entropy_weight", policy.entropy_weight)?;
        policy.entropy_sign = match r.take("policy.entropy_sign") {
            None => policy.entropy_sign,
            Some(v) => v.parse()?,
        };
        policy.normalization = match r.take("policy.normalization") {
            None => policy.normalization,
            Some(v) => v.parse()?,
        };
        policy.surrogate = match r.take("policy.surrogate") {
            None => policy.surrogate,
            Some(v) => v.parse()?,
        };
        policy.baseline = match r.take("policy.baseline") {
            None => policy.baseline,
            Some(v) => v.parse()?,
        };
        policy.weight_decay = r.parse("policy.weight_decay", policy.weight_decay)?;
        policy.adam_eps = r.parse("policy.adam_eps", policy.adam_eps)?;
        policy.attention_dim = r.parse("policy.attention_dim", policy.attention_dim)?;
        policy.lstm_input = r.parse("policy.lstm_input", policy.lstm_input)?;
        policy.lstm_hidden = r.parse("policy.lstm_hidden", policy.lstm_hidden)?;
        policy.validate()?;

        let mut meta = MetaConfig::default();
        meta.variant = match r.take("meta.variant") {
            None => meta.variant,
            Some(v) => v.parse()?,
        };
        meta.alpha = r.parse("meta.alpha", meta.alpha)?;
        meta.inner_steps = r.parse("meta.inner_steps", meta.inner_steps)?;
        meta.beta = r.parse("meta.beta", meta.beta)?;
        meta.batch_domains = r.parse("meta.M", meta.batch_domains)?;
        meta.outer_opt = match r.take("meta.outer_opt") {
            None => meta.outer_opt,
            Some(v) => v.parse()?,
        };
        meta.hvp_eps = r.parse("meta.hvp_eps", meta.hvp_eps)?;
        meta.validate()?;

        let model_hidden: usize = r.parse("model.hidden", defaults.model_hidden)?;

        let iterations: u64 = r
            .required("run.iterations")?
            .parse()
            .map_err(|e| Error::Config(format!("key 'run.iterations': {e}")))?;
        let seeds = match r.take("run.seeds") {
            None => defaults.seeds,
            Some(v) => parse_seeds(&v)?,
        };
        let out_dir = match r.take("run.out") {
            None => None,
            Some(v) if v.is_empty() => None,
            Some(v) => Some(PathBuf::from(v)),
        };
        let jobs: usize = r.parse("run.jobs", defaults.jobs)?;

        let mut eval = EvalConfig::default();
        eval.every = r.parse("eval.every", eval.every)?;
        eval.n_tasks = r.parse("eval.n_tasks", eval.n_tasks)?;
        eval.shots = r.parse("eval.shots", eval.shots.min(w / 2))?;
        eval.steps = r.parse("eval.steps", eval.steps)?;

        let timing: bool = r.parse("metrics.timing", defaults.timing)?;

        let compare_samplers = match r.take("compare.samplers") {
            None => defaults.compare_samplers,
            Some(v) => v.split(',').map(|s| s.trim().to_string()).collect(),
        };

        r.finish()?;

        let cfg = Self {
            suite,
            sampler,
            policy,
            meta,
            model_hidden,
            iterations,
            eval,
            seeds,
            out_dir,
            jobs,
            timing,
            compare_samplers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_map(parse_flat(text)?)
    }

    /// Applies `key=value` overrides on top of a parsed map. Overrides
    /// must name schema keys; that is checked by the resolve step.
    pub fn from_text_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = parse_flat(text)?;
        for (k, v) in overrides {
            map.insert(k.clone(), v.clone());
        }
        Self::from_map(map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("run.iterations must be >= 1".into()));
        }
        if self.meta.batch_domains > self.suite.domains {
            return Err(Error::Config(format!(
                "meta.M = {} exceeds suite.K = {}",
                self.meta.batch_domains, self.suite.domains
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("run.seeds must not be empty".into()));
        }
        if self.jobs < 1 {
            return Err(Error::Config("run.jobs must be >= 1".into()));
        }
        if self.eval.every < 1 {
            return Err(Error::Config("eval.every must be >= 1".into()));
        }
        if self.eval.n_tasks < 1 {
            return Err(Error::Config("eval.n_tasks must be >= 1".into()));
        }
        if self.eval.shots < 1 || self.eval.shots > self.suite.examples_per_task / 2 {
            return Err(Error::Config(format!(
                "eval.shots must be in 1..={}, got {}",
                self.suite.examples_per_task / 2,
                self.eval.shots
            )));
        }
        if self.model_hidden < 1 {
            return Err(Error::Config("model.hidden must be >= 1".into()));
        }
        for s in &self.compare_samplers {
            s.parse::<SamplerChoice>()?;
        }
        Ok(())
    }

    /// Canonical flat-text form; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("suite.preset", self.suite.preset.to_string());
        kv("suite.K", self.suite.domains.to_string());
        kv("suite.w", self.suite.examples_per_task.to_string());
        kv("suite.family", self.suite.family.to_string());
        kv("suite.pool_size", self.suite.pool_size.to_string());
        kv("suite.quantity_ratio", self.suite.quantity_ratio.to_string());
        kv("suite.omega_min", self.suite.omega_min.to_string());
        kv("suite.omega_max", self.suite.omega_max.to_string());
        kv("suite.noise_min", self.suite.noise_min.to_string());
        kv("suite.noise_max", self.suite.noise_max.to_string());
        kv("suite.classes", self.suite.classes.to_string());
        kv("suite.overlap_min", self.suite.overlap_min.to_string());
        kv("suite.overlap_max", self.suite.overlap_max.to_string());
        kv("sampler.kind", self.sampler.kind.clone());
        kv("sampler.selection", self.sampler.selection.as_text());
        kv("sampler.window", self.sampler.window.to_string());
        kv("sampler.decay", self.sampler.decay.to_string());
        kv(
            "sampler.ppq_mode",
            match self.sampler.ppq_mode {
                PpqMode::Quantity => "quantity".into(),
                PpqMode::LogCombination => "log-combination".into(),
            },
        );
        kv("policy.gamma", self.policy.gamma.to_string());
        kv("policy.entropy_weight", self.policy.entropy_weight.to_string());
        kv("policy.entropy_sign", self.policy.entropy_sign.to_string());
        kv("policy.normalization", self.policy.normalization.to_string());
        kv("policy.surrogate", self.policy.surrogate.to_string());
        kv("policy.baseline", self.policy.baseline.to_string());
        kv("policy.weight_decay", self.policy.weight_decay.to_string());
        kv("policy.adam_eps", self.policy.adam_eps.to_string());
        kv("policy.attention_dim", self.policy.attention_dim.to_string());
        kv("policy.lstm_input", self.policy.lstm_input.to_string());
        kv("policy.lstm_hidden", self.policy.lstm_hidden.to_string());
        kv("meta.variant", self.meta.variant.to_string());
        kv("meta.alpha", self.meta.alpha.to_string());
        kv("meta.inner_steps", self.meta.inner_steps.to_string());
        kv("meta.beta", self.meta.beta.to_string());
        kv("meta.M", self.meta.batch_domains.to_string());
        kv("meta.outer_opt", self.meta.outer_opt.to_string());
        kv("meta.hvp_eps", self.meta.hvp_eps.to_string());
        kv("model.hidden", self.model_hidden.to_string());
        kv("run.iterations", self.iterations.to_string());
        kv("run.seeds", seeds_to_text(&self.seeds));
        kv(
            "run.out",
            self.out_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("run.jobs", self.jobs.to_string());
        kv("eval.every", self.eval.every.to_string());
        kv("eval.n_tasks", self.eval.n_tasks.to_string());
        kv("eval.shots", self.eval.shots.to_string());
        kv("eval.steps", self.eval.steps.to_string());
        kv("metrics.timing", self.timing.to_string());
        kv("compare.samplers", self.compare_samplers.join(","));
        out
    }

    /// Convenience constructor used by tests: preset + sampler + S.
    pub fn quick(preset: SuitePreset, sampler: &str, iterations: u64) -> Self {
        let mut cfg = ExperimentConfig::default();
        cfg.suite.preset = preset;
        cfg.sampler.kind = sampler.to_string();
        cfg.iterations = iterations;
        cfg
    }

    pub fn meta_variant(&self) -> MetaVariant {
        self.meta.variant
    }

    pub fn outer_opt(&self) -> OuterOptKind {
        self.meta.outer_opt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
suite.preset = mixed
sampler.kind = ams
run.iterations = 100
";

    #[test]
    fn minimal_config_resolves_with_defaults() {
        let cfg = ExperimentConfig::from_text(MINIMAL).unwrap();
        assert_eq!(cfg.suite.preset, SuitePreset::Mixed);
        assert_eq!(cfg.sampler.kind, "ams");
        assert_eq!(cfg.iterations, 100);
        assert_eq!(cfg.meta.batch_domains, 3);
        assert_eq!(cfg.policy.gamma, 0.035);
        assert_eq!(cfg.policy.entropy_weight, 1e-5);
        assert_eq!(cfg.policy.lstm_hidden, 100);
        assert_eq!(cfg.policy.lstm_input, 32);
        assert_eq!(cfg.suite.examples_per_task, 48);
        assert_eq!(cfg.eval.shots, 24);
    }

    #[test]
    fn missing_required_key_names_it() {
        let err = ExperimentConfig::from_text("sampler.kind = ams\nrun.iterations = 5\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("suite.preset"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let text = format!("{MINIMAL}meta.momentum = 0.9\n");
        let err = ExperimentConfig::from_text(&text).unwrap_err().to_string();
        assert!(err.contains("meta.momentum"), "{err}");
    }

    #[test]
    fn type_mismatch_names_the_key() {
        let text = format!("{MINIMAL}meta.alpha = fast\n");
        let err = ExperimentConfig::from_text(&text).unwrap_err().to_string();
        assert!(err.contains("meta.alpha"), "{err}");
    }

    #[test]
    fn empty_overrides_are_identity() {
        let a = ExperimentConfig::from_text(MINIMAL).unwrap();
        let b = ExperimentConfig::from_text_with_overrides(MINIMAL, &[]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn overrides_take_precedence() {
        let text = format!("{MINIMAL}meta.M = 2\n");
        let cfg = ExperimentConfig::from_text_with_overrides(
            &text,
            &[("meta.M".into(), "3".into())],
        )
        .unwrap();
        assert_eq!(cfg.meta.batch_domains, 3);
    }

    #[test]
    fn round_trip_is_equal() {
        let text = format!(
            "{MINIMAL}meta.variant = maml\nsampler.selection = stochastic\nrun.seeds = 3..5\n"
        );
        let cfg = ExperimentConfig::from_text(&text).unwrap();
        assert_eq!(cfg.seeds, vec![3, 4, 5]);
        let echoed = cfg.to_text();
        let back = ExperimentConfig::from_text(&echoed).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# experiment\n\nsuite.preset = balanced # inline\nsampler.kind = ppql\nrun.iterations = 10\n";
        let cfg = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(cfg.suite.preset, SuitePreset::Balanced);
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = format!("{MINIMAL}suite.preset = balanced\n");
        assert!(ExperimentConfig::from_text(&text).is_err());
    }

    #[test]
    fn m_larger_than_k_is_rejected() {
        let text = format!("{MINIMAL}suite.K = 2\n");
        let err = ExperimentConfig::from_text(&text).unwrap_err().to_string();
        assert!(err.contains("meta.M"), "{err}");
    }

    #[test]
    fn seed_lists_parse_both_ways() {
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert_eq!(parse_seeds("1,2,9").unwrap(), vec![1, 2, 9]);
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2, 3]);
        assert!(parse_seeds("5..2").is_err());
        assert!(parse_seeds("").is_err());
    }
}
