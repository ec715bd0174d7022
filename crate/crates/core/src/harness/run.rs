//! One experiment run: the full training loop with metrics, periodic
//! meta-test evaluation, checkpointing, and deterministic replay.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::metalearn::{
    evaluate_adaptation, meta_step, AdaptiveModel, OuterOptimizer, TaskModel,
};
use crate::rng::{stream, tags};
use crate::sampling::{select_domains, update_buffer, QueryLossBuffer, Sampler};
use crate::taskgen::{build_suite, DomainSuite, TaskInstance};
use crate::{Error, Result, StreamRng};

use super::config::ExperimentConfig;
use super::metrics::{metrics_to_csv, MetricsRecord};
use super::stats::spearman;

/// Versioned checkpoint of the task-model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaCheckpoint {
    pub version: u32,
    pub iteration: u64,
    pub model: TaskModel,
    pub theta: Vec<f64>,
}

pub const THETA_CHECKPOINT_VERSION: u32 = 1;

/// Per-run summary written next to the metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub sampler: String,
    pub seed: u64,
    pub iterations: u64,
    /// Cumulative sample count per source domain; sums to S * M.
    pub sample_counts: Vec<u64>,
    pub total_samples: u64,
    /// Final meta-test loss per target.
    pub final_metatest: BTreeMap<String, f64>,
    pub final_metatest_mean: f64,
    /// Rank correlation between domain difficulty and sample count.
    pub spearman_difficulty_samples: f64,
    pub aborted: bool,
    pub abort_iteration: Option<u64>,
    pub abort_message: Option<String>,
}

pub struct RunOutput {
    pub summary: RunSummary,
    pub records: Vec<MetricsRecord>,
    pub run_dir: Option<PathBuf>,
}

pub fn target_names(suite: &DomainSuite) -> Vec<String> {
    (0..suite.num_targets()).map(|t| format!("t{t}")).collect()
}

/// Directory name for one (sampler, seed) run.
pub fn run_dir_name(sampler: &str, seed: u64) -> String {
    format!("{sampler}-s{seed}")
}

struct RunState {
    theta: Vec<f64>,
    sampler: Sampler,
    buffer: QueryLossBuffer,
    opt: OuterOptimizer,
    iteration: u64,
}

/// Executes one experiment. Numeric errors abort the loop but still
/// produce artifacts (with the last good checkpoint); the summary
/// carries the abort marker. Config and IO errors are returned as
/// errors.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let suite = build_suite(&cfg.suite, seed)?;
    let k = suite.num_sources();
    let m = cfg.meta.batch_domains;
    let sampler_choice = cfg.sampler.choice()?;
    let selection = cfg.sampler.selection_mode()?;
    let parallel = cfg.jobs > 1;

    let model = TaskModel::for_suite(&suite, cfg.model_hidden);
    let mut theta_rng = stream(seed, tags::THETA_INIT, 0);
    let theta = model.init_params(&mut theta_rng);

    let mut phi_rng = stream(seed, tags::PHI_INIT, 0);
    let sampler = Sampler::build(&sampler_choice, &suite, &cfg.policy, &mut phi_rng)?;

    let mut domain_rngs: Vec<StreamRng> =
        (0..k).map(|d| stream(seed, tags::TASK_DRAW, d as u64)).collect();
    let mut select_rng = stream(seed, tags::SELECT, 0);

    // Evaluation tasks are drawn once per (seed, target) from their own
    // streams, so every sampler sees identical meta-test tasks and every
    // checkpoint scores the same fixed set.
    let eval_tasks: Vec<Vec<TaskInstance>> = (0..suite.num_targets())
        .map(|t| {
            let mut rng = stream(seed, tags::EVAL_TASKS, t as u64);
            (0..cfg.eval.n_tasks)
                .map(|_| suite.sample_target_task(t, &mut rng))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let tnames = target_names(&suite);
    let mut records: Vec<MetricsRecord> = Vec::with_capacity(cfg.iterations as usize);
    let mut sample_counts = vec![0u64; k];
    let mut last_metatest: Vec<Option<f64>> = vec![None; suite.num_targets()];

    let mut state = RunState {
        theta,
        sampler,
        buffer: QueryLossBuffer::new(k),
        opt: OuterOptimizer::new(cfg.meta.outer_opt, model.param_count()),
        iteration: 0,
    };
    // Snapshot for the abort path: the state after the last good step.
    let mut last_good = (state.theta.clone(), state.iteration);
    let mut abort: Option<(u64, String)> = None;

    for s in 1..=cfg.iterations {
        let started = Instant::now();
        let step = (|| -> Result<MetricsRecord> {
            let probs = state.sampler.probs(&state.buffer)?;
            let ids = select_domains(&probs, m, selection, &mut select_rng)?;
            let tasks: Vec<TaskInstance> = ids
                .iter()
                .map(|&d| suite.sample_source_task(d, &mut domain_rngs[d]))
                .collect::<Result<_>>()?;
            let batch = meta_step(&model, &mut state.theta, &mut state.opt, &tasks, &cfg.meta, parallel)?;
            update_buffer(&mut state.buffer, &ids, &batch.task_losses)?;
            state.sampler.observe(&ids, &batch.task_losses)?;

            let mut metatest = vec![None; suite.num_targets()];
            if s % cfg.eval.every == 0 || s == cfg.iterations {
                for (t, tasks) in eval_tasks.iter().enumerate() {
                    let (mean, _, _) = evaluate_adaptation(
                        &model,
                        &state.theta,
                        tasks,
                        cfg.eval.shots,
                        cfg.eval.steps,
                        cfg.meta.alpha,
                    )?;
                    if !mean.is_finite() {
                        return Err(Error::Numeric(format!("meta-test loss {mean}")));
                    }
                    metatest[t] = Some(mean);
                }
            }
            Ok(MetricsRecord {
                iter: s,
                domain_ids: ids,
                probs: probs.values().to_vec(),
                buffer: state.buffer.values().to_vec(),
                task_losses: batch.task_losses,
                metatest,
                wall_ms: 0.0,
            })
        })();

        match step {
            Ok(mut rec) => {
                if cfg.timing {
                    rec.wall_ms = started.elapsed().as_secs_f64() * 1e3;
                }
                for &d in &rec.domain_ids {
                    sample_counts[d] += 1;
                }
                for (slot, m) in last_metatest.iter_mut().zip(&rec.metatest) {
                    if m.is_some() {
                        *slot = *m;
                    }
                }
                state.iteration = s;
                last_good = (state.theta.clone(), s);
                records.push(rec);
            }
            Err(e) if e.is_numeric() => {
                abort = Some((s, e.to_string()));
                break;
            }
            Err(e) => return Err(e),
        }
    }

    let difficulty: Vec<f64> = suite.sources.iter().map(|d| d.difficulty_score()).collect();
    let counts_f: Vec<f64> = sample_counts.iter().map(|&c| c as f64).collect();
    let rho = spearman(&difficulty, &counts_f).unwrap_or(0.0);

    let mut final_metatest = BTreeMap::new();
    for (name, v) in tnames.iter().zip(&last_metatest) {
        if let Some(v) = v {
            final_metatest.insert(name.clone(), *v);
        }
    }
    let final_mean = if final_metatest.is_empty() {
        f64::NAN
    } else {
        final_metatest.values().sum::<f64>() / final_metatest.len() as f64
    };

    let summary = RunSummary {
        sampler: sampler_choice.kind_name().to_string(),
        seed,
        iterations: state.iteration,
        total_samples: sample_counts.iter().sum(),
        sample_counts,
        final_metatest,
        final_metatest_mean: final_mean,
        spearman_difficulty_samples: rho,
        aborted: abort.is_some(),
        abort_iteration: abort.as_ref().map(|(s, _)| *s),
        abort_message: abort.map(|(_, m)| m),
    };

    let run_dir = match &cfg.out_dir {
        None => None,
        Some(root) => {
            let dir = root.join(run_dir_name(&summary.sampler, seed));
            write_run_artifacts(cfg, &suite, &model, &state, &last_good, &summary, &records, &dir)?;
            Some(dir)
        }
    };

    Ok(RunOutput {
        summary,
        records,
        run_dir,
    })
}

#[allow(clippy::too_many_arguments)]
fn write_run_artifacts(
    cfg: &ExperimentConfig,
    suite: &DomainSuite,
    model: &TaskModel,
    state: &RunState,
    last_good: &(Vec<f64>, u64),
    summary: &RunSummary,
    records: &[MetricsRecord],
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.resolved.cfg"), cfg.to_text())?;
    fs::write(
        dir.join("metrics.csv"),
        metrics_to_csv(suite.num_sources(), &target_names(suite), records),
    )?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    fs::write(dir.join("suite.json"), suite.to_json()?)?;

    // On aborts the live theta may hold the failed update; the
    // checkpoint records the last state that completed an iteration.
    let (theta, iteration) = if summary.aborted {
        (last_good.0.clone(), last_good.1)
    } else {
        (state.theta.clone(), state.iteration)
    };
    let ckpt = ThetaCheckpoint {
        version: THETA_CHECKPOINT_VERSION,
        iteration,
        model: model.clone(),
        theta,
    };
    fs::write(dir.join("theta.ckpt.json"), serde_json::to_string(&ckpt)?)?;

    if let Some(ams) = state.sampler.ams() {
        fs::write(
            dir.join("policy.ckpt.json"),
            serde_json::to_string(&ams.to_checkpoint())?,
        )?;
    }
    Ok(())
}

pub fn load_theta_checkpoint(path: &Path) -> Result<ThetaCheckpoint> {
    let text = fs::read_to_string(path)?;
    let ckpt: ThetaCheckpoint = serde_json::from_str(&text)?;
    if ckpt.version != THETA_CHECKPOINT_VERSION {
        return Err(Error::Config(format!(
            "theta checkpoint version {} unsupported (expected {})",
            ckpt.version, THETA_CHECKPOINT_VERSION
        )));
    }
    Ok(ckpt)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReportRow {
    pub target: String,
    pub mean: f64,
    pub std: f64,
    pub n_tasks: usize,
}

/// Loads a saved theta and scores it on the config's target domains
/// with the config's evaluation protocol.
pub fn evaluate_checkpoint(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    seed: u64,
) -> Result<Vec<EvalReportRow>> {
    let ckpt = load_theta_checkpoint(checkpoint)?;
    let suite = build_suite(&cfg.suite, seed)?;
    let expected = TaskModel::for_suite(&suite, ckpt.model.hidden_dim);
    if expected.input_dim != ckpt.model.input_dim || expected.output_dim != ckpt.model.output_dim {
        return Err(Error::Config(format!(
            "checkpoint model {}x{} does not fit the suite's {}x{} examples",
            ckpt.model.input_dim, ckpt.model.output_dim, expected.input_dim, expected.output_dim
        )));
    }
    let mut rows = Vec::new();
    for (t, name) in target_names(&suite).into_iter().enumerate() {
        let mut rng = stream(seed, tags::EVAL_TASKS, t as u64);
        let tasks: Vec<TaskInstance> = (0..cfg.eval.n_tasks)
            .map(|_| suite.sample_target_task(t, &mut rng))
            .collect::<Result<_>>()?;
        let (mean, std, losses) = evaluate_adaptation(
            &ckpt.model,
            &ckpt.theta,
            &tasks,
            cfg.eval.shots,
            cfg.eval.steps,
            cfg.meta.alpha,
        )?;
        rows.push(EvalReportRow {
            target: name,
            mean,
            std,
            n_tasks: losses.len(),
        });
    }
    Ok(rows)
}

/// Time-averaged sampling distribution over the last `fraction` of the
/// recorded iterations.
pub fn mean_probs_tail(records: &[MetricsRecord], fraction: f64) -> Vec<f64> {
    assert!(!records.is_empty());
    let k = records[0].probs.len();
    let start = ((records.len() as f64) * (1.0 - fraction)).floor() as usize;
    let tail = &records[start.min(records.len() - 1)..];
    let mut mean = vec![0.0; k];
    for rec in tail {
        for (m, p) in mean.iter_mut().zip(&rec.probs) {
            *m += p;
        }
    }
    for m in &mut mean {
        *m /= tail.len() as f64;
    }
    mean
}

/// Largest absolute deviation from the uniform distribution.
pub fn max_deviation_from_uniform(probs: &[f64]) -> f64 {
    let u = 1.0 / probs.len() as f64;
    probs.iter().fold(0.0, |acc, p| acc.max((p - u).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metalearn::MetaVariant;
    use crate::taskgen::SuitePreset;

    fn tiny_cfg(sampler: &str, iterations: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::quick(SuitePreset::Balanced, sampler, iterations);
        cfg.suite.domains = 4;
        cfg.suite.examples_per_task = 8;
        cfg.suite.pool_size = 32;
        cfg.eval.every = 5;
        cfg.eval.n_tasks = 4;
        cfg.eval.shots = 4;
        cfg.model_hidden = 8;
        cfg.policy.attention_dim = 4;
        cfg.policy.lstm_input = 6;
        cfg.policy.lstm_hidden = 8;
        cfg
    }

    #[test]
    fn single_iteration_touches_exactly_m_domains() {
        let mut cfg = tiny_cfg("uniform", 1);
        cfg.meta.batch_domains = 3;
        let out = run_experiment(&cfg, 0).unwrap();
        assert!(!out.summary.aborted);
        let buffer = &out.records[0].buffer;
        let nonzero = buffer.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nonzero, 3, "one iteration must touch exactly M domains");
        assert_eq!(out.summary.total_samples, 3);
    }

    #[test]
    fn rerun_is_identical_and_counts_add_up() {
        let cfg = tiny_cfg("ams", 12);
        let a = run_experiment(&cfg, 5).unwrap();
        let b = run_experiment(&cfg, 5).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(
            a.summary.total_samples,
            cfg.iterations * cfg.meta.batch_domains as u64
        );
    }

    #[test]
    fn uniform_on_balanced_suite_spreads_samples_multinomially() {
        let mut cfg = tiny_cfg("uniform", 500);
        cfg.eval.every = 250;
        let out = run_experiment(&cfg, 3).unwrap();
        let s = cfg.iterations as f64;
        let m = cfg.meta.batch_domains as f64;
        let k = cfg.suite.domains as f64;
        // Without-replacement draws concentrate no worse than the
        // multinomial; the 3-sigma binomial bound is conservative here.
        let expected = s * m / k;
        let sigma = (s * m * (1.0 / k) * (1.0 - 1.0 / k)).sqrt();
        for (d, &c) in out.summary.sample_counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() <= 3.0 * sigma,
                "domain {d}: count {c} outside 3 sigma of {expected}"
            );
        }
    }

    #[test]
    fn artifacts_are_written_when_out_dir_is_set() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg("ams", 6);
        cfg.out_dir = Some(tmp.path().to_path_buf());
        let out = run_experiment(&cfg, 1).unwrap();
        let dir = out.run_dir.unwrap();
        for f in [
            "config.resolved.cfg",
            "metrics.csv",
            "summary.json",
            "suite.json",
            "theta.ckpt.json",
            "policy.ckpt.json",
        ] {
            assert!(dir.join(f).exists(), "{f} missing");
        }
        let ckpt = load_theta_checkpoint(&dir.join("theta.ckpt.json")).unwrap();
        assert_eq!(ckpt.iteration, 6);
    }

    #[test]
    fn mtl_variant_runs_the_same_pipeline() {
        let mut cfg = tiny_cfg("ams", 8);
        cfg.meta.variant = MetaVariant::Mtl;
        let out = run_experiment(&cfg, 2).unwrap();
        assert!(!out.summary.aborted);
        assert_eq!(out.records.len(), 8);
    }
}
