//! Sampler comparison: the (sampler x seed) matrix with aggregate
//! statistics, pairwise win counts, and plot-ready CSV exports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sampling::SamplerChoice;
use crate::{Error, Result};

use super::config::ExperimentConfig;
use super::metrics::{format_float, MetricsRecord};
use super::run::{run_experiment, RunSummary};
use super::stats::mean_std;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sampler: String,
    pub seeds: usize,
    pub failed_runs: usize,
    pub mean_final: f64,
    pub std_final: f64,
    /// Per-target mean loss across seeds.
    pub per_target_mean: BTreeMap<String, f64>,
    pub mean_sample_counts: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub samplers: Vec<String>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunSummary>,
    pub aggregate: Vec<AggregateRow>,
    /// `"a>b"` counts the seeds where sampler a strictly beats b
    /// (lower final meta-test loss), among seeds where both finished.
    pub pairwise_wins: BTreeMap<String, usize>,
}

pub struct ComparisonOutput {
    pub comparison: Comparison,
    /// Metrics of every run, indexed like the cross product
    /// samplers-major (`runs[sampler_idx * seeds + seed_idx]`).
    pub records: Vec<Vec<MetricsRecord>>,
}

/// Runs the full (sampler x seed) cross product. Each run is driven by
/// the same base config with only the sampler kind replaced; seeds are
/// shared so comparisons are paired.
pub fn compare_samplers(
    cfg: &ExperimentConfig,
    samplers: &[String],
    seeds: &[u64],
) -> Result<ComparisonOutput> {
    if samplers.len() < 2 {
        return Err(Error::Config("compare needs at least 2 samplers".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Config("compare needs at least 1 seed".into()));
    }
    for s in samplers {
        s.parse::<SamplerChoice>()?;
    }

    let mut jobs: Vec<(usize, usize)> = Vec::new();
    for si in 0..samplers.len() {
        for di in 0..seeds.len() {
            jobs.push((si, di));
        }
    }
    let run_one = |&(si, di): &(usize, usize)| -> Result<(RunSummary, Vec<MetricsRecord>)> {
        let mut run_cfg = cfg.clone();
        run_cfg.sampler.kind = samplers[si].clone();
        // Runs are the unit of parallelism here; keep each run serial.
        run_cfg.jobs = 1;
        let out = run_experiment(&run_cfg, seeds[di])?;
        Ok((out.summary, out.records))
    };
    let results: Vec<Result<(RunSummary, Vec<MetricsRecord>)>> = if cfg.jobs > 1 {
        jobs.par_iter().map(run_one).collect()
    } else {
        jobs.iter().map(run_one).collect()
    };

    let mut runs = Vec::with_capacity(results.len());
    let mut records = Vec::with_capacity(results.len());
    for r in results {
        let (summary, recs) = r?;
        runs.push(summary);
        records.push(recs);
    }

    let mut aggregate = Vec::new();
    for (si, sampler) in samplers.iter().enumerate() {
        let rows: Vec<&RunSummary> = (0..seeds.len())
            .map(|di| &runs[si * seeds.len() + di])
            .collect();
        let finished: Vec<&&RunSummary> = rows.iter().filter(|r| !r.aborted).collect();
        let finals: Vec<f64> = finished.iter().map(|r| r.final_metatest_mean).collect();
        let (mean_final, std_final) = mean_std(&finals);
        let mut per_target_mean = BTreeMap::new();
        if let Some(first) = finished.first() {
            for name in first.final_metatest.keys() {
                let vals: Vec<f64> = finished
                    .iter()
                    .filter_map(|r| r.final_metatest.get(name).copied())
                    .collect();
                per_target_mean.insert(name.clone(), mean_std(&vals).0);
            }
        }
        let k = rows.first().map(|r| r.sample_counts.len()).unwrap_or(0);
        let mut mean_counts = vec![0.0; k];
        for r in &rows {
            for (m, &c) in mean_counts.iter_mut().zip(&r.sample_counts) {
                *m += c as f64;
            }
        }
        for m in &mut mean_counts {
            *m /= rows.len() as f64;
        }
        aggregate.push(AggregateRow {
            sampler: sampler.clone(),
            seeds: seeds.len(),
            failed_runs: rows.len() - finished.len(),
            mean_final,
            std_final,
            per_target_mean,
            mean_sample_counts: mean_counts,
        });
    }

    let mut pairwise_wins = BTreeMap::new();
    for (ai, a) in samplers.iter().enumerate() {
        for (bi, b) in samplers.iter().enumerate() {
            if ai == bi {
                continue;
            }
            let mut wins = 0usize;
            for di in 0..seeds.len() {
                let ra = &runs[ai * seeds.len() + di];
                let rb = &runs[bi * seeds.len() + di];
                if !ra.aborted && !rb.aborted && ra.final_metatest_mean < rb.final_metatest_mean {
                    wins += 1;
                }
            }
            pairwise_wins.insert(format!("{a}>{b}"), wins);
        }
    }

    Ok(ComparisonOutput {
        comparison: Comparison {
            samplers: samplers.to_vec(),
            seeds: seeds.to_vec(),
            runs,
            aggregate,
            pairwise_wins,
        },
        records,
    })
}

/// Comparison table as CSV: one row per sampler.
pub fn comparison_table_csv(cmp: &Comparison) -> String {
    let targets: Vec<String> = cmp
        .aggregate
        .first()
        .map(|a| a.per_target_mean.keys().cloned().collect())
        .unwrap_or_default();
    let mut out = String::from("sampler,seeds,failed_runs,mean_final,std_final");
    for t in &targets {
        let _ = write!(out, ",mean_{t}");
    }
    out.push('\n');
    for row in &cmp.aggregate {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            row.sampler,
            row.seeds,
            row.failed_runs,
            format_float(row.mean_final),
            format_float(row.std_final)
        );
        for t in &targets {
            let v = row.per_target_mean.get(t).copied().unwrap_or(f64::NAN);
            let _ = write!(out, ",{}", format_float(v));
        }
        out.push('\n');
    }
    out
}

/// Meta-test loss (mean over targets, mean over seeds) against
/// iteration, one column pair per sampler. Only eval iterations appear.
pub fn loss_vs_iteration_csv(out: &ComparisonOutput) -> String {
    let cmp = &out.comparison;
    let n_seeds = cmp.seeds.len();
    let mut iters: Vec<u64> = Vec::new();
    if let Some(recs) = out.records.first() {
        for r in recs {
            if r.metatest.iter().any(Option::is_some) {
                iters.push(r.iter);
            }
        }
    }
    let mut text = String::from("iter");
    for s in &cmp.samplers {
        let _ = write!(text, ",{s}_mean,{s}_std");
    }
    text.push('\n');
    for &it in &iters {
        let _ = write!(text, "{it}");
        for (si, _) in cmp.samplers.iter().enumerate() {
            let mut vals = Vec::new();
            for di in 0..n_seeds {
                let recs = &out.records[si * n_seeds + di];
                if let Some(rec) = recs.iter().find(|r| r.iter == it) {
                    let ms: Vec<f64> = rec.metatest.iter().flatten().copied().collect();
                    if !ms.is_empty() {
                        vals.push(ms.iter().sum::<f64>() / ms.len() as f64);
                    }
                }
            }
            let (mean, std) = mean_std(&vals);
            let _ = write!(text, ",{},{}", format_float(mean), format_float(std));
        }
        text.push('\n');
    }
    text
}

/// Mean cumulative sample count per domain, one column per sampler.
pub fn sample_counts_csv(cmp: &Comparison) -> String {
    let k = cmp
        .aggregate
        .first()
        .map(|a| a.mean_sample_counts.len())
        .unwrap_or(0);
    let mut text = String::from("domain");
    for s in &cmp.samplers {
        let _ = write!(text, ",{s}_mean_count");
    }
    text.push('\n');
    for d in 0..k {
        let _ = write!(text, "{d}");
        for row in &cmp.aggregate {
            let _ = write!(text, ",{}", format_float(row.mean_sample_counts[d]));
        }
        text.push('\n');
    }
    text
}

/// Writes comparison.json, comparison.csv, and the plot CSVs.
pub fn write_comparison(dir: &Path, out: &ComparisonOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("comparison.json"),
        serde_json::to_string_pretty(&out.comparison)?,
    )?;
    fs::write(dir.join("comparison.csv"), comparison_table_csv(&out.comparison))?;
    fs::write(dir.join("loss_vs_iteration.csv"), loss_vs_iteration_csv(out))?;
    fs::write(dir.join("sample_counts.csv"), sample_counts_csv(&out.comparison))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::SuitePreset;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::quick(SuitePreset::Balanced, "uniform", 10);
        cfg.suite.domains = 4;
        cfg.suite.examples_per_task = 8;
        cfg.suite.pool_size = 32;
        cfg.eval.every = 5;
        cfg.eval.n_tasks = 3;
        cfg.eval.shots = 4;
        cfg.model_hidden = 6;
        cfg.policy.attention_dim = 4;
        cfg.policy.lstm_input = 6;
        cfg.policy.lstm_hidden = 8;
        cfg
    }

    #[test]
    fn self_comparison_gives_identical_columns() {
        let cfg = tiny_cfg();
        let out = compare_samplers(
            &cfg,
            &["uniform".into(), "uniform".into()],
            &[1, 2],
        )
        .unwrap();
        let a = &out.comparison.aggregate[0];
        let b = &out.comparison.aggregate[1];
        assert_eq!(a.mean_final.to_bits(), b.mean_final.to_bits());
        assert_eq!(a.mean_sample_counts, b.mean_sample_counts);
        assert_eq!(out.comparison.pairwise_wins["uniform>uniform"], 0);
    }

    #[test]
    fn cross_product_shape() {
        let cfg = tiny_cfg();
        let out = compare_samplers(&cfg, &["uniform".into(), "ppql".into()], &[0, 1, 2]).unwrap();
        assert_eq!(out.comparison.runs.len(), 6);
        assert_eq!(out.comparison.aggregate.len(), 2);
        assert_eq!(out.records.len(), 6);
    }

    #[test]
    fn aggregates_match_recomputation_from_run_summaries() {
        let cfg = tiny_cfg();
        let out = compare_samplers(&cfg, &["uniform".into(), "ppql".into()], &[0, 1]).unwrap();
        for (si, row) in out.comparison.aggregate.iter().enumerate() {
            let finals: Vec<f64> = (0..2)
                .map(|di| out.comparison.runs[si * 2 + di].final_metatest_mean)
                .collect();
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            assert!((row.mean_final - mean).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let cfg = tiny_cfg();
        assert!(compare_samplers(&cfg, &["uniform".into()], &[0]).is_err());
        assert!(compare_samplers(&cfg, &["uniform".into(), "ppql".into()], &[]).is_err());
        assert!(compare_samplers(&cfg, &["uniform".into(), "nope".into()], &[0]).is_err());
    }
}
