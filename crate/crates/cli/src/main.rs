//! `ams` — experiment driver.
//!
//! Exit codes: 0 success, 1 config/usage error, 2 numeric abort.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use ams_core::harness::{
    compare_samplers, evaluate_checkpoint, gradcheck_suite, parse_seeds, run_experiment,
    write_comparison, ExperimentConfig,
};
use ams_core::taskgen::{build_suite, SuiteConfig, SuitePreset};
use ams_core::Error;

#[derive(Parser)]
#[command(
    name = "ams",
    about = "Adaptive task sampling for multi-domain meta-learning",
    disable_version_flag = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to a flat key=value config file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. --set meta.M=3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory root (defaults to run.out, then $AMS_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel jobs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Seed (defaults to the first entry of run.seeds).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the sampler comparison matrix.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma list of samplers (defaults to compare.samplers).
        #[arg(long)]
        samplers: Option<String>,
        /// Seeds: single, comma list, or inclusive lo..hi range
        /// (defaults to run.seeds).
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Evaluate a saved model checkpoint on the target domains.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Path to a theta.ckpt.json file.
        #[arg(long)]
        theta: PathBuf,
        /// Seed for the evaluation task draws.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Finite-difference audit of every backward pass.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random shape/draw rounds per component.
        #[arg(long, default_value_t = 100)]
        rounds: usize,
    },
    /// List presets or serialize a suite to JSON.
    Suite {
        /// List the available presets.
        #[arg(long)]
        list: bool,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 8)]
        domains: usize,
        #[arg(long, short = 'w', default_value_t = 48)]
        examples_per_task: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the suite JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>, Error> {
    raw.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("override '{s}' is not KEY=VALUE")))
        })
        .collect()
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        Error::Config(format!("cannot read config '{}': {e}", args.config.display()))
    })?;
    let overrides = parse_overrides(&args.overrides)?;
    let mut cfg = ExperimentConfig::from_text_with_overrides(&text, &overrides)?;
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    if cfg.out_dir.is_none() {
        if let Ok(root) = std::env::var("AMS_OUT_DIR") {
            if !root.is_empty() {
                cfg.out_dir = Some(PathBuf::from(root));
            }
        }
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("ams-out"));
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(args: &ConfigArgs, seed: Option<u64>) -> Result<ExitCode, Error> {
    let cfg = load_config(args)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let out = run_experiment(&cfg, seed)?;
    if let Some(dir) = &out.run_dir {
        println!("run written to {}", dir.display());
    }
    if out.summary.aborted {
        eprintln!(
            "numeric abort at iteration {}: {}",
            out.summary.abort_iteration.unwrap_or(0),
            out.summary.abort_message.as_deref().unwrap_or("unknown")
        );
        return Ok(ExitCode::from(2));
    }
    for (target, loss) in &out.summary.final_metatest {
        println!("final meta-test {target}: {loss:.6}");
    }
    println!(
        "samples per domain: {:?} (spearman vs difficulty {:.3})",
        out.summary.sample_counts, out.summary.spearman_difficulty_samples
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_compare(
    args: &ConfigArgs,
    samplers: Option<&str>,
    seeds: Option<&str>,
) -> Result<ExitCode, Error> {
    let cfg = load_config(args)?;
    let samplers: Vec<String> = match samplers {
        Some(s) => s.split(',').map(|x| x.trim().to_string()).collect(),
        None => cfg.compare_samplers.clone(),
    };
    let seeds = match seeds {
        Some(s) => parse_seeds(s)?,
        None => cfg.seeds.clone(),
    };
    let out = compare_samplers(&cfg, &samplers, &seeds)?;
    if let Some(dir) = &cfg.out_dir {
        write_comparison(dir, &out)?;
        println!("comparison written to {}", dir.display());
    }
    for row in &out.comparison.aggregate {
        println!(
            "{:10} mean final {:.6} (std {:.6}, {} failed)",
            row.sampler, row.mean_final, row.std_final, row.failed_runs
        );
    }
    for (pair, wins) in &out.comparison.pairwise_wins {
        println!("{pair}: {wins}/{} seeds", seeds.len());
    }
    let any_failed = out.comparison.aggregate.iter().any(|r| r.failed_runs > 0);
    Ok(if any_failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_eval(args: &ConfigArgs, theta: &Path, seed: u64) -> Result<ExitCode, Error> {
    let cfg = load_config(args)?;
    let report = evaluate_checkpoint(&cfg, theta, seed)?;
    for line in &report {
        println!(
            "target {}: mean {:.6} std {:.6} over {} tasks",
            line.target, line.mean, line.std, line.n_tasks
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(seed: u64, rounds: usize) -> Result<ExitCode, Error> {
    let report = gradcheck_suite(seed, rounds);
    print!("{report}");
    if report.all_passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn cmd_suite(
    list: bool,
    preset: Option<&str>,
    domains: usize,
    w: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<ExitCode, Error> {
    if list {
        for p in SuitePreset::ALL {
            println!("{p}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let preset: SuitePreset = preset
        .ok_or_else(|| Error::Config("suite needs --list or --preset".into()))?
        .parse()?;
    let cfg = SuiteConfig::new(preset, domains, w);
    let suite = build_suite(&cfg, seed)?;
    let json = suite.to_json()?;
    match out {
        Some(path) => {
            fs::write(path, json)?;
            println!("suite written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Train { cfg, seed } => cmd_train(cfg, *seed),
        Command::Compare {
            cfg,
            samplers,
            seeds,
        } => cmd_compare(cfg, samplers.as_deref(), seeds.as_deref()),
        Command::Eval { cfg, theta, seed } => cmd_eval(cfg, theta, *seed),
        Command::Gradcheck { seed, rounds } => cmd_gradcheck(*seed, *rounds),
        Command::Suite {
            list,
            preset,
            domains,
            examples_per_task,
            seed,
            out,
        } => cmd_suite(
            *list,
            preset.as_deref(),
            *domains,
            *examples_per_task,
            *seed,
            out.as_deref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not errors; anything else is a usage
            // problem and lands on exit code 1.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
