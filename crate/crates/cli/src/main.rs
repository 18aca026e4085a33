//! `cbmline` — train, evaluate and analyze maintenance-scheduling policies
//! on simulated flow lines.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cbmline_core::config::RunConfig;
use cbmline_core::ddqn;
use cbmline_core::error::Error as CoreError;
use cbmline_core::eval::{
    cm_timeline_csv, episodes_csv, per_machine_csv, run_episodes, summarize, EpisodeMetrics,
};
use cbmline_core::nn;
use cbmline_core::oracle::{self, DiscountMode};
use cbmline_core::policy::{sweep_threshold, FifoPolicy, GreedyPolicy, Policy, RandomPolicy};

#[derive(Parser)]
#[command(name = "cbmline", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Criterion {
    /// Highest mean produced parts.
    MaxParts,
    /// Lowest mean maintenance cost.
    MinCost,
}

#[derive(Subcommand)]
enum Command {
    /// Train a DDQN policy and write checkpoint, training CSV and manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the training episode count.
        #[arg(long)]
        episodes: Option<u32>,
    },
    /// Evaluate a policy over seeded episodes and write the metric CSVs.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `fifo:<n_c>`, `random`, or a checkpoint path.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 100)]
        episodes: u32,
        /// Base seed of the evaluation episode range.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the episode fan-out.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Evaluate FIFO at every threshold in {0..n} and report the best.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Criterion::MaxParts)]
        criterion: Criterion,
        /// Episodes per threshold value.
        #[arg(long, default_value_t = 20)]
        episodes: u32,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Enumerate a toy instance exactly, solve it, and export Q/policy CSVs.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Grade this checkpoint's greedy policy against the oracle.
        #[arg(long)]
        compare_checkpoint: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: String,
    seed: u64,
    out_dir: String,
    timestamp: String,
    version: &'a str,
}

fn write_manifest(command: &str, config: &Path, seed: u64, out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let manifest = RunManifest {
        command,
        config: config.display().to_string(),
        seed,
        out_dir: out.display().to_string(),
        timestamp: chrono::Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION"),
    };
    std::fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(())
}

/// Evaluation episodes use a seed range disjoint from training (which uses
/// `seed..seed+episodes`).
const EVAL_SEED_OFFSET: u64 = 1_000_000;

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn build_policy(spec: &str, cfg: &RunConfig) -> anyhow::Result<Box<dyn EvalPolicy>> {
    if spec == "random" {
        return Ok(Box::new(RandomPolicy::new()));
    }
    if let Some(rest) = spec.strip_prefix("fifo:") {
        let threshold: u32 = rest
            .parse()
            .map_err(|_| CoreError::InvalidConfig(format!("bad fifo threshold in `{spec}`")))?;
        if threshold > cfg.line.n {
            return Err(CoreError::InvalidConfig(format!(
                "fifo threshold {threshold} exceeds n={}",
                cfg.line.n
            ))
            .into());
        }
        return Ok(Box::new(FifoPolicy::new(threshold)));
    }
    let params = nn::load_checkpoint(Path::new(spec))
        .with_context(|| format!("loading checkpoint `{spec}`"))?;
    let expected = ddqn::layer_sizes(&cfg.line, cfg.training.hidden);
    if params.layer_sizes.first() != expected.first()
        || params.layer_sizes.last() != expected.last()
    {
        return Err(CoreError::Checkpoint(format!(
            "checkpoint I/O sizes {:?} do not fit a {}-machine line",
            params.layer_sizes,
            cfg.line.machine_count()
        ))
        .into());
    }
    Ok(Box::new(GreedyPolicy::new(params)))
}

/// Object-safe evaluation wrapper: `run_episodes` needs `Clone`, which the
/// boxed trait object cannot offer, so each concrete policy runs through a
/// small dispatch instead.
trait EvalPolicy {
    fn run(
        &self,
        cfg: &RunConfig,
        episodes: u32,
        base_seed: u64,
        workers: usize,
    ) -> cbmline_core::Result<Vec<EpisodeMetrics>>;
    fn label(&self) -> String;
}

impl<P: Policy + Clone + 'static> EvalPolicy for P {
    fn run(
        &self,
        cfg: &RunConfig,
        episodes: u32,
        base_seed: u64,
        workers: usize,
    ) -> cbmline_core::Result<Vec<EpisodeMetrics>> {
        run_episodes(&cfg.line, &cfg.reward, self, episodes, base_seed, workers)
    }

    fn label(&self) -> String {
        self.name()
    }
}

fn cmd_train(
    config_path: &Path,
    out: &Path,
    seed: Option<u64>,
    episodes: Option<u32>,
) -> anyhow::Result<()> {
    let mut cfg = RunConfig::from_file(config_path)?;
    if let Some(e) = episodes {
        cfg.training.episodes = e;
    }
    let seed = seed.unwrap_or(cfg.line.seed);
    write_manifest("train", config_path, seed, out)?;

    let outcome = ddqn::train(&cfg.line, &cfg.reward, &cfg.training, seed)?;
    nn::save_checkpoint(&outcome.best_params, &out.join("checkpoint.json"))?;
    nn::save_checkpoint(&outcome.final_params, &out.join("checkpoint_final.json"))?;
    std::fs::write(out.join("training.csv"), outcome.log.to_csv())?;
    println!(
        "trained {} episodes; best smoothed reward {:.3}; checkpoint at {}",
        cfg.training.episodes,
        outcome.best_smoothed_reward,
        out.join("checkpoint.json").display()
    );
    Ok(())
}

fn cmd_evaluate(
    config_path: &Path,
    out: &Path,
    policy_spec: &str,
    episodes: u32,
    seed: Option<u64>,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let cfg = RunConfig::from_file(config_path)?;
    let base_seed = seed.unwrap_or(cfg.line.seed + EVAL_SEED_OFFSET);
    write_manifest("evaluate", config_path, base_seed, out)?;
    let workers = workers.unwrap_or_else(default_workers);

    let policy = build_policy(policy_spec, &cfg)?;
    let metrics = policy.run(&cfg, episodes, base_seed, workers)?;
    let labeled = vec![(policy.label(), metrics)];

    std::fs::write(out.join("episodes.csv"), episodes_csv(&labeled))?;
    std::fs::write(out.join("per_machine.csv"), per_machine_csv(&labeled))?;
    std::fs::write(out.join("cm_timeline.csv"), cm_timeline_csv(&labeled))?;

    let table = summarize(&cfg.line, &cfg.reward, &labeled)?;
    for row in &table.rows {
        println!(
            "{}: parts {:.2} cost {:.2} rate {:.2}% | cbm {:.2} cm {:.2} idle {:.2}",
            row.policy,
            row.mean_parts,
            row.mean_cost,
            row.production_rate * 100.0,
            row.mean_cbm,
            row.mean_cm,
            row.mean_idle
        );
    }
    Ok(())
}

fn cmd_sweep(
    config_path: &Path,
    out: &Path,
    criterion: Criterion,
    episodes: u32,
    seed: Option<u64>,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let cfg = RunConfig::from_file(config_path)?;
    let base_seed = seed.unwrap_or(cfg.line.seed + EVAL_SEED_OFFSET);
    write_manifest("sweep", config_path, base_seed, out)?;
    let workers = workers.unwrap_or_else(default_workers);

    let sweep = sweep_threshold(&cfg.line, &cfg.reward, episodes, base_seed, workers)?;
    std::fs::write(out.join("sweep.csv"), sweep.to_csv())?;
    println!("best threshold by parts: {}", sweep.best_by_parts);
    println!("best threshold by cost: {}", sweep.best_by_cost);
    let chosen = match criterion {
        Criterion::MaxParts => sweep.best_by_parts,
        Criterion::MinCost => sweep.best_by_cost,
    };
    println!("selected threshold: {chosen}");
    Ok(())
}

fn cmd_oracle(
    config_path: &Path,
    out: &Path,
    compare_checkpoint: Option<&Path>,
) -> anyhow::Result<()> {
    let cfg = RunConfig::from_file(config_path)?;
    write_manifest("oracle", config_path, cfg.line.seed, out)?;

    let enumerated = oracle::enumerate_mdp(&cfg.line, &cfg.reward, 100_000)?;
    let gamma = cfg.training.gamma.min(1.0 - 1e-9);
    let vi = oracle::value_iteration(
        &enumerated.mdp,
        gamma,
        1e-10,
        1_000_000,
        DiscountMode::PerDecision,
    )?;
    std::fs::write(out.join("q_table.csv"), oracle::q_table_csv(&vi.q))?;
    std::fs::write(out.join("policy.csv"), oracle::policy_csv(&enumerated, &vi.policy))?;
    println!(
        "enumerated {} states; value iteration converged in {} sweeps (gamma {gamma}, per-decision discounting)",
        enumerated.mdp.state_count(),
        vi.sweeps
    );

    if let Some(ckpt) = compare_checkpoint {
        let params = nn::load_checkpoint(ckpt)?;
        let agreement = oracle::compare_policies(&enumerated.mdp, &vi.q, 1e-9, |obs| {
            cbmline_core::ddqn::argmax(&nn::forward(&params, obs))
        });
        println!("agreement: {agreement:.4}");
    }
    Ok(())
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CoreError>() {
        Some(
            CoreError::MissingKey(_)
            | CoreError::InvalidConfig(_)
            | CoreError::Parse(_)
            | CoreError::CapExceeded { .. },
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train {
            config,
            out,
            seed,
            episodes,
        } => cmd_train(config, out, *seed, *episodes),
        Command::Evaluate {
            config,
            out,
            policy,
            episodes,
            seed,
            workers,
        } => cmd_evaluate(config, out, policy, *episodes, *seed, *workers),
        Command::Sweep {
            config,
            out,
            criterion,
            episodes,
            seed,
            workers,
        } => cmd_sweep(config, out, *criterion, *episodes, *seed, *workers),
        Command::Oracle {
            config,
            out,
            compare_checkpoint,
        } => cmd_oracle(config, out, compare_checkpoint.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
