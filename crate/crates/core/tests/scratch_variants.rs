//! Scratch: training-variant probe on the synchronous config.

use cbmline_core::config::{
    DecayGranularity, LineConfig, MachineConfig, RewardConfig, TrainingConfig,
};
use cbmline_core::ddqn;
use cbmline_core::eval::run_episodes;
use cbmline_core::policy::GreedyPolicy;

fn config2() -> LineConfig {
    LineConfig {
        machines: vec![
            MachineConfig { process_time: 2, degradation_rate: 0.25, buffer_capacity: 5 };
            5
        ],
        n: 10,
        n_c: 0,
        t_cbm: 5,
        t_cm: 20,
        t_idle: 1,
        t_sim: 400,
        seed: 2,
    }
}

fn eval_params(line: &LineConfig, reward: &RewardConfig, params: cbmline_core::nn::MlpParams) {
    let ms = run_episodes(line, reward, &GreedyPolicy::new(params), 60, 1_000_000, 8).unwrap();
    let n = ms.len() as f64;
    let parts: f64 = ms.iter().map(|m| m.produced_parts as f64).sum::<f64>() / n;
    let cost: f64 = ms.iter().map(|m| m.maintenance_cost).sum::<f64>() / n;
    let cbm: f64 = ms.iter().map(|m| m.cbm_count as f64).sum::<f64>() / n;
    let cm: f64 = ms.iter().map(|m| m.cm_count as f64).sum::<f64>() / n;
    let idle: f64 = ms.iter().map(|m| m.idle_count as f64).sum::<f64>() / n;
    println!("  eval: parts {parts:.1} cost {cost:.2} cbm {cbm:.1} cm {cm:.1} idle {idle:.1}");
}

#[test]
#[ignore]
fn scratch_variants() {
    let line = config2();
    let reward = RewardConfig::default();

    let base = TrainingConfig::defaults_r2();
    let variants: Vec<(&str, TrainingConfig, u64)> = vec![
        ("paper seed 12", base.clone(), 12),
        ("paper seed 13", base.clone(), 13),
        (
            "sync 10",
            TrainingConfig {
                target_sync_episodes: 10,
                ..base.clone()
            },
            11,
        ),
        (
            "gamma 0.95",
            TrainingConfig {
                gamma: 0.95,
                ..base.clone()
            },
            11,
        ),
        (
            "slow epsilon 1e-5",
            TrainingConfig {
                epsilon_decay_rate: 1e-5,
                ..base.clone()
            },
            11,
        ),
        (
            "per-episode 0.0046",
            TrainingConfig {
                epsilon_decay_rate: 0.0046,
                decay_granularity: DecayGranularity::PerEpisode,
                ..base.clone()
            },
            11,
        ),
    ];
    for (name, cfg, seed) in variants {
        let t = std::time::Instant::now();
        let out = ddqn::train(&line, &reward, &cfg, seed).unwrap();
        println!(
            "{name}: best smoothed {:.2} final {:.2} ({:?})",
            out.best_smoothed_reward,
            out.log.episodes.last().unwrap().smoothed_reward,
            t.elapsed()
        );
        eval_params(&line, &reward, out.best_params);
    }
}
