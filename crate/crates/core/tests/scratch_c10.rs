//! Scratch: criterion-10 dry run on the b=1 synchronous config.

use cbmline_core::config::{LineConfig, MachineConfig, RewardConfig, TrainingConfig};
use cbmline_core::ddqn;
use cbmline_core::eval::run_episodes;
use cbmline_core::policy::{sweep_threshold, FifoPolicy, GreedyPolicy};

fn config2() -> LineConfig {
    LineConfig {
        machines: vec![
            MachineConfig { process_time: 2, degradation_rate: 0.25, buffer_capacity: 1 };
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

#[test]
#[ignore]
fn scratch_c10_dry_run() {
    let line = config2();
    let reward = RewardConfig::default();

    let sweep = sweep_threshold(&line, &reward, 30, 10_000, 8).unwrap();
    let threshold = sweep.best_by_parts;
    let eval_seed = 1_000_000;
    let fifo = run_episodes(&line, &reward, &FifoPolicy::new(threshold), 100, eval_seed, 8)
        .unwrap();
    let n = fifo.len() as f64;
    let fifo_parts: f64 = fifo.iter().map(|m| m.produced_parts as f64).sum::<f64>() / n;
    let fifo_cost: f64 = fifo.iter().map(|m| m.maintenance_cost).sum::<f64>() / n;
    println!("fifo:{threshold}: parts {fifo_parts:.1} cost {fifo_cost:.2}");

    for (name, cfg) in [
        ("paper", TrainingConfig::defaults_r2()),
        (
            "lr1e-3+clip",
            TrainingConfig {
                lr: 1e-3,
                grad_clip: Some(10.0),
                ..TrainingConfig::defaults_r2()
            },
        ),
    ] {
        let mut best: Option<(f64, cbmline_core::nn::MlpParams, u64)> = None;
        for seed in [11u64, 12, 13] {
            let t = std::time::Instant::now();
            let out = ddqn::train(&line, &reward, &cfg, seed).unwrap();
            println!(
                "{name} seed {seed}: best smoothed {:.2} ({:?})",
                out.best_smoothed_reward,
                t.elapsed()
            );
            if best
                .as_ref()
                .map_or(true, |(b, _, _)| out.best_smoothed_reward > *b)
            {
                best = Some((out.best_smoothed_reward, out.best_params, seed));
            }
        }
        let (score, params, seed) = best.unwrap();
        let ms = run_episodes(&line, &reward, &GreedyPolicy::new(params), 100, eval_seed, 8)
            .unwrap();
        let parts: f64 = ms.iter().map(|m| m.produced_parts as f64).sum::<f64>() / n;
        let cost: f64 = ms.iter().map(|m| m.maintenance_cost).sum::<f64>() / n;
        let cbm: f64 = ms.iter().map(|m| m.cbm_count as f64).sum::<f64>() / n;
        let cm: f64 = ms.iter().map(|m| m.cm_count as f64).sum::<f64>() / n;
        let idle: f64 = ms.iter().map(|m| m.idle_count as f64).sum::<f64>() / n;
        let pass = parts >= fifo_parts * 0.98 && cost <= fifo_cost;
        println!(
            "{name} best seed {seed} (smoothed {score:.2}): parts {parts:.1} cost {cost:.2} cbm {cbm:.1} cm {cm:.1} idle {idle:.1} -> {}",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}
