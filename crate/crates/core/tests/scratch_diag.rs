//! Scratch: (1) what does the checkpoint guard see for scripted policies
//! under epsilon noise, and (2) how does a training run's behavior evolve?

use cbmline_core::config::{LineConfig, MachineConfig, RewardConfig, TrainingConfig};
use cbmline_core::ddqn;
use cbmline_core::env::{Action, MaintEnv};
use cbmline_core::eval::run_episodes;
use cbmline_core::policy::{FifoPolicy, GreedyPolicy, Policy};
use cbmline_core::sim::SimState;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

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

#[derive(Clone)]
struct GreedyCondition {
    threshold: u32,
}

impl Policy for GreedyCondition {
    fn name(&self) -> String {
        format!("greedy:{}", self.threshold)
    }
    fn begin_episode(&mut self, _seed: u64) {}
    fn act(&mut self, _line: &LineConfig, st: &SimState) -> Action {
        let (j, cs) = st
            .conditions()
            .iter()
            .cloned()
            .enumerate()
            .max_by_key(|&(j, c)| (c, std::cmp::Reverse(j)))
            .unwrap();
        if cs >= self.threshold {
            Action::Maintain(j)
        } else {
            Action::Idle
        }
    }
}

/// Mean R2 episode reward under epsilon-noisy execution, as the training
/// log would record it.
fn noisy_r2(
    line: &LineConfig,
    reward: &RewardConfig,
    policy: &mut dyn Policy,
    epsilon: f64,
    episodes: u32,
    base_seed: u64,
) -> f64 {
    let mut total = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed ^ 0xABCD);
    for k in 0..episodes {
        let mut env = MaintEnv::reset(line, reward, base_seed + k as u64).unwrap();
        policy.begin_episode(base_seed + k as u64);
        while !env.is_terminal() {
            let a = if rng.gen::<f64>() < epsilon {
                Action::from_code(
                    rng.gen_range(0..=line.machine_count()),
                    line.machine_count(),
                )
                .unwrap()
            } else {
                policy.act(env.line(), env.state())
            };
            total += env.step(a).unwrap().reward;
        }
    }
    total / episodes as f64
}

#[test]
#[ignore]
fn scratch_noisy_rewards() {
    let line = config2();
    let reward = RewardConfig::default();
    for threshold in [4u32, 5, 6, 7, 8] {
        let clean = noisy_r2(
            &line,
            &reward,
            &mut GreedyCondition { threshold },
            0.0,
            40,
            500,
        );
        let noisy = noisy_r2(
            &line,
            &reward,
            &mut GreedyCondition { threshold },
            0.1,
            40,
            500,
        );
        println!("greedy:{threshold}: clean {clean:.2} noisy(0.1) {noisy:.2}");
    }
    for threshold in [3u32, 5] {
        let clean = noisy_r2(&line, &reward, &mut FifoPolicy::new(threshold), 0.0, 40, 500);
        let noisy = noisy_r2(&line, &reward, &mut FifoPolicy::new(threshold), 0.1, 40, 500);
        println!("fifo:{threshold}: clean {clean:.2} noisy(0.1) {noisy:.2}");
    }
}

#[test]
#[ignore]
fn scratch_training_trajectory() {
    let line = config2();
    let reward = RewardConfig::default();
    let mut cfg = TrainingConfig::defaults_r2();

    // Train in 250-episode chunks by reusing determinism: run to each
    // horizon from scratch would be costly, so instead train full once and
    // eval the FINAL params of shorter runs.
    for horizon in [250u32, 500, 1000, 1500, 2000, 2500, 3000] {
        cfg.episodes = horizon;
        let out = ddqn::train(&line, &reward, &cfg, 12).unwrap();
        let ms = run_episodes(
            &line,
            &reward,
            &GreedyPolicy::new(out.final_params),
            30,
            1_000_000,
            8,
        )
        .unwrap();
        let n = ms.len() as f64;
        let parts: f64 = ms.iter().map(|m| m.produced_parts as f64).sum::<f64>() / n;
        let cost: f64 = ms.iter().map(|m| m.maintenance_cost).sum::<f64>() / n;
        let cbm: f64 = ms.iter().map(|m| m.cbm_count as f64).sum::<f64>() / n;
        let cm: f64 = ms.iter().map(|m| m.cm_count as f64).sum::<f64>() / n;
        let idle: f64 = ms.iter().map(|m| m.idle_count as f64).sum::<f64>() / n;
        println!(
            "after {horizon} eps (eps={:.3}, smoothed={:.2}): parts {parts:.1} cost {cost:.2} cbm {cbm:.1} cm {cm:.1} idle {idle:.1}",
            out.log.episodes.last().unwrap().epsilon,
            out.log.episodes.last().unwrap().smoothed_reward,
        );
    }
}
