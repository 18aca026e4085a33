//! DDQN training loop: epsilon-greedy exploration, uniform replay memory,
//! periodic target-network synchronization and best-checkpoint retention.
//!
//! The online network selects the greedy action at the successor state while
//! the target network evaluates it, which is what separates this from plain
//! deep Q-learning.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::config::{DecayGranularity, LineConfig, RewardConfig, TrainingConfig};
use crate::env::{Action, MaintEnv, Observation, Transition};
use crate::error::Result;
use crate::nn::{self, AdamState, MlpParams};

/// Compact transition as stored in replay memory.
#[derive(Debug, Clone)]
pub struct StoredTransition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

impl From<&Transition> for StoredTransition {
    fn from(t: &Transition) -> Self {
        Self {
            obs: t.obs.clone(),
            action: t.action.code(),
            reward: t.reward,
            next_obs: t.next_obs.clone(),
            terminal: t.terminal,
        }
    }
}

/// Fixed-capacity ring buffer with oldest-first eviction and uniform
/// sampling without replacement within a batch.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<StoredTransition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: StoredTransition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.next] = t;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    /// Draw `k` distinct indices uniformly. Rejection sampling is cheap here
    /// because batches are far smaller than the buffer.
    pub fn sample_indices(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        assert!(k <= self.data.len(), "batch larger than buffer");
        let mut picked = Vec::with_capacity(k);
        let mut seen = std::collections::HashSet::with_capacity(k * 2);
        while picked.len() < k {
            let idx = rng.gen_range(0..self.data.len());
            if seen.insert(idx) {
                picked.push(idx);
            }
        }
        picked
    }

    pub fn get(&self, idx: usize) -> &StoredTransition {
        &self.data[idx]
    }
}

/// DDQN regression target: `r` on terminal transitions, otherwise
/// `r + gamma * Q(s', argmax_a Q(s',a; theta); theta')`.
pub fn ddqn_target(
    reward: f64,
    next_obs: &Observation,
    theta: &MlpParams,
    theta_prime: &MlpParams,
    gamma: f64,
    terminal: bool,
) -> f64 {
    if terminal {
        return reward;
    }
    let online = nn::forward(theta, next_obs);
    let best = argmax(&online);
    let target = nn::forward(theta_prime, next_obs);
    reward + gamma * target[best]
}

/// Lowest-index argmax.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy action selection over Q-values: a uniform random action
/// with probability epsilon, the greedy one otherwise.
pub fn select_action(q_values: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> usize {
    debug_assert!((0.0..=1.0).contains(&epsilon));
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q_values.len())
    } else {
        argmax(q_values)
    }
}

/// Per-episode training counters.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub reward: f64,
    pub produced_parts: u64,
    pub maintenance_cost: f64,
    pub decisions: u32,
    pub epsilon: f64,
    pub smoothed_reward: f64,
}

/// Episode-indexed log of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeRecord>,
}

impl TrainingLog {
    pub fn best_smoothed(&self) -> Option<f64> {
        self.episodes
            .iter()
            .map(|e| e.smoothed_reward)
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
    }

    /// CSV with one row per episode.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "episode,reward,produced_parts,maintenance_cost,decisions,epsilon,smoothed_reward\n",
        );
        for (i, e) in self.episodes.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i + 1,
                e.reward,
                e.produced_parts,
                e.maintenance_cost,
                e.decisions,
                e.epsilon,
                e.smoothed_reward
            ));
        }
        out
    }
}

/// Outcome of a training run: the checkpoint with the best smoothed reward,
/// the final parameters, and the full log.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best_params: MlpParams,
    pub final_params: MlpParams,
    pub best_smoothed_reward: f64,
    pub log: TrainingLog,
}

/// Network layout for a line: `[2i, h1, h2, i+1]`.
pub fn layer_sizes(line: &LineConfig, hidden: [usize; 2]) -> Vec<usize> {
    vec![
        2 * line.machine_count(),
        hidden[0],
        hidden[1],
        line.machine_count() + 1,
    ]
}

/// Run the full DDQN training schedule. Deterministic given the seed: the
/// same configs and seed reproduce the log bit for bit.
pub fn train(
    line: &LineConfig,
    reward: &RewardConfig,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    line.validate()?;
    reward.validate()?;
    cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let sizes = layer_sizes(line, cfg.hidden);
    let mut theta = nn::init_params(&sizes, &mut rng);
    let mut theta_prime = theta.clone();
    let mut adam = AdamState::new(&theta, cfg.lr);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity);
    let mut epsilon = cfg.epsilon_start;

    let mut log = TrainingLog::default();
    let mut best_params = theta.clone();
    let mut best_smoothed = f64::NEG_INFINITY;
    let mut reward_window: Vec<f64> = Vec::with_capacity(cfg.smoothing_window.max(1));

    for episode in 0..cfg.episodes {
        let mut env = MaintEnv::reset(line, reward, seed.wrapping_add(episode as u64))?;
        let mut ep_reward = 0.0;
        let mut decisions = 0u32;
        let mut cbm = 0u32;
        let mut cm = 0u32;

        while !env.is_terminal() {
            let obs = env.observation();
            let q = nn::forward(&theta, &obs);
            let code = select_action(&q, epsilon, &mut rng);
            let action = Action::from_code(code, line.machine_count())?;
            let tr = env.step(action)?;

            ep_reward += tr.reward;
            decisions += 1;
            match tr.kind {
                Some(crate::sim::MaintenanceKind::Cbm) => cbm += 1,
                Some(crate::sim::MaintenanceKind::Cm) => cm += 1,
                None => {}
            }
            buffer.push(StoredTransition::from(&tr));

            if buffer.len() >= cfg.batch_size {
                let idx = buffer.sample_indices(cfg.batch_size, &mut rng);
                let batch: Vec<nn::BatchItem> = idx
                    .iter()
                    .map(|&i| {
                        let t = buffer.get(i);
                        let y = ddqn_target(
                            t.reward,
                            &t.next_obs,
                            &theta,
                            &theta_prime,
                            cfg.gamma,
                            t.terminal,
                        );
                        (t.obs.clone(), t.action, y)
                    })
                    .collect();
                let mut grads = nn::backward(&theta, &batch)?;
                if let Some(max_norm) = cfg.grad_clip {
                    nn::clip_grad_norm(&mut grads, max_norm);
                }
                nn::adam_step(&mut theta, &grads, &mut adam);
            }

            if cfg.decay_granularity == DecayGranularity::PerStep {
                epsilon = (epsilon * (1.0 - cfg.epsilon_decay_rate)).max(cfg.epsilon_min);
            }
        }

        if cfg.decay_granularity == DecayGranularity::PerEpisode {
            epsilon = (epsilon * (1.0 - cfg.epsilon_decay_rate)).max(cfg.epsilon_min);
        }
        if let Some(decay) = cfg.lr_decay {
            adam.lr *= decay;
        }
        if (episode + 1) % cfg.target_sync_episodes.max(1) == 0 {
            theta_prime = theta.clone();
        }

        if reward_window.len() == cfg.smoothing_window.max(1) {
            reward_window.remove(0);
        }
        reward_window.push(ep_reward);
        let smoothed = reward_window.iter().sum::<f64>() / reward_window.len() as f64;

        if smoothed > best_smoothed {
            best_smoothed = smoothed;
            best_params = theta.clone();
        }

        log.episodes.push(EpisodeRecord {
            reward: ep_reward,
            produced_parts: env.state().produced_parts,
            maintenance_cost: reward.c_cbm * cbm as f64 + reward.c_cm * cm as f64,
            decisions,
            epsilon,
            smoothed_reward: smoothed,
        });
    }

    Ok(TrainOutcome {
        best_params,
        final_params: theta,
        best_smoothed_reward: best_smoothed,
        log,
    })
}
