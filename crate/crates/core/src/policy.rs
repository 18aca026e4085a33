//! Scheduling policies: the FIFO maintenance heuristic with a critical-state
//! threshold, a uniform random benchmark, and greedy execution of a trained
//! Q-network. The empirical threshold sweep lives here too.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::config::{LineConfig, RewardConfig};
use crate::ddqn::argmax;
use crate::env::{observe, Action};
use crate::error::Result;
use crate::eval::{run_episodes, EpisodeMetrics};
use crate::nn::{self, MlpParams};
use crate::sim::SimState;

/// A decision-point policy. Implementations are cheap to clone so episodes
/// can fan out across threads.
pub trait Policy: Send {
    /// Label used in result tables and CSV rows.
    fn name(&self) -> String;
    /// Re-seed per-episode state; called before every episode.
    fn begin_episode(&mut self, seed: u64);
    fn act(&mut self, line: &LineConfig, state: &SimState) -> Action;
}

/// FIFO maintenance: machines queue up in the order their condition first
/// exceeded the threshold; the queue head is maintained, idle when empty.
/// The threshold lives in the policy so the environment (running with
/// `n_c = 0`) still records idle decisions.
#[derive(Debug, Clone)]
pub struct FifoPolicy {
    pub threshold: u32,
    /// Pending requests ordered by (crossing clock, machine index).
    queue: BTreeSet<(u64, usize)>,
    queued: Vec<bool>,
}

impl FifoPolicy {
    pub fn new(threshold: u32) -> Self {
        Self {
            threshold,
            queue: BTreeSet::new(),
            queued: Vec::new(),
        }
    }
}

impl Policy for FifoPolicy {
    fn name(&self) -> String {
        format!("fifo:{}", self.threshold)
    }

    fn begin_episode(&mut self, _seed: u64) {
        self.queue.clear();
        self.queued.clear();
    }

    fn act(&mut self, line: &LineConfig, state: &SimState) -> Action {
        if self.queued.len() != state.machines.len() {
            self.queued = vec![false; state.machines.len()];
        }
        // Enqueue fresh crossings. The crossing clock comes from the
        // simulator's per-level history, so requests raised between decision
        // points keep their true order.
        if self.threshold < line.n {
            for (j, m) in state.machines.iter().enumerate() {
                if m.condition > self.threshold && !self.queued[j] {
                    let crossed_at = m.level_reached_at[(self.threshold + 1) as usize];
                    self.queue.insert((crossed_at, j));
                    self.queued[j] = true;
                }
            }
        }
        match self.queue.iter().next().cloned() {
            Some(head) => {
                self.queue.remove(&head);
                self.queued[head.1] = false;
                Action::Maintain(head.1)
            }
            None => Action::Idle,
        }
    }
}

/// Uniform random action over `{0..i}`.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new() -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Default for RandomPolicy {
    fn default() -> Self {
        Self::new()
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn begin_episode(&mut self, seed: u64) {
        // Distinct stream from the simulator's own draws.
        self.rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5241_4e44_504f_4c59);
    }

    fn act(&mut self, line: &LineConfig, _state: &SimState) -> Action {
        let code = self.rng.gen_range(0..=line.machine_count());
        Action::from_code(code, line.machine_count()).expect("code in range")
    }
}

/// Greedy execution of a trained Q-network (lowest-index tie-break).
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub params: MlpParams,
    label: String,
}

impl GreedyPolicy {
    pub fn new(params: MlpParams) -> Self {
        Self {
            params,
            label: "ddqn".into(),
        }
    }

    pub fn with_label(params: MlpParams, label: impl Into<String>) -> Self {
        Self {
            params,
            label: label.into(),
        }
    }
}

impl Policy for GreedyPolicy {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn begin_episode(&mut self, _seed: u64) {}

    fn act(&mut self, line: &LineConfig, state: &SimState) -> Action {
        let q = nn::forward(&self.params, &observe(line, state));
        Action::from_code(argmax(&q), line.machine_count()).expect("argmax in range")
    }
}

/// What the threshold sweep optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepCriterion {
    MaxParts,
    MinCost,
}

/// One row of the sweep table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub threshold: u32,
    pub mean_parts: f64,
    pub mean_cost: f64,
    pub mean_cbm: f64,
    pub mean_cm: f64,
}

/// Result of sweeping the FIFO threshold over `{0..n}`.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub best_by_parts: u32,
    pub best_by_cost: u32,
}

impl SweepResult {
    pub fn best(&self, criterion: SweepCriterion) -> u32 {
        match criterion {
            SweepCriterion::MaxParts => self.best_by_parts,
            SweepCriterion::MinCost => self.best_by_cost,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,mean_parts,mean_cost,mean_cbm,mean_cm\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.threshold, r.mean_parts, r.mean_cost, r.mean_cbm, r.mean_cm
            ));
        }
        out
    }
}

fn mean_of(metrics: &[EpisodeMetrics], f: impl Fn(&EpisodeMetrics) -> f64) -> f64 {
    if metrics.is_empty() {
        return 0.0;
    }
    metrics.iter().map(f).sum::<f64>() / metrics.len() as f64
}

/// Evaluate FIFO at every threshold in `{0..n}` over `episodes_per_value`
/// seeded episodes and pick the best per criterion (lowest threshold wins
/// ties).
pub fn sweep_threshold(
    line: &LineConfig,
    reward: &RewardConfig,
    episodes_per_value: u32,
    base_seed: u64,
    workers: usize,
) -> Result<SweepResult> {
    let mut rows = Vec::with_capacity(line.n as usize + 1);
    for threshold in 0..=line.n {
        let policy = FifoPolicy::new(threshold);
        let metrics = run_episodes(line, reward, &policy, episodes_per_value, base_seed, workers)?;
        rows.push(SweepRow {
            threshold,
            mean_parts: mean_of(&metrics, |m| m.produced_parts as f64),
            mean_cost: mean_of(&metrics, |m| m.maintenance_cost),
            mean_cbm: mean_of(&metrics, |m| m.cbm_count as f64),
            mean_cm: mean_of(&metrics, |m| m.cm_count as f64),
        });
    }
    let best_by_parts = rows
        .iter()
        .max_by(|a, b| {
            a.mean_parts
                .partial_cmp(&b.mean_parts)
                .unwrap()
                .then(b.threshold.cmp(&a.threshold))
        })
        .map(|r| r.threshold)
        .unwrap_or(0);
    let best_by_cost = rows
        .iter()
        .min_by(|a, b| {
            a.mean_cost
                .partial_cmp(&b.mean_cost)
                .unwrap()
                .then(a.threshold.cmp(&b.threshold))
        })
        .map(|r| r.threshold)
        .unwrap_or(0);
    Ok(SweepResult {
        rows,
        best_by_parts,
        best_by_cost,
    })
}
