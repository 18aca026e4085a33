//! Run configuration: the flow line itself, the reward model and the
//! training hyperparameters, all carried by a single JSON document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Static description of one machine in the line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineConfig {
    /// Process time in simulation steps.
    #[serde(rename = "p")]
    pub process_time: u32,
    /// Per-operating-step probability of the condition advancing one state.
    #[serde(rename = "d")]
    pub degradation_rate: f64,
    /// Capacity of the machine's upstream buffer.
    #[serde(rename = "b")]
    pub buffer_capacity: u32,
}

/// Static description of the whole flow line and episode horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub machines: Vec<MachineConfig>,
    /// Breakdown state: a machine reaching condition `n` stops until CM.
    pub n: u32,
    /// Critical threshold: decision points require some condition above it.
    pub n_c: u32,
    pub t_cbm: u64,
    pub t_cm: u64,
    pub t_idle: u64,
    pub t_sim: u64,
    pub seed: u64,
}

impl LineConfig {
    pub fn machine_count(&self) -> usize {
        self.machines.len()
    }

    /// Slowest process time in the line.
    pub fn p_max(&self) -> u32 {
        self.machines
            .iter()
            .map(|m| m.process_time)
            .max()
            .unwrap_or(0)
    }

    /// Ideal output with no degradation: `t_sim / p_max`.
    pub fn rho_max(&self) -> f64 {
        self.t_sim as f64 / self.p_max() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.machines.is_empty() {
            return Err(Error::InvalidConfig("machines must be non-empty".into()));
        }
        for (j, m) in self.machines.iter().enumerate() {
            if m.process_time < 1 {
                return Err(Error::InvalidConfig(format!(
                    "machine {}: p must be >= 1",
                    j + 1
                )));
            }
            if !(0.0..=1.0).contains(&m.degradation_rate) {
                return Err(Error::InvalidConfig(format!(
                    "machine {}: d must lie in [0,1]",
                    j + 1
                )));
            }
            if m.buffer_capacity < 1 {
                return Err(Error::InvalidConfig(format!(
                    "machine {}: b must be >= 1",
                    j + 1
                )));
            }
        }
        if self.n < 1 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.n_c >= self.n {
            return Err(Error::InvalidConfig("n_c must satisfy 0 <= n_c < n".into()));
        }
        if self.t_cbm < 1 || self.t_cm < 1 || self.t_idle < 1 {
            return Err(Error::InvalidConfig(
                "maintenance and idle durations must be >= 1".into(),
            ));
        }
        if self.t_sim < 1 {
            return Err(Error::InvalidConfig("t_sim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Which of the two reward designs the environment computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardMode {
    R1,
    R2,
}

/// Cost constants for the reward functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub c_cbm: f64,
    pub c_cm: f64,
    pub c_pl: f64,
    pub beta: f64,
    pub reward_mode: RewardMode,
    /// Reproduce the printed scenario-C formula `-(c_cbm + c_cm + c_pl/dt)`
    /// instead of charging the cost of the action actually performed.
    #[serde(default)]
    pub verbatim_sum: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c_cbm: 0.5,
            c_cm: 1.5,
            c_pl: 0.1,
            beta: 10.0,
            reward_mode: RewardMode::R2,
            verbatim_sum: false,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_cbm < 0.0 || self.c_cm < 0.0 || self.c_pl < 0.0 {
            return Err(Error::InvalidConfig("costs must be >= 0".into()));
        }
        if self.beta <= 0.0 {
            return Err(Error::InvalidConfig("beta must be > 0".into()));
        }
        Ok(())
    }
}

/// Whether epsilon decays once per decision step or once per episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayGranularity {
    PerEpisode,
    PerStep,
}

/// DDQN training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub episodes: u32,
    pub batch_size: usize,
    pub gamma: f64,
    pub lr: f64,
    /// Optional multiplicative learning-rate decay applied once per episode.
    #[serde(default)]
    pub lr_decay: Option<f64>,
    pub target_sync_episodes: u32,
    pub epsilon_start: f64,
    pub epsilon_min: f64,
    pub epsilon_decay_rate: f64,
    pub decay_granularity: DecayGranularity,
    pub smoothing_window: usize,
    pub replay_capacity: usize,
    /// Hidden layer widths of the two-hidden-layer Q-network.
    pub hidden: [usize; 2],
    /// Optional gradient-norm clip; off by default.
    #[serde(default)]
    pub grad_clip: Option<f64>,
}

impl TrainingConfig {
    /// Hyperparameters used with the output-quantity reward R1.
    pub fn defaults_r1() -> Self {
        Self {
            episodes: 3000,
            batch_size: 151,
            gamma: 0.870,
            lr: 5.4e-4,
            lr_decay: None,
            target_sync_episodes: 200,
            epsilon_start: 1.0,
            epsilon_min: 0.1,
            epsilon_decay_rate: 4.8e-5,
            decay_granularity: DecayGranularity::PerStep,
            smoothing_window: 100,
            replay_capacity: 100_000,
            hidden: [17, 11],
            grad_clip: None,
        }
    }

    /// Hyperparameters used with the cost-based reward R2.
    pub fn defaults_r2() -> Self {
        Self {
            episodes: 3000,
            batch_size: 137,
            gamma: 0.993,
            lr: 3.6e-4,
            lr_decay: None,
            target_sync_episodes: 98,
            epsilon_start: 1.0,
            epsilon_min: 0.1,
            epsilon_decay_rate: 2.9e-5,
            decay_granularity: DecayGranularity::PerStep,
            smoothing_window: 100,
            replay_capacity: 100_000,
            hidden: [14, 18],
            grad_clip: None,
        }
    }

    pub fn defaults_for(mode: RewardMode) -> Self {
        match mode {
            RewardMode::R1 => Self::defaults_r1(),
            RewardMode::R2 => Self::defaults_r2(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidConfig("gamma must lie in (0,1]".into()));
        }
        if !(self.epsilon_min > 0.0
            && self.epsilon_min <= self.epsilon_start
            && self.epsilon_start <= 1.0)
        {
            return Err(Error::InvalidConfig(
                "need 0 < epsilon_min <= epsilon_start <= 1".into(),
            ));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::InvalidConfig(
                "replay capacity must be >= batch size >= 1".into(),
            ));
        }
        if self.lr <= 0.0 {
            return Err(Error::InvalidConfig("lr must be > 0".into()));
        }
        Ok(())
    }
}

/// Everything a run needs, parsed from one JSON document.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub line: LineConfig,
    pub reward: RewardConfig,
    pub training: TrainingConfig,
}

const LINE_KEYS: [&str; 8] = ["machines", "n", "n_c", "t_cbm", "t_cm", "t_idle", "t_sim", "seed"];

impl RunConfig {
    /// Parse and validate a config document.
    ///
    /// The line keys are required; reward keys default to the standard cost
    /// constants and the training section defaults to the hyperparameter set
    /// matching `reward_mode`.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Parse("top-level JSON value must be an object".into()))?;
        for key in LINE_KEYS {
            if !obj.contains_key(key) {
                return Err(Error::MissingKey(key));
            }
        }

        let line: LineConfig = serde_json::from_value(value.clone())
            .map_err(|e| Error::Parse(e.to_string()))?;
        line.validate()?;

        let mut reward = RewardConfig::default();
        if let Some(v) = obj.get("reward_mode") {
            reward.reward_mode = serde_json::from_value(v.clone())
                .map_err(|e| Error::Parse(format!("reward_mode: {e}")))?;
        }
        let number = |key: &str| -> Result<Option<f64>> {
            match obj.get(key) {
                None => Ok(None),
                Some(v) => v
                    .as_f64()
                    .map(Some)
                    .ok_or_else(|| Error::Parse(format!("{key} must be a number"))),
            }
        };
        if let Some(x) = number("c_cbm")? {
            reward.c_cbm = x;
        }
        if let Some(x) = number("c_cm")? {
            reward.c_cm = x;
        }
        if let Some(x) = number("c_pl")? {
            reward.c_pl = x;
        }
        if let Some(x) = number("beta")? {
            reward.beta = x;
        }
        if let Some(v) = obj.get("verbatim_sum") {
            reward.verbatim_sum = v
                .as_bool()
                .ok_or_else(|| Error::Parse("verbatim_sum must be a boolean".into()))?;
        }
        reward.validate()?;

        let mut training = TrainingConfig::defaults_for(reward.reward_mode);
        if let Some(t) = obj.get("training") {
            let defaults = serde_json::to_value(&training).unwrap();
            let merged = merge_over(defaults, t.clone());
            training = serde_json::from_value(merged)
                .map_err(|e| Error::Parse(format!("training: {e}")))?;
        }
        training.validate()?;

        Ok(Self { line, reward, training })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

/// Overlay `patch`'s keys on top of `base` (one level deep).
fn merge_over(base: serde_json::Value, patch: serde_json::Value) -> serde_json::Value {
    match (base, patch) {
        (serde_json::Value::Object(mut b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                b.insert(k, v);
            }
            serde_json::Value::Object(b)
        }
        (_, p) => p,
    }
}
