//! Episodic MDP wrapper around the simulator: observation encoding, action
//! decoding, the decision-point loop and the two reward designs.

use serde::{Deserialize, Serialize};

use crate::config::{LineConfig, RewardConfig, RewardMode};
use crate::error::{Error, Result};
use crate::sim::{self, MaintenanceKind, SimState};

/// Normalized state vector: conditions `cs_j / n` followed by buffer levels
/// `level_j / b_j`, all in `[0,1]`.
pub type Observation = Vec<f64>;

/// Agent action: idle or maintain one machine. The environment resolves
/// CBM vs CM from the machine's condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Idle,
    Maintain(usize),
}

impl Action {
    /// Network output index: 0 for idle, `j+1` for machine `j`.
    pub fn code(self) -> usize {
        match self {
            Action::Idle => 0,
            Action::Maintain(j) => j + 1,
        }
    }

    pub fn from_code(code: usize, machine_count: usize) -> Result<Self> {
        match code {
            0 => Ok(Action::Idle),
            j if j <= machine_count => Ok(Action::Maintain(j - 1)),
            _ => Err(Error::Contract(format!(
                "action code {code} outside 0..={machine_count}"
            ))),
        }
    }
}

/// Which branch of the R2 reward applied to a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Idle, no breakdown present at the next decision point.
    A,
    /// Idle with at least one broken machine.
    B,
    /// A maintenance activity was scheduled.
    C,
}

/// One environment step as consumed by policies and the replay buffer.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub terminal: bool,
    pub elapsed: u64,
    pub kind: Option<MaintenanceKind>,
    pub breakdown_present: bool,
    pub scenario: Option<Scenario>,
}

/// Output-quantity reward: parts produced between two decision points.
pub fn reward_r1(pp_before: u64, pp_after: u64) -> f64 {
    debug_assert!(pp_after >= pp_before);
    (pp_after - pp_before) as f64
}

/// Cost-based reward over the three scenarios. Scenario C charges the cost
/// of the activity actually performed plus a production-loss term shrinking
/// with the elapsed time; `verbatim_sum` switches to the flat
/// `-(c_cbm + c_cm + c_pl/dt)` variant.
pub fn reward_r2(
    scenario: Scenario,
    kind: Option<MaintenanceKind>,
    elapsed: u64,
    cfg: &RewardConfig,
) -> Result<f64> {
    match scenario {
        Scenario::A => Ok(0.0),
        Scenario::B => Ok(-(cfg.beta * cfg.c_cbm)),
        Scenario::C => {
            if elapsed == 0 {
                return Err(Error::Contract("scenario C requires elapsed >= 1".into()));
            }
            let action_cost = if cfg.verbatim_sum {
                cfg.c_cbm + cfg.c_cm
            } else {
                match kind {
                    Some(MaintenanceKind::Cbm) => cfg.c_cbm,
                    Some(MaintenanceKind::Cm) => cfg.c_cm,
                    None => {
                        return Err(Error::Contract(
                            "scenario C without a maintenance kind".into(),
                        ))
                    }
                }
            };
            Ok(-(action_cost + cfg.c_pl / elapsed as f64))
        }
    }
}

/// Build the observation for a simulator state.
pub fn observe(cfg: &LineConfig, st: &SimState) -> Observation {
    let count = cfg.machine_count();
    let mut obs = Vec::with_capacity(2 * count);
    for m in &st.machines {
        obs.push(m.condition as f64 / cfg.n as f64);
    }
    for (j, &level) in st.buffers.iter().enumerate() {
        obs.push(level as f64 / cfg.machines[j].buffer_capacity as f64);
    }
    obs
}

/// The maintenance-scheduling environment. Owns one simulator episode and
/// pauses it at decision points.
#[derive(Debug, Clone)]
pub struct MaintEnv {
    line: LineConfig,
    reward: RewardConfig,
    state: SimState,
    terminal: bool,
}

impl MaintEnv {
    /// Fresh episode advanced to its first decision point (terminal
    /// immediately if none occurs before `t_sim`).
    pub fn reset(line: &LineConfig, reward: &RewardConfig, seed: u64) -> Result<Self> {
        reward.validate()?;
        let mut cfg = line.clone();
        cfg.seed = seed;
        let mut state = sim::init_line(&cfg)?;
        sim::advance_until_decision(&cfg, &mut state, 0);
        let terminal = state.is_terminal(&cfg);
        Ok(Self {
            line: cfg,
            reward: reward.clone(),
            state,
            terminal,
        })
    }

    pub fn observation(&self) -> Observation {
        observe(&self.line, &self.state)
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SimState {
        &mut self.state
    }

    pub fn line(&self) -> &LineConfig {
        &self.line
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward
    }

    pub fn action_count(&self) -> usize {
        self.line.machine_count() + 1
    }

    /// Commit an action, run the simulation to the next decision point (or
    /// episode end) and score the step.
    pub fn step(&mut self, action: Action) -> Result<Transition> {
        if self.terminal {
            return Err(Error::Contract("step on a terminal episode".into()));
        }
        let obs = self.observation();
        let pp_before = self.state.produced_parts;

        let (kind, duration) = match action {
            Action::Idle => (None, self.line.t_idle),
            Action::Maintain(j) => {
                let kind = sim::apply_maintenance(&self.line, &mut self.state, j)?;
                let duration = match kind {
                    MaintenanceKind::Cbm => self.line.t_cbm,
                    MaintenanceKind::Cm => self.line.t_cm,
                };
                (Some(kind), duration)
            }
        };

        let elapsed = sim::advance_until_decision(&self.line, &mut self.state, duration);
        self.terminal = self.state.is_terminal(&self.line);

        let breakdown_present = self
            .state
            .machines
            .iter()
            .any(|m| m.condition == self.line.n);
        let scenario = match action {
            Action::Idle if breakdown_present => Scenario::B,
            Action::Idle => Scenario::A,
            Action::Maintain(_) => Scenario::C,
        };
        let reward = match self.reward.reward_mode {
            RewardMode::R1 => reward_r1(pp_before, self.state.produced_parts),
            RewardMode::R2 => reward_r2(scenario, kind, elapsed, &self.reward)?,
        };

        Ok(Transition {
            obs,
            action,
            reward,
            next_obs: self.observation(),
            terminal: self.terminal,
            elapsed,
            kind,
            breakdown_present,
            scenario: Some(scenario),
        })
    }
}
