//! Discrete-event simulation of a serial flow line.
//!
//! Machines pull parts through finite intermediate buffers; machine 1 draws
//! from an unbounded source and the last machine deposits into an unbounded
//! sink counted by `produced_parts`. While a machine operates it degrades
//! along a Markov chain over conditions `{0..n}`; state `n` is a breakdown
//! that only corrective maintenance clears. One shared maintenance resource
//! serves at most one machine at a time.
//!
//! Each tick runs in a fixed order: part flow in machine order, then
//! degradation draws in machine order, then the clock advances and a pending
//! maintenance completion is applied, then the decision-point test. A
//! machine is exposed to degradation on every tick it is engaged with a
//! part: working on one, or holding one it cannot pass downstream. Starved
//! machines spin empty without wear, and broken or under-maintenance
//! machines are out of service. The draws are routed through
//! [`DegradeSource`] so the same dynamics serve both the seeded simulator
//! and the exact enumerator in [`crate::oracle`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::config::LineConfig;
use crate::error::{Error, Result};

/// What a machine is currently doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MachineStatus {
    /// No part and nothing to pull.
    Starved,
    /// Working on a part.
    Processing,
    /// Finished part in place, downstream buffer full.
    Blocked,
    /// Condition reached `n`; waits for corrective maintenance.
    Broken,
    /// Occupying the maintenance resource.
    UnderMaintenance,
}

/// Dynamic state of one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub condition: u32,
    pub status: MachineStatus,
    pub work_remaining: u32,
    pub holds_part: bool,
    /// Clock at which each condition level was first reached since the last
    /// reset; drives FIFO request ordering. `level_reached_at[k]` is only
    /// meaningful for `k <= condition`.
    pub level_reached_at: Vec<u64>,
}

impl MachineState {
    fn fresh(n: u32, clock: u64) -> Self {
        let mut level_reached_at = vec![0; n as usize + 1];
        level_reached_at[0] = clock;
        Self {
            condition: 0,
            status: MachineStatus::Starved,
            work_remaining: 0,
            holds_part: false,
            level_reached_at,
        }
    }
}

/// Which maintenance activity a request resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MaintenanceKind {
    Cbm,
    Cm,
}

/// Complete simulation state; owns its RNG so trajectories are reproducible
/// from `(LineConfig, seed, action sequence)` alone.
#[derive(Debug, Clone)]
pub struct SimState {
    pub clock: u64,
    pub machines: Vec<MachineState>,
    /// Level of each machine's upstream buffer. Machine 1 pulls from an
    /// unbounded source, so `buffers[0]` stays 0.
    pub buffers: Vec<u32>,
    pub produced_parts: u64,
    /// Parts pulled from the raw-material source; conservation anchor.
    pub pulled_from_source: u64,
    /// Clock at which the running maintenance completes, if any.
    pub resource_busy_until: Option<u64>,
    /// Machine currently occupying the resource.
    pub under_maintenance: Option<usize>,
    pub rng: ChaCha8Rng,
}

/// Supplies degradation outcomes for operating machines, in machine order.
pub trait DegradeSource {
    fn degrades(&mut self, machine: usize, rate: f64) -> bool;
}

/// Seeded Bernoulli draws; the production path.
pub struct RngDegrade<'a>(pub &'a mut ChaCha8Rng);

impl DegradeSource for RngDegrade<'_> {
    fn degrades(&mut self, _machine: usize, rate: f64) -> bool {
        // One uniform per operating machine per tick keeps the stream layout
        // independent of the rate value.
        self.0.gen::<f64>() < rate
    }
}

/// Scripted outcomes, used by the exact enumerator.
pub struct ScriptedDegrade<'a>(pub &'a [bool], pub usize);

impl DegradeSource for ScriptedDegrade<'_> {
    fn degrades(&mut self, _machine: usize, _rate: f64) -> bool {
        let out = self.0[self.1];
        self.1 += 1;
        out
    }
}

/// One Markov degradation draw: advance `cs` with probability `d`, absorbing
/// at `n`.
pub fn degrade_step(cs: u32, d: f64, n: u32, rng: &mut ChaCha8Rng) -> u32 {
    if cs >= n {
        return n;
    }
    if rng.gen::<f64>() < d {
        cs + 1
    } else {
        cs
    }
}

/// Build the initial state: clock 0, all conditions 0, buffers empty,
/// resource free.
pub fn init_line(cfg: &LineConfig) -> Result<SimState> {
    cfg.validate()?;
    Ok(SimState {
        clock: 0,
        machines: (0..cfg.machine_count())
            .map(|_| MachineState::fresh(cfg.n, 0))
            .collect(),
        buffers: vec![0; cfg.machine_count()],
        produced_parts: 0,
        pulled_from_source: 0,
        resource_busy_until: None,
        under_maintenance: None,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    })
}

impl SimState {
    pub fn resource_free(&self) -> bool {
        self.resource_busy_until.is_none()
    }

    /// True when the agent must act: resource free and some machine above
    /// the critical threshold.
    pub fn at_decision_point(&self, cfg: &LineConfig) -> bool {
        self.resource_free() && self.machines.iter().any(|m| m.condition > cfg.n_c)
    }

    pub fn is_terminal(&self, cfg: &LineConfig) -> bool {
        self.clock >= cfg.t_sim
    }

    /// Parts currently held inside machines.
    pub fn parts_in_machines(&self) -> u64 {
        self.machines.iter().filter(|m| m.holds_part).count() as u64
    }

    /// Parts currently waiting in buffers.
    pub fn parts_in_buffers(&self) -> u64 {
        self.buffers.iter().map(|&b| b as u64).sum()
    }

    pub fn conditions(&self) -> Vec<u32> {
        self.machines.iter().map(|m| m.condition).collect()
    }

    /// Scenario-construction hook: force a machine's condition, updating its
    /// level history and breakdown status as if it had degraded now.
    pub fn set_condition(&mut self, machine: usize, cs: u32, cfg: &LineConfig) {
        let m = &mut self.machines[machine];
        let old = m.condition;
        m.condition = cs.min(cfg.n);
        for level in (old + 1)..=m.condition {
            m.level_reached_at[level as usize] = self.clock;
        }
        if m.condition >= cfg.n {
            if m.status != MachineStatus::UnderMaintenance {
                m.status = MachineStatus::Broken;
            }
        } else if m.status == MachineStatus::Broken {
            m.status = if m.holds_part {
                MachineStatus::Processing
            } else {
                MachineStatus::Starved
            };
        }
    }
}

/// Part-flow phase for one tick. Machines act in line order: a blocked
/// machine retries its deposit, an empty machine pulls, a loaded machine
/// works one unit and deposits on completion. Returns the machines that
/// operated this tick, in order.
pub fn flow_phase(cfg: &LineConfig, st: &mut SimState) -> Vec<usize> {
    let count = cfg.machine_count();
    let mut operated = Vec::with_capacity(count);
    for j in 0..count {
        match st.machines[j].status {
            MachineStatus::Broken | MachineStatus::UnderMaintenance => continue,
            _ => {}
        }

        // Deposit a finished part left over from an earlier tick.
        if st.machines[j].holds_part && st.machines[j].work_remaining == 0 {
            if try_deposit(cfg, st, j) {
                st.machines[j].holds_part = false;
                st.machines[j].status = MachineStatus::Starved;
            } else {
                st.machines[j].status = MachineStatus::Blocked;
                continue;
            }
        }

        if !st.machines[j].holds_part {
            if try_pull(st, j) {
                let m = &mut st.machines[j];
                m.holds_part = true;
                m.work_remaining = cfg.machines[j].process_time;
                m.status = MachineStatus::Processing;
            } else {
                st.machines[j].status = MachineStatus::Starved;
                continue;
            }
        }

        // One unit of work.
        st.machines[j].work_remaining -= 1;
        operated.push(j);
        if st.machines[j].work_remaining == 0 {
            if try_deposit(cfg, st, j) {
                st.machines[j].holds_part = false;
                st.machines[j].status = MachineStatus::Starved;
            } else {
                st.machines[j].status = MachineStatus::Blocked;
            }
        }
    }
    operated
}

fn try_deposit(cfg: &LineConfig, st: &mut SimState, j: usize) -> bool {
    if j + 1 == cfg.machine_count() {
        st.produced_parts += 1;
        return true;
    }
    if st.buffers[j + 1] < cfg.machines[j + 1].buffer_capacity {
        st.buffers[j + 1] += 1;
        return true;
    }
    false
}

fn try_pull(st: &mut SimState, j: usize) -> bool {
    if j == 0 {
        st.pulled_from_source += 1;
        return true;
    }
    if st.buffers[j] > 0 {
        st.buffers[j] -= 1;
        return true;
    }
    false
}

/// Machines exposed to degradation this tick: those that worked a unit
/// during the flow phase plus those left holding a part (blocked). Starved
/// machines run empty and do not wear; broken machines stand still and a
/// machine under maintenance is being renewed.
pub fn degrade_eligible(st: &SimState, operated: &[usize]) -> Vec<usize> {
    st.machines
        .iter()
        .enumerate()
        .filter(|&(j, m)| {
            if matches!(
                m.status,
                MachineStatus::Broken | MachineStatus::UnderMaintenance
            ) {
                return false;
            }
            m.holds_part || operated.binary_search(&j).is_ok()
        })
        .map(|(j, _)| j)
        .collect()
}

/// Degradation phase: one draw per eligible machine, in machine order. A
/// machine reaching `n` breaks down on the spot.
pub fn degrade_phase(
    cfg: &LineConfig,
    st: &mut SimState,
    eligible: &[usize],
    source: &mut impl DegradeSource,
) {
    for &j in eligible {
        let rate = cfg.machines[j].degradation_rate;
        let cs = st.machines[j].condition;
        if cs >= cfg.n {
            continue;
        }
        if source.degrades(j, rate) {
            let m = &mut st.machines[j];
            m.condition = cs + 1;
            // Observable from the next clock value onward.
            m.level_reached_at[m.condition as usize] = st.clock + 1;
            if m.condition == cfg.n {
                m.status = MachineStatus::Broken;
            }
        }
    }
}

/// Close the tick: advance the clock and apply a maintenance completion
/// falling on the new clock value (condition reset to 0, status resumed,
/// resource freed).
pub fn finish_tick(st: &mut SimState) {
    st.clock += 1;
    if st.resource_busy_until == Some(st.clock) {
        let j = st
            .under_maintenance
            .expect("resource busy without a machine under maintenance");
        let clock = st.clock;
        let m = &mut st.machines[j];
        m.condition = 0;
        m.level_reached_at.fill(0);
        m.level_reached_at[0] = clock;
        m.status = if m.holds_part {
            if m.work_remaining > 0 {
                MachineStatus::Processing
            } else {
                MachineStatus::Blocked
            }
        } else {
            MachineStatus::Starved
        };
        st.resource_busy_until = None;
        st.under_maintenance = None;
    }
}

/// One full tick with seeded degradation draws.
pub fn tick(cfg: &LineConfig, st: &mut SimState) {
    let operated = flow_phase(cfg, st);
    let eligible = degrade_eligible(st, &operated);
    let mut rng = st.rng.clone();
    degrade_phase(cfg, st, &eligible, &mut RngDegrade(&mut rng));
    st.rng = rng;
    finish_tick(st);
}

/// Start a maintenance activity on `machine` at the current clock. The kind
/// is decided by the machine's condition: CM at the breakdown state, CBM
/// otherwise. Returns the kind; the caller advances the simulation for the
/// corresponding duration.
pub fn apply_maintenance(
    cfg: &LineConfig,
    st: &mut SimState,
    machine: usize,
) -> Result<MaintenanceKind> {
    if !st.resource_free() {
        return Err(Error::Contract(
            "maintenance requested while the resource is busy".into(),
        ));
    }
    if machine >= cfg.machine_count() {
        return Err(Error::Contract(format!(
            "machine index {machine} out of range"
        )));
    }
    let kind = if st.machines[machine].condition == cfg.n {
        MaintenanceKind::Cm
    } else {
        MaintenanceKind::Cbm
    };
    let duration = match kind {
        MaintenanceKind::Cbm => cfg.t_cbm,
        MaintenanceKind::Cm => cfg.t_cm,
    };
    st.machines[machine].status = MachineStatus::UnderMaintenance;
    st.resource_busy_until = Some(st.clock + duration);
    st.under_maintenance = Some(machine);
    Ok(kind)
}

/// Advance until the first clock tick at or after `commit + duration` where
/// the resource is free and some condition exceeds `n_c`, or until `t_sim`.
/// Returns the elapsed time `t_{k+1} - t_k`.
pub fn advance_until_decision(cfg: &LineConfig, st: &mut SimState, duration: u64) -> u64 {
    let commit = st.clock;
    let target = commit + duration;
    while !st.is_terminal(cfg) {
        tick(cfg, st);
        if st.clock >= target && st.at_decision_point(cfg) {
            break;
        }
    }
    st.clock - commit
}
