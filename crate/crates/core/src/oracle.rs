//! Exact tabular solver for small instances. The maintenance MDP over
//! decision points is enumerated by exhaustively branching the simulator's
//! own tick phases over every degradation outcome, so the enumerated
//! transition law and the event simulator cannot drift apart. Value
//! iteration on the result provides ground truth for policy-quality checks.

use std::collections::{BTreeMap, VecDeque};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{LineConfig, RewardConfig, RewardMode};
use crate::env::{self, Action, Scenario};
use crate::error::{Error, Result};
use crate::sim::{self, MaintenanceKind, ScriptedDegrade, SimState};

/// Canonical identity of a decision state: per-machine
/// `(condition, work_remaining, holds_part)` plus buffer levels. Statuses
/// are derivable (the resource is always free at a decision point).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateKey {
    pub machines: Vec<(u32, u32, bool)>,
    pub buffers: Vec<u32>,
}

impl StateKey {
    pub fn of(st: &SimState) -> Self {
        Self {
            machines: st
                .machines
                .iter()
                .map(|m| (m.condition, m.work_remaining, m.holds_part))
                .collect(),
            buffers: st.buffers.clone(),
        }
    }

    /// Human-readable condition vector, e.g. `2|0|1`.
    pub fn conditions_label(&self) -> String {
        self.machines
            .iter()
            .map(|(cs, _, _)| cs.to_string())
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// One row entry of the decision-point MDP. `next == None` is episode end.
#[derive(Debug, Clone)]
pub struct MdpTransition {
    pub next: Option<usize>,
    pub elapsed: u64,
    pub prob: f64,
    pub reward: f64,
}

/// The enumerated MDP: one row of transitions per (state, action).
#[derive(Debug, Clone)]
pub struct TabularMdp {
    pub actions: usize,
    pub observations: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<MdpTransition>>>,
}

impl TabularMdp {
    pub fn state_count(&self) -> usize {
        self.observations.len()
    }
}

/// Enumeration output: the MDP plus the state identities and representative
/// simulator states (used to cross-validate against seeded simulation).
#[derive(Debug, Clone)]
pub struct EnumeratedMdp {
    pub mdp: TabularMdp,
    pub keys: Vec<StateKey>,
    pub reps: Vec<SimState>,
}

/// Forget episode-position details so expansions are position-independent.
fn normalize_rep(st: &SimState) -> SimState {
    let mut s = st.clone();
    s.clock = 0;
    s.produced_parts = 0;
    s.pulled_from_source = s.parts_in_buffers() + s.parts_in_machines();
    s.rng = ChaCha8Rng::seed_from_u64(0);
    for m in &mut s.machines {
        m.level_reached_at.fill(0);
    }
    s
}

/// Emission group: everything the reward depends on.
/// `(arrival key or terminal, elapsed, produced delta, breakdown present)`.
type EmissionKey = (Option<StateKey>, u64, u64, bool);

struct Expansion {
    emissions: BTreeMap<EmissionKey, f64>,
    /// Representative simulator state per arrival key.
    arrivals: BTreeMap<StateKey, SimState>,
    kind: Option<MaintenanceKind>,
}

/// Branch the simulator tick-by-tick over every degradation outcome until
/// each branch reaches a decision point at or after the action's duration,
/// or the horizon. `duration == 0` models the pre-first-decision phase.
fn expand(
    line: &LineConfig,
    rep: &SimState,
    action: Option<Action>,
    frontier_cap: usize,
) -> Result<Expansion> {
    let mut start = rep.clone();
    let (kind, duration) = match action {
        None => (None, 0),
        Some(Action::Idle) => (None, line.t_idle),
        Some(Action::Maintain(j)) => {
            let kind = sim::apply_maintenance(line, &mut start, j)?;
            let d = match kind {
                MaintenanceKind::Cbm => line.t_cbm,
                MaintenanceKind::Cm => line.t_cm,
            };
            (Some(kind), d)
        }
    };

    // Frontier keyed by (micro state, produced delta); probabilities merge.
    let mut frontier: BTreeMap<(StateKey, u64), (SimState, f64)> = BTreeMap::new();
    frontier.insert((StateKey::of(&start), 0), (start, 1.0));
    let mut emissions: BTreeMap<EmissionKey, f64> = BTreeMap::new();
    let mut arrivals: BTreeMap<StateKey, SimState> = BTreeMap::new();

    while !frontier.is_empty() {
        if frontier.len() > frontier_cap {
            return Err(Error::CapExceeded {
                found: frontier.len(),
                cap: frontier_cap,
            });
        }
        let mut next_frontier: BTreeMap<(StateKey, u64), (SimState, f64)> = BTreeMap::new();
        for (_, (branch, prob)) in frontier {
            let mut flowed = branch;
            let operated = sim::flow_phase(line, &mut flowed);
            let eligible = sim::degrade_eligible(&flowed, &operated);
            // Machines with rate 0 or 1 are deterministic; only the rest
            // branch the expansion.
            let uncertain: Vec<usize> = (0..eligible.len())
                .filter(|&slot| {
                    let j = eligible[slot];
                    let d = line.machines[j].degradation_rate;
                    d > 0.0 && d < 1.0 && flowed.machines[j].condition < line.n
                })
                .collect();

            for mask in 0..(1u64 << uncertain.len()) {
                let mut outcomes = vec![false; eligible.len()];
                let mut p_combo = 1.0;
                for (bit, &slot) in uncertain.iter().enumerate() {
                    let d = line.machines[eligible[slot]].degradation_rate;
                    if mask & (1 << bit) != 0 {
                        outcomes[slot] = true;
                        p_combo *= d;
                    } else {
                        p_combo *= 1.0 - d;
                    }
                }
                for (slot, &j) in eligible.iter().enumerate() {
                    if line.machines[j].degradation_rate >= 1.0
                        && flowed.machines[j].condition < line.n
                    {
                        outcomes[slot] = true;
                    }
                }

                let mut s2 = flowed.clone();
                sim::degrade_phase(line, &mut s2, &eligible, &mut ScriptedDegrade(&outcomes, 0));
                sim::finish_tick(&mut s2);
                let p2 = prob * p_combo;
                let pp = s2.produced_parts;
                let broken = s2.machines.iter().any(|m| m.condition == line.n);

                if s2.clock >= line.t_sim {
                    *emissions.entry((None, s2.clock, pp, broken)).or_insert(0.0) += p2;
                } else if s2.clock >= duration && s2.at_decision_point(line) {
                    let key = StateKey::of(&s2);
                    arrivals.entry(key.clone()).or_insert_with(|| s2.clone());
                    *emissions
                        .entry((Some(key), s2.clock, pp, broken))
                        .or_insert(0.0) += p2;
                } else {
                    let entry = next_frontier
                        .entry((StateKey::of(&s2), pp))
                        .or_insert((s2, 0.0));
                    entry.1 += p2;
                }
            }
        }
        frontier = next_frontier;
    }

    Ok(Expansion {
        emissions,
        arrivals,
        kind,
    })
}

fn emission_reward(
    reward: &RewardConfig,
    action: Action,
    kind: Option<MaintenanceKind>,
    elapsed: u64,
    pp_delta: u64,
    breakdown: bool,
) -> Result<f64> {
    match reward.reward_mode {
        RewardMode::R1 => Ok(env::reward_r1(0, pp_delta)),
        RewardMode::R2 => {
            let scenario = match action {
                Action::Idle if breakdown => Scenario::B,
                Action::Idle => Scenario::A,
                Action::Maintain(_) => Scenario::C,
            };
            env::reward_r2(scenario, kind, elapsed, reward)
        }
    }
}

/// Enumerate the decision-point MDP reachable from a fresh line, refusing
/// instances whose state count exceeds `cap`.
pub fn enumerate_mdp(
    line: &LineConfig,
    reward: &RewardConfig,
    cap: usize,
) -> Result<EnumeratedMdp> {
    line.validate()?;
    reward.validate()?;

    // Cheap a-priori gate: the condition/buffer product bounds the state
    // space; instances past the cap are refused before any expansion work.
    // Runtime guards below still protect against micro-state blowup.
    let bound = line.machines.iter().fold(1.0f64, |acc, m| {
        acc * ((line.n + 1) as f64 * m.buffer_capacity as f64)
    });
    if bound > cap as f64 {
        return Err(Error::CapExceeded {
            found: bound.min(usize::MAX as f64) as usize,
            cap,
        });
    }

    let actions = line.machine_count() + 1;
    let mut ids: BTreeMap<StateKey, usize> = BTreeMap::new();
    let mut keys: Vec<StateKey> = Vec::new();
    let mut reps: Vec<SimState> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    fn intern(
        st: &SimState,
        ids: &mut BTreeMap<StateKey, usize>,
        keys: &mut Vec<StateKey>,
        reps: &mut Vec<SimState>,
        queue: &mut VecDeque<usize>,
    ) -> usize {
        let key = StateKey::of(st);
        if let Some(&id) = ids.get(&key) {
            return id;
        }
        let id = keys.len();
        ids.insert(key.clone(), id);
        keys.push(key);
        reps.push(normalize_rep(st));
        queue.push_back(id);
        id
    }

    // Seed with every state reachable at the first decision point.
    let init = normalize_rep(&sim::init_line(line)?);
    let first = expand(line, &init, None, cap)?;
    for st in first.arrivals.values() {
        intern(st, &mut ids, &mut keys, &mut reps, &mut queue);
    }

    let mut transitions: Vec<Vec<Vec<MdpTransition>>> = Vec::new();
    while let Some(id) = queue.pop_front() {
        if keys.len() > cap {
            return Err(Error::CapExceeded {
                found: keys.len(),
                cap,
            });
        }
        let rep = reps[id].clone();
        let mut rows = Vec::with_capacity(actions);
        for code in 0..actions {
            let action = Action::from_code(code, line.machine_count())?;
            let exp = expand(line, &rep, Some(action), cap)?;
            for st in exp.arrivals.values() {
                intern(st, &mut ids, &mut keys, &mut reps, &mut queue);
            }
            let mut row = Vec::with_capacity(exp.emissions.len());
            for ((next_key, elapsed, pp, broken), prob) in &exp.emissions {
                let next = next_key
                    .as_ref()
                    .map(|k| *ids.get(k).expect("arrival state interned"));
                row.push(MdpTransition {
                    next,
                    elapsed: *elapsed,
                    prob: *prob,
                    reward: emission_reward(reward, action, exp.kind, *elapsed, *pp, *broken)?,
                });
            }
            rows.push(row);
        }
        if transitions.len() <= id {
            transitions.resize_with(id + 1, Vec::new);
        }
        transitions[id] = rows;
    }

    let observations = reps.iter().map(|st| env::observe(line, st)).collect();
    Ok(EnumeratedMdp {
        mdp: TabularMdp {
            actions,
            observations,
            transitions,
        },
        keys,
        reps,
    })
}

/// How future value is discounted across a decision transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscountMode {
    /// One factor of gamma per decision, matching the DDQN objective.
    PerDecision,
    /// `gamma^elapsed`, weighting transitions by their simulated duration.
    PerTime,
}

#[derive(Debug, Clone)]
pub struct ValueIterationResult {
    pub q: Vec<Vec<f64>>,
    pub policy: Vec<usize>,
    pub sweeps: usize,
    /// Sup-norm change per sweep; contraction diagnostics.
    pub deltas: Vec<f64>,
}

/// Bellman optimality iteration to sup-norm tolerance `tol`.
pub fn value_iteration(
    mdp: &TabularMdp,
    gamma: f64,
    tol: f64,
    max_sweeps: usize,
    mode: DiscountMode,
) -> Result<ValueIterationResult> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Contract(
            "value iteration needs 0 <= gamma < 1".into(),
        ));
    }
    let n = mdp.state_count();
    let mut values = vec![0.0; n];
    let mut q = vec![vec![0.0; mdp.actions]; n];
    let mut deltas = Vec::new();

    for sweep in 0..max_sweeps {
        let mut delta: f64 = 0.0;
        let snapshot = values.clone();
        for s in 0..n {
            for a in 0..mdp.actions {
                let mut acc = 0.0;
                for tr in &mdp.transitions[s][a] {
                    let future = match tr.next {
                        None => 0.0,
                        Some(ns) => {
                            let g = match mode {
                                DiscountMode::PerDecision => gamma,
                                DiscountMode::PerTime => gamma.powi(tr.elapsed as i32),
                            };
                            g * snapshot[ns]
                        }
                    };
                    acc += tr.prob * (tr.reward + future);
                }
                q[s][a] = acc;
            }
            let best = q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - values[s]).abs());
            values[s] = best;
        }
        deltas.push(delta);
        if delta < tol {
            let policy = (0..n).map(|s| crate::ddqn::argmax(&q[s])).collect();
            return Ok(ValueIterationResult {
                q,
                policy,
                sweeps: sweep + 1,
                deltas,
            });
        }
    }
    Err(Error::NoConvergence(max_sweeps))
}

/// Fraction of states where `select`'s action is optimal under the oracle
/// Q-values (within `tol` of the best value). Empty MDPs count as full
/// agreement.
pub fn compare_policies(
    mdp: &TabularMdp,
    oracle_q: &[Vec<f64>],
    tol: f64,
    mut select: impl FnMut(&[f64]) -> usize,
) -> f64 {
    let n = mdp.state_count();
    if n == 0 {
        return 1.0;
    }
    let mut agree = 0usize;
    for s in 0..n {
        let a = select(&mdp.observations[s]);
        let best = oracle_q[s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if oracle_q[s][a] >= best - tol {
            agree += 1;
        }
    }
    agree as f64 / n as f64
}

/// Q-table CSV: `state_id,action,q`.
pub fn q_table_csv(q: &[Vec<f64>]) -> String {
    let mut out = String::from("state_id,action,q\n");
    for (s, row) in q.iter().enumerate() {
        for (a, v) in row.iter().enumerate() {
            out.push_str(&format!("{s},{a},{v}\n"));
        }
    }
    out
}

/// Greedy-policy CSV: `state_id,action,conditions`.
pub fn policy_csv(enumerated: &EnumeratedMdp, policy: &[usize]) -> String {
    let mut out = String::from("state_id,action,conditions\n");
    for (s, &a) in policy.iter().enumerate() {
        out.push_str(&format!(
            "{s},{a},{}\n",
            enumerated.keys[s].conditions_label()
        ));
    }
    out
}
