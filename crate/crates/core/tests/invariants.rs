//! Property tests over random line configurations and action sequences.

use proptest::prelude::*;

use cbmline_core::config::{LineConfig, MachineConfig, RewardConfig, RewardMode};
use cbmline_core::env::{Action, MaintEnv, Scenario};
use cbmline_core::sim;

fn arb_line() -> impl Strategy<Value = LineConfig> {
    (
        prop::collection::vec((1u32..4, 0.0f64..0.6, 1u32..4), 1..4),
        2u32..6,
        1u64..400,
        any::<u64>(),
    )
        .prop_map(|(machines, n, t_sim, seed)| LineConfig {
            machines: machines
                .into_iter()
                .map(|(p, d, b)| MachineConfig {
                    process_time: p,
                    degradation_rate: d,
                    buffer_capacity: b,
                })
                .collect(),
            n,
            n_c: 0,
            t_cbm: 3,
            t_cm: 7,
            t_idle: 1,
            t_sim,
            seed,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Parts are conserved at every tick: source pulls = produced + buffered
    /// + held; buffers stay within capacity; conditions stay in range; at
    /// most one machine is ever under maintenance.
    #[test]
    fn conservation_and_bounds(line in arb_line(), actions in prop::collection::vec(0usize..4, 0..200)) {
        let mut st = sim::init_line(&line).unwrap();
        let mut action_iter = actions.into_iter();
        let mut target = 0u64;
        while !st.is_terminal(&line) {
            sim::tick(&line, &mut st);

            prop_assert_eq!(
                st.pulled_from_source,
                st.produced_parts + st.parts_in_buffers() + st.parts_in_machines()
            );
            for (j, &level) in st.buffers.iter().enumerate() {
                prop_assert!(level <= line.machines[j].buffer_capacity);
            }
            for m in &st.machines {
                prop_assert!(m.condition <= line.n);
            }
            let under_maintenance = st
                .machines
                .iter()
                .filter(|m| m.status == sim::MachineStatus::UnderMaintenance)
                .count();
            prop_assert!(under_maintenance <= 1);
            prop_assert!(st.produced_parts as f64 <= line.rho_max() + 1e-9);

            if st.clock >= target && st.at_decision_point(&line) {
                let code = action_iter.next().unwrap_or(0) % (line.machine_count() + 1);
                target = if code == 0 {
                    st.clock + line.t_idle
                } else {
                    match sim::apply_maintenance(&line, &mut st, code - 1).unwrap() {
                        sim::MaintenanceKind::Cbm => st.clock + line.t_cbm,
                        sim::MaintenanceKind::Cm => st.clock + line.t_cm,
                    }
                };
            }
        }
    }

    /// The environment classifies every step into exactly one scenario and
    /// the reward signs match the mode.
    #[test]
    fn scenario_classification_and_reward_signs(
        line in arb_line(),
        mode in prop::sample::select(vec![RewardMode::R1, RewardMode::R2]),
        actions in prop::collection::vec(0usize..4, 0..64),
    ) {
        let reward = RewardConfig { reward_mode: mode, ..RewardConfig::default() };
        let mut env = match MaintEnv::reset(&line, &reward, line.seed) {
            Ok(env) => env,
            Err(_) => return Ok(()),
        };
        for code in actions {
            if env.is_terminal() {
                break;
            }
            let action = Action::from_code(code % (line.machine_count() + 1), line.machine_count()).unwrap();
            let tr = env.step(action).unwrap();
            match action {
                Action::Idle => prop_assert!(matches!(tr.scenario, Some(Scenario::A) | Some(Scenario::B))),
                Action::Maintain(_) => prop_assert_eq!(tr.scenario, Some(Scenario::C)),
            }
            match mode {
                RewardMode::R1 => prop_assert!(tr.reward >= 0.0),
                RewardMode::R2 => prop_assert!(tr.reward <= 0.0),
            }
            prop_assert!(tr.elapsed >= 1);
            for x in tr.next_obs.iter() {
                prop_assert!((0.0..=1.0).contains(x));
            }
        }
    }

    /// Observations decode back to the integer simulator state.
    #[test]
    fn observation_round_trip(line in arb_line(), steps in 0usize..32) {
        let reward = RewardConfig::default();
        let mut env = match MaintEnv::reset(&line, &reward, line.seed ^ 1) {
            Ok(env) => env,
            Err(_) => return Ok(()),
        };
        for s in 0..steps {
            if env.is_terminal() {
                break;
            }
            let obs = env.observation();
            let i = line.machine_count();
            for j in 0..i {
                let cs = (obs[j] * line.n as f64).round() as u32;
                prop_assert_eq!(cs, env.state().machines[j].condition);
                let level = (obs[i + j] * line.machines[j].buffer_capacity as f64).round() as u32;
                prop_assert_eq!(level, env.state().buffers[j]);
            }
            let action = Action::from_code(s % (i + 1), i).unwrap();
            env.step(action).unwrap();
        }
    }
}
