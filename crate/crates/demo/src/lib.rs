//! wasm-bindgen surface for the browser demo. Three operations, all pure
//! compute over a JSON config: trace one seeded episode, sweep the FIFO
//! threshold, and evaluate a policy over many episodes. Results come back
//! as JSON strings; the page does the drawing.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use cbmline_core::config::RunConfig;
use cbmline_core::eval::{per_machine_cbm_means, run_episodes, run_traced_episode, summarize};
use cbmline_core::policy::{sweep_threshold, FifoPolicy, Policy, RandomPolicy};
use cbmline_core::sim::MaintenanceKind;

fn err_js(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn parse_policy(spec: &str) -> Result<Box<dyn Policy>, JsValue> {
    if spec == "random" {
        return Ok(Box::new(RandomPolicy::new()));
    }
    if let Some(rest) = spec.strip_prefix("fifo:") {
        let threshold: u32 = rest
            .parse()
            .map_err(|_| err_js(format!("bad fifo threshold in `{spec}`")))?;
        return Ok(Box::new(FifoPolicy::new(threshold)));
    }
    Err(err_js(format!(
        "unknown policy `{spec}` (use `random` or `fifo:<n_c>`)"
    )))
}

#[derive(Serialize)]
struct TraceEvent {
    clock: u64,
    machine: usize,
    kind: &'static str,
    duration: u64,
}

#[derive(Serialize)]
struct EpisodeTraceOut {
    t_sim: u64,
    n: u32,
    machine_count: usize,
    buffer_capacities: Vec<u32>,
    conditions: Vec<Vec<u32>>,
    buffers: Vec<Vec<u32>>,
    produced: Vec<u64>,
    events: Vec<TraceEvent>,
    total_parts: u64,
    maintenance_cost: f64,
    cbm_count: u32,
    cm_count: u32,
    idle_count: u32,
}

/// Run one seeded episode under `policy` (`random` or `fifo:<n_c>`) and
/// return the per-tick condition/buffer trace plus maintenance events.
#[wasm_bindgen]
pub fn run_trace(config_json: &str, policy: &str, seed: u64) -> Result<String, JsValue> {
    let cfg = RunConfig::from_json(config_json).map_err(err_js)?;
    let mut pol = parse_policy(policy)?;
    let trace = run_traced_episode(&cfg.line, &cfg.reward, pol.as_mut(), seed).map_err(err_js)?;

    let out = EpisodeTraceOut {
        t_sim: cfg.line.t_sim,
        n: cfg.line.n,
        machine_count: cfg.line.machine_count(),
        buffer_capacities: cfg
            .line
            .machines
            .iter()
            .map(|m| m.buffer_capacity)
            .collect(),
        conditions: trace.conditions,
        buffers: trace.buffers,
        produced: trace.produced,
        events: trace
            .events
            .iter()
            .map(|&(clock, machine, kind)| TraceEvent {
                clock,
                machine,
                kind: match kind {
                    MaintenanceKind::Cbm => "CBM",
                    MaintenanceKind::Cm => "CM",
                },
                duration: match kind {
                    MaintenanceKind::Cbm => cfg.line.t_cbm,
                    MaintenanceKind::Cm => cfg.line.t_cm,
                },
            })
            .collect(),
        total_parts: trace.metrics.produced_parts,
        maintenance_cost: trace.metrics.maintenance_cost,
        cbm_count: trace.metrics.cbm_count,
        cm_count: trace.metrics.cm_count,
        idle_count: trace.metrics.idle_count,
    };
    serde_json::to_string(&out).map_err(err_js)
}

#[derive(Serialize)]
struct SweepRowOut {
    threshold: u32,
    mean_parts: f64,
    mean_cost: f64,
    mean_cbm: f64,
    mean_cm: f64,
}

#[derive(Serialize)]
struct SweepOut {
    rows: Vec<SweepRowOut>,
    best_by_parts: u32,
    best_by_cost: u32,
    rho_max: f64,
}

/// Evaluate FIFO at every threshold in `{0..n}` over `episodes` seeded
/// episodes per value.
#[wasm_bindgen]
pub fn sweep_fifo_thresholds(
    config_json: &str,
    episodes: u32,
    seed: u64,
) -> Result<String, JsValue> {
    let cfg = RunConfig::from_json(config_json).map_err(err_js)?;
    let sweep = sweep_threshold(&cfg.line, &cfg.reward, episodes, seed, 1).map_err(err_js)?;
    let out = SweepOut {
        rows: sweep
            .rows
            .iter()
            .map(|r| SweepRowOut {
                threshold: r.threshold,
                mean_parts: r.mean_parts,
                mean_cost: r.mean_cost,
                mean_cbm: r.mean_cbm,
                mean_cm: r.mean_cm,
            })
            .collect(),
        best_by_parts: sweep.best_by_parts,
        best_by_cost: sweep.best_by_cost,
        rho_max: cfg.line.rho_max(),
    };
    serde_json::to_string(&out).map_err(err_js)
}

#[derive(Serialize)]
struct EvaluateOut {
    policy: String,
    episodes: u32,
    mean_parts: f64,
    mean_cost: f64,
    production_rate: f64,
    mean_cbm: f64,
    mean_cm: f64,
    mean_idle: f64,
    per_machine_cbm: Vec<f64>,
    parts_per_episode: Vec<u64>,
}

/// Evaluate `random` or `fifo:<n_c>` over seeded episodes and return the
/// summary row plus per-episode parts for a scatter plot.
#[wasm_bindgen]
pub fn evaluate_policy(
    config_json: &str,
    policy: &str,
    episodes: u32,
    seed: u64,
) -> Result<String, JsValue> {
    let cfg = RunConfig::from_json(config_json).map_err(err_js)?;
    let metrics = if policy == "random" {
        run_episodes(&cfg.line, &cfg.reward, &RandomPolicy::new(), episodes, seed, 1)
    } else if let Some(rest) = policy.strip_prefix("fifo:") {
        let threshold: u32 = rest
            .parse()
            .map_err(|_| err_js(format!("bad fifo threshold in `{policy}`")))?;
        run_episodes(
            &cfg.line,
            &cfg.reward,
            &FifoPolicy::new(threshold),
            episodes,
            seed,
            1,
        )
    } else {
        return Err(err_js(format!("unknown policy `{policy}`")));
    }
    .map_err(err_js)?;

    let table = summarize(&cfg.line, &cfg.reward, &[(policy.to_string(), metrics.clone())])
        .map_err(err_js)?;
    let row = &table.rows[0];
    let out = EvaluateOut {
        policy: policy.to_string(),
        episodes,
        mean_parts: row.mean_parts,
        mean_cost: row.mean_cost,
        production_rate: row.production_rate,
        mean_cbm: row.mean_cbm,
        mean_cm: row.mean_cm,
        mean_idle: row.mean_idle,
        per_machine_cbm: per_machine_cbm_means(&metrics),
        parts_per_episode: metrics.iter().map(|m| m.produced_parts).collect(),
    };
    serde_json::to_string(&out).map_err(err_js)
}
