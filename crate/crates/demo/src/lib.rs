//! Browser demo over fixed scenario snapshots. Every entry point returns a
//! JSON string so the page needs no bindings beyond `wasm-bindgen`.

use std::sync::OnceLock;

use fsor_core::formulation::{build_instance, BuildOptions};
use fsor_core::fsor::{classify_green_but_far, enumerate_fsor, extract_iis};
use fsor_core::milp::{solve, SolveStatus};
use fsor_core::model::{LatencyBudget, Problem, WorkloadClass};
use fsor_core::scenarios::{build_scenario, peak_stress_cycle, snapshot_at, ScenarioId, ScenarioSpec};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// The browser has no clock for budgets; instances here are small.
const BUDGET_SECS: f64 = 30.0;
/// Feasible-region universe: two workloads per class.
const PER_CLASS: usize = 2;

struct Fixture {
    problem: Problem,
    positions_km: Vec<(f64, f64)>,
    zone_of: Vec<String>,
}

fn fixture(id: ScenarioId, stressed: bool) -> Fixture {
    let spec = ScenarioSpec::default_for(id);
    let seed = spec.seeds[0];
    let built = build_scenario(&spec, seed).expect("bundled scenario builds");
    let cycle = if stressed { peak_stress_cycle(&spec).unwrap_or(0) } else { 0 };
    let problem = snapshot_at(&spec, &built, cycle).expect("bundled scenario replays");
    Fixture {
        problem,
        positions_km: built.positions_km,
        zone_of: built.zone_of,
    }
}

fn remote() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| fixture(ScenarioId::B, false))
}

fn arid() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| fixture(ScenarioId::C, true))
}

fn sites_json(f: &Fixture) -> Value {
    let s = &f.problem.snapshot;
    Value::Array(
        s.sites
            .iter()
            .zip(&f.positions_km)
            .zip(&f.zone_of)
            .map(|((site, p), zone)| {
                json!({
                    "id": site.id,
                    "zone": zone,
                    "x_km": p.0,
                    "y_km": p.1,
                    "carbon": site.carbon_intensity,
                    "ceiling": site.carbon_ceiling,
                })
            })
            .collect(),
    )
}

/// Partition of the remote-renewables scenario for its first inference
/// workload under a one-way budget of `lambda_ms`.
pub fn green_but_far_json(lambda_ms: f64) -> Result<String, String> {
    if !(lambda_ms > 0.0) {
        return Err(format!("latency budget must be positive, got {lambda_ms}"));
    }
    let f = remote();
    let mut w = f
        .problem
        .workloads
        .iter()
        .find(|w| w.class == WorkloadClass::Inference)
        .cloned()
        .ok_or("scenario has no inference workload")?;
    w.latency_slo = LatencyBudget::Bounded(lambda_ms);
    let part = classify_green_but_far(&f.problem.snapshot, &w).map_err(|e| e.to_string())?;
    Ok(json!({
        "workload": w.id,
        "endpoint": w.dest,
        "radius_km": part.radius_km,
        "interior": part.interior,
        "green_but_far": part.green_but_far,
        "ineligible": part.ineligible,
        "sites": sites_json(f),
    })
    .to_string())
}

/// Optimal placement of the remote-renewables snapshot with every site's
/// carbon ceiling set to `ceiling`; a certificate when none exists.
pub fn solve_json(alpha: f64, ceiling: f64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    if !(ceiling > 0.0) {
        return Err(format!("carbon ceiling must be positive, got {ceiling}"));
    }
    let f = remote();
    let mut snap = f.problem.snapshot.clone();
    for s in &mut snap.sites {
        s.carbon_ceiling = ceiling;
    }
    let workloads = &f.problem.workloads;
    let options = BuildOptions::with_alpha(alpha);
    let inst = build_instance(&snap, workloads, &options).map_err(|e| e.to_string())?;
    let out = solve(&inst, BUDGET_SECS).map_err(|e| e.to_string())?;
    let mut body = match (out.status, &out.placement) {
        (SolveStatus::Optimal, Some(p)) => json!({
            "status": "Optimal",
            "objective": p.objective,
            "carbon_gph": p.carbon_rate,
            "water_lph": p.water_rate,
            "assignment": p.assignment,
            "nodes": out.nodes,
        }),
        (SolveStatus::Infeasible, _) => {
            let cert = extract_iis(&snap, workloads, &options, BUDGET_SECS).map_err(|e| e.to_string())?;
            json!({ "status": "Infeasible", "diagnosis": cert.diagnosis })
        }
        (status, _) => json!({ "status": format!("{status:?}") }),
    };
    body["sites"] = sites_json(f);
    Ok(body.to_string())
}

/// Maximal feasible sets of the water-stressed snapshot with every permit
/// scaled by `permit_factor`.
pub fn fsor_json(permit_factor: f64) -> Result<String, String> {
    if !(permit_factor > 0.0) {
        return Err(format!("permit factor must be positive, got {permit_factor}"));
    }
    let f = arid();
    let mut snap = f.problem.snapshot.clone();
    for s in &mut snap.sites {
        s.water_permit *= permit_factor;
    }
    let mut universe = Vec::new();
    for class in [WorkloadClass::Training, WorkloadClass::Inference, WorkloadClass::Batch] {
        universe.extend(f.problem.workloads.iter().filter(|w| w.class == class).take(PER_CLASS).cloned());
    }
    let report = enumerate_fsor(&snap, &universe, &BuildOptions::default(), BUDGET_SECS).map_err(|e| e.to_string())?;
    let size = 1usize << universe.len();
    let members = (0..size)
        .filter(|mask| {
            let set: Vec<_> = (0..universe.len())
                .filter(|k| mask >> k & 1 == 1)
                .map(|k| universe[k].id.clone())
                .collect();
            report.contains(&set)
        })
        .count();
    Ok(json!({
        "universe": universe.iter().map(|w| &w.id).collect::<Vec<_>>(),
        "maximal": report.maximal,
        "members": members,
        "subsets": size,
        "solves": report.solves,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn green_but_far(lambda_ms: f64) -> Result<String, JsError> {
    green_but_far_json(lambda_ms).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn place(alpha: f64, ceiling: f64) -> Result<String, JsError> {
    solve_json(alpha, ceiling).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn region(permit_factor: f64) -> Result<String, JsError> {
    fsor_json(permit_factor).map_err(|e| JsError::new(&e))
}
