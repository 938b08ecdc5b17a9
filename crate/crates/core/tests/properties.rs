mod common;

use std::collections::BTreeMap;

use common::{oracle_instance, random_lp, region_instance};
use fsor_core::bench::{random_instance, InstanceParams};
use fsor_core::formulation::{
    apply_carbon_gate, build_instance, effective_latency_budget, transfer_delay_ms, BuildOptions, NormalizationWindow,
};
use fsor_core::fsor::fsor_contains;
use fsor_core::lp::{solve_lp, LpStatus, FEASIBILITY_TOL};
use fsor_core::milp::{solve, SolveStatus};
use fsor_core::model::{
    validate_snapshot, water_draw_lph, Confidence, LatencyBudget, ParamKey, SiteParam, TelemetrySnapshot, Workload,
};
use fsor_core::routing::{
    enumerate_admissible_paths, latency_radius, net_outflow, path_delay, paths_to_flows, shortest_delays, Graph,
};
use fsor_core::scenarios::{build_scenario, ScenarioId, ScenarioSpec};
use fsor_core::telemetry::{ingest, FreshnessPolicy, RawReading, StreamGenerator, StreamSpec, HOUR};
use fsor_core::twin::{ControlLoop, CycleOutcome, LoopConfig};
use fsor_core::verify::{verify_placement, VerifyContext};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (TelemetrySnapshot, Vec<Workload>)> {
    (2usize..=6, 1usize..=8, any::<u64>()).prop_map(|(n, m, seed)| random_instance(n, m, seed, &InstanceParams::default()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn snapshot_json_round_trip((snap, workloads) in instance()) {
        let text = serde_json::to_string(&snap).unwrap();
        let back: TelemetrySnapshot = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &snap);
        let text = serde_json::to_string(&workloads).unwrap();
        let back: Vec<Workload> = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, workloads);
    }

    #[test]
    fn generated_instances_are_valid((snap, workloads) in instance()) {
        prop_assert_eq!(validate_snapshot(&snap, &workloads), Vec::<String>::new());
    }

    /// L/kWh times kW is L/h, the permit unit.
    #[test]
    fn water_draw_is_dimensionally_closed(omega in 0.0f64..5.0, p in 0.0f64..2000.0) {
        prop_assert!((water_draw_lph(omega, p) - omega * p).abs() <= 1e-9 * (omega * p).max(1.0));
    }

    #[test]
    fn admissible_paths_are_simple_and_within_budget(
        (snap, _) in instance(),
        budget in 0.5f64..20.0,
        hops in 1usize..=4,
    ) {
        let g = Graph::from_snapshot(&snap);
        let shortest = shortest_delays(&g);
        for s in 0..g.nodes() {
            for t in 0..g.nodes() {
                for p in enumerate_admissible_paths(&g, s, t, LatencyBudget::Bounded(budget), hops) {
                    let d = path_delay(&p.nodes, &g).unwrap();
                    prop_assert!(d <= budget + 1e-9);
                    prop_assert!((d - p.delay).abs() < 1e-9);
                    prop_assert!(p.hops() <= hops);
                    let mut nodes = p.nodes.clone();
                    nodes.sort_unstable();
                    nodes.dedup();
                    prop_assert_eq!(nodes.len(), p.nodes.len());
                    prop_assert!(shortest[s][t] <= d + 1e-9);
                }
            }
        }
    }

    /// Out minus in is +demand at the source, -demand at the sink, 0 elsewhere.
    #[test]
    fn path_flows_follow_net_outflow_convention(
        (snap, _) in instance(),
        weights in prop::collection::vec(0.0f64..10.0, 1..6),
        ends in (0usize..6, 0usize..6),
    ) {
        let g = Graph::from_snapshot(&snap);
        let (s, t) = (ends.0 % g.nodes(), ends.1 % g.nodes());
        prop_assume!(s != t);
        let paths = enumerate_admissible_paths(&g, s, t, LatencyBudget::Unbounded, 3);
        let weighted: Vec<_> = paths.into_iter().zip(weights).collect();
        let demand: f64 = weighted.iter().map(|(_, w)| w).sum();
        let flows = paths_to_flows(&weighted, &g).unwrap();
        prop_assert!(flows.iter().all(|&f| f >= 0.0));
        for (v, net) in net_outflow(&flows, &g).into_iter().enumerate() {
            let want = if v == s { demand } else if v == t { -demand } else { 0.0 };
            prop_assert!((net - want).abs() < 1e-9, "node {} net {} want {}", v, net, want);
        }
    }

    #[test]
    fn radius_is_linear_in_budget(a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let r = |ms| latency_radius(LatencyBudget::Bounded(ms)).unwrap();
        prop_assert!((r(a + b) - r(a) - r(b)).abs() < 1e-6);
        prop_assert!(latency_radius(LatencyBudget::Unbounded).is_none());
    }

    #[test]
    fn migration_budget_subtracts_overheads(
        slo in 1.0f64..200.0,
        state in 0.0f64..5.0,
        rh in 0.0f64..50.0,
        (snap, mut workloads) in instance(),
    ) {
        let w = &mut workloads[0];
        w.portable = true;
        w.latency_slo = LatencyBudget::Bounded(slo);
        w.state_size = state;
        w.rehydration = rh;
        w.rehydration_overrides.clear();
        let (a, b) = (snap.sites[0].id.clone(), snap.sites[1].id.clone());
        let link = snap.link(&a, &b).unwrap();
        let overhead = if state == 0.0 { 0.0 } else { transfer_delay_ms(state, link.residual_capacity()) } + rh;
        let got = effective_latency_budget(w, &a, &b, &snap).unwrap();
        match got {
            Some(LatencyBudget::Bounded(ms)) => prop_assert!((ms - (slo - overhead)).abs() < 1e-9 && ms <= slo),
            None => prop_assert!(slo - overhead <= 0.0),
            Some(LatencyBudget::Unbounded) => prop_assert!(false, "bounded budget became unbounded"),
        }
        // Staying put costs nothing.
        prop_assert_eq!(effective_latency_budget(w, &a, &a, &snap).unwrap(), Some(LatencyBudget::Bounded(slo)));
    }

    #[test]
    fn normalized_coefficients_lie_in_unit_interval((snap, _) in instance(), probe in 0.0f64..1000.0) {
        let w = NormalizationWindow::from_snapshot(&snap);
        prop_assert!(w.carbon_max >= w.carbon_min && w.water_max >= w.water_min);
        for s in &snap.sites {
            let c = w.carbon(s.effective_carbon_intensity());
            prop_assert!((0.0..=1.0).contains(&c));
        }
        prop_assert!((0.0..=1.0).contains(&w.carbon(probe)));
        let flat = NormalizationWindow { carbon_min: 5.0, carbon_max: 5.0, water_min: 1.0, water_max: 1.0 };
        prop_assert_eq!(flat.carbon(probe), 0.0);
    }

    #[test]
    fn carbon_gate_fixes_exactly_the_hot_sites((snap, workloads) in instance()) {
        let inst = build_instance(&snap, &workloads, &BuildOptions::default()).unwrap();
        let gated: Vec<_> = apply_carbon_gate(&snap, &workloads);
        for (i, s) in snap.sites.iter().enumerate() {
            let hot = s.effective_carbon_intensity() > s.carbon_ceiling;
            for k in 0..workloads.len() {
                prop_assert_eq!(gated.iter().any(|g| g.site == i && g.workload == k), hot);
                if hot {
                    prop_assert!(inst.binary_of[k][i].is_none());
                }
            }
        }
        let n = snap.sites.len();
        prop_assert!(inst.counts.binaries <= n * workloads.len());
        prop_assert_eq!(inst.counts.continuous_nominal, n * (n - 1) * workloads.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, ..ProptestConfig::default() })]

    #[test]
    fn lp_optimal_results_are_feasible_and_deterministic(seed in any::<u64>()) {
        let lp = random_lp(seed);
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        // Infeasible results carry a NaN objective; compare renderings.
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
        prop_assert!(matches!(a.status, LpStatus::Optimal | LpStatus::Infeasible));
        if a.status == LpStatus::Optimal {
            let (row, bound) = lp.max_violation(&a.x);
            prop_assert!(row <= FEASIBILITY_TOL && bound <= 1e-9, "row {} bound {}", row, bound);
            let obj: f64 = lp.objective.iter().zip(&a.x).map(|(c, x)| c * x).sum();
            prop_assert!((obj - a.objective).abs() < 1e-9);
        } else {
            prop_assert!(a.infeasibility > 0.0);
        }
    }

    #[test]
    fn scaling_the_objective_scales_the_optimum(seed in any::<u64>(), k in 0.1f64..10.0) {
        let lp = random_lp(seed);
        let mut scaled = lp.clone();
        scaled.objective.iter_mut().for_each(|c| *c *= k);
        let (a, b) = (solve_lp(&lp).unwrap(), solve_lp(&scaled).unwrap());
        prop_assert_eq!(a.status, b.status);
        if a.status == LpStatus::Optimal {
            prop_assert!((a.objective * k - b.objective).abs() <= 1e-6 * b.objective.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    /// More work never lowers the optimum and never restores feasibility.
    #[test]
    fn adding_a_workload_never_helps(seed in any::<u64>()) {
        let (snap, workloads, options) = oracle_instance(seed);
        prop_assume!(workloads.len() >= 2);
        let fewer = &workloads[..workloads.len() - 1];
        let all = solve(&build_instance(&snap, &workloads, &options).unwrap(), 60.0).unwrap();
        let part = solve(&build_instance(&snap, fewer, &options).unwrap(), 60.0).unwrap();
        if part.status == SolveStatus::Infeasible {
            prop_assert_eq!(all.status, SolveStatus::Infeasible);
        }
        if let (Some(a), Some(p)) = (all.objective(), part.objective()) {
            prop_assert!(a >= p - 1e-9, "{} < {}", a, p);
        }
    }

    #[test]
    fn optimal_solutions_verify_with_zero_gap(seed in any::<u64>()) {
        let (snap, workloads, options) = oracle_instance(seed);
        let out = solve(&build_instance(&snap, &workloads, &options).unwrap(), 60.0).unwrap();
        if out.status == SolveStatus::Optimal {
            prop_assert!(out.gap <= 1e-9);
            prop_assert!(out.bound <= out.objective().unwrap() + 1e-9);
            let p = out.placement.unwrap();
            prop_assert!(verify_placement(&snap, &workloads, &p, &VerifyContext::default()).is_empty());
        } else {
            prop_assert!(out.placement.is_none());
        }
    }

    #[test]
    fn feasible_sets_stay_feasible_without_any_member(seed in any::<u64>(), mask in any::<u8>()) {
        let (snap, workloads) = region_instance(seed);
        let options = BuildOptions::default();
        let pick = |m: u8| -> Vec<Workload> {
            workloads.iter().enumerate().filter(|(k, _)| m >> k & 1 == 1).map(|(_, w)| w.clone()).collect()
        };
        let set = pick(mask);
        prop_assume!(!set.is_empty());
        if fsor_contains(&snap, &set, &options, 60.0).unwrap().feasible {
            for k in 0..workloads.len() {
                if mask >> k & 1 == 1 {
                    let sub = pick(mask & !(1 << k));
                    prop_assert!(sub.is_empty() || fsor_contains(&snap, &sub, &options, 60.0).unwrap().feasible);
                }
            }
        }
    }
}

fn readings(seed: u64, hours: i64) -> (TelemetrySnapshot, Vec<RawReading>) {
    let (snap, _) = random_instance(3, 2, seed, &InstanceParams::default());
    let mut spec = StreamSpec::constant(snap.clone());
    spec.utilization_noise = 0.05;
    let mut g = StreamGenerator::new(spec, 0, 300, seed);
    let mut out = Vec::new();
    while g.peek_time() < hours * HOUR {
        out.extend(g.next_batch().1);
    }
    (snap, out)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn ingest_is_deterministic_and_tags_every_parameter(seed in any::<u64>(), at in 0i64..7200) {
        let (snap, rs) = readings(seed, 2);
        let policy = FreshnessPolicy::default();
        let a = ingest(&rs, &snap, at, &policy, &BTreeMap::new()).unwrap();
        let b = ingest(&rs, &snap, at, &policy, &BTreeMap::new()).unwrap();
        prop_assert_eq!(&a, &b);
        let keys = snap.param_keys();
        prop_assert_eq!(a.confidence.len(), keys.len());
        for k in &keys {
            prop_assert!(a.confidence.contains_key(k));
        }
        prop_assert_eq!(a.hold, keys.iter().any(|k| a.confidence[k].tag == Confidence::Hold));
        // Readings arrive every cycle: nothing is stale.
        prop_assert!(keys.iter().all(|k| a.confidence[k].tag != Confidence::Hold));
    }

    /// The bound never reports more power than was observed in the last hour.
    #[test]
    fn conservative_power_bound_is_an_observed_minimum(seed in any::<u64>(), gap in 4i64..12) {
        let (snap, mut rs) = readings(seed, 3);
        let key = ParamKey::Site(snap.sites[0].id.clone(), SiteParam::PowerCap);
        let cut = 2 * HOUR;
        rs.retain(|r| r.param != key || r.timestamp < cut);
        let at = cut + gap * 300;
        let s = ingest(&rs, &snap, at, &FreshnessPolicy::default(), &BTreeMap::new()).unwrap();
        prop_assert_eq!(s.confidence[&key].tag, Confidence::ConservativeBound);
        let last = rs.iter().filter(|r| r.param == key).map(|r| r.timestamp).max().unwrap();
        let hour: Vec<f64> = rs.iter().filter(|r| r.param == key && r.timestamp >= last - HOUR).map(|r| r.value).collect();
        let got = s.param(&key).unwrap();
        prop_assert!(hour.iter().all(|&v| got <= v + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, ..ProptestConfig::default() })]

    /// Cumulative carbon is recomputable from the audit trail, and the
    /// executing placement always verifies.
    #[test]
    fn loop_bookkeeping_closes(seed in 0u64..1000) {
        let spec = ScenarioSpec::default_for(ScenarioId::A);
        let built = build_scenario(&spec, seed).unwrap();
        let config = LoopConfig { alerts_to_stderr: false, ..LoopConfig::default() };
        let mut control = ControlLoop::new(built.template.clone(), built.workloads.clone(), config).unwrap();
        let mut g = StreamGenerator::new(built.stream.clone(), spec.start, spec.cycle_secs, seed);
        let mut total = 0.0;
        for _ in 0..12 {
            let (t, rs) = g.next_batch();
            let rec = control.run_cycle(&rs, t).unwrap();
            total += rec.carbon_g + rec.migration_g;
            if rec.outcome == CycleOutcome::Executed {
                let p = control.plant.placement().unwrap();
                prop_assert!(p.assignment.len() == built.workloads.len());
            }
        }
        prop_assert!((control.plant.cumulative_carbon - total).abs() <= 1e-6 * total.max(1.0));
    }

    #[test]
    fn scenario_build_is_seeded(seed in any::<u64>(), which in 0usize..3) {
        let spec = ScenarioSpec::default_for(ScenarioId::ALL[which]);
        let a = build_scenario(&spec, seed).unwrap();
        let b = build_scenario(&spec, seed).unwrap();
        prop_assert_eq!(&a.template, &b.template);
        prop_assert_eq!(&a.workloads, &b.workloads);
        prop_assert_eq!(a.template.sites.len(), spec.site_count());
        prop_assert_eq!(validate_snapshot(&a.template, &a.workloads), Vec::<String>::new());
    }
}
