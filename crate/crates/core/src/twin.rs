//! Digital-twin validation, the simulated plant and the closed control loop
//! observe, estimate, optimize, validate, execute.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clock::Deadline;
use crate::error::{Error, Result};
use crate::formulation::{build_instance, BuildOptions, NetworkView, ObjectiveKind};
use crate::fsor::{check_certificate, extract_iis, InfeasibilityCertificate};
use crate::milp::{solve_with_incumbent, SolveStatus};
use crate::model::{carbon_rate_gph, water_draw_lph, Placement, SiteId, TelemetrySnapshot, Workload, WorkloadId};
use crate::telemetry::{Estimator, FreshnessPolicy, Ingestor, RawReading};
use crate::verify::{slo_violations, verify_placement, Violation, ViolationKind, VerifyContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TwinCheck {
    ThermalMargin,
    PowerStability,
    NetworkCongestion,
    PolicyCompliance,
}

impl TwinCheck {
    pub const ALL: [TwinCheck; 4] = [
        Self::ThermalMargin,
        Self::PowerStability,
        Self::NetworkCongestion,
        Self::PolicyCompliance,
    ];
}

/// Twin model thresholds. Defaults leave sites without thermal or UPS data
/// unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    /// Multiplier on each site's cooling capacity.
    pub ambient_derating: f64,
    /// Largest admissible post-placement link utilization.
    pub congestion_threshold: f64,
    /// Validate/re-solve attempts per cycle.
    pub max_attempts: usize,
}

impl Default for TwinConfig {
    fn default() -> Self {
        Self {
            ambient_derating: 1.0,
            congestion_threshold: 0.9,
            max_attempts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: TwinCheck,
    pub pass: bool,
    /// Failing sites, links (`from->to`) or workloads.
    pub failing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinVerdict {
    pub checks: Vec<CheckOutcome>,
}

impl TwinVerdict {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<TwinCheck> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.check).collect()
    }
}

/// A tag `<region>-only` admits only sites whose region tag is `<region>`;
/// any other tag must equal the region tag.
pub fn tag_admits(tag: &str, region: &str) -> bool {
    tag.strip_suffix("-only").unwrap_or(tag) == region
}

fn site_loads(placement: &Placement, workloads: &[Workload]) -> BTreeMap<SiteId, f64> {
    let mut load = BTreeMap::new();
    for w in workloads {
        if let Some(s) = placement.assignment.get(&w.id) {
            *load.entry(s.clone()).or_insert(0.0) += w.power;
        }
    }
    load
}

fn link_utilization(placement: &Placement, snapshot: &TelemetrySnapshot) -> BTreeMap<(SiteId, SiteId), f64> {
    let mut util: BTreeMap<(SiteId, SiteId), f64> = snapshot
        .links
        .iter()
        .map(|l| ((l.from.clone(), l.to.clone()), l.utilization))
        .collect();
    for f in &placement.flows {
        if let Some(l) = snapshot.link(&f.from, &f.to) {
            if let Some(u) = util.get_mut(&(f.from.clone(), f.to.clone())) {
                *u += if l.capacity > 0.0 { f.rate / l.capacity } else { f64::INFINITY };
            }
        }
    }
    util
}

/// Four twin checks against the snapshot the optimizer used.
pub fn validate(
    placement: &Placement,
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
    config: &TwinConfig,
) -> TwinVerdict {
    let load = site_loads(placement, workloads);
    let mut thermal = Vec::new();
    let mut stability = Vec::new();
    for s in &snapshot.sites {
        let l = load.get(&s.id).copied().unwrap_or(0.0);
        if let Some(cool) = s.thermal_cooling_cap {
            if l > cool * config.ambient_derating + 1e-9 {
                thermal.push(s.id.0.clone());
            }
        }
        if s.power_cap - l < s.ups_headroom_frac * s.power_cap - 1e-9 {
            stability.push(s.id.0.clone());
        }
    }
    let congested: Vec<String> = link_utilization(placement, snapshot)
        .into_iter()
        .filter(|&(_, u)| u > config.congestion_threshold + 1e-12)
        .map(|((a, b), _)| format!("{a}->{b}"))
        .collect();
    let mut policy = Vec::new();
    for w in workloads {
        let Some(site) = placement.assignment.get(&w.id) else { continue };
        let region = snapshot
            .site_index(site)
            .map_or("", |i| snapshot.sites[i].region_tag.as_str());
        if !w.locality_tags.iter().all(|t| tag_admits(t, region)) {
            policy.push(w.id.0.clone());
        }
    }
    let outcome = |check, failing: Vec<String>| CheckOutcome {
        check,
        pass: failing.is_empty(),
        failing,
    };
    TwinVerdict {
        checks: vec![
            outcome(TwinCheck::ThermalMargin, thermal),
            outcome(TwinCheck::PowerStability, stability),
            outcome(TwinCheck::NetworkCongestion, congested),
            outcome(TwinCheck::PolicyCompliance, policy),
        ],
    }
}

/// The simulated infrastructure. Measured quantities are recomputed from the
/// executing placement; the placement only changes through [`PlantState::execute`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    placement: Option<Placement>,
    /// [kW]
    pub power_draw: BTreeMap<SiteId, f64>,
    /// [L/h]
    pub water_draw: BTreeMap<SiteId, f64>,
    /// Keyed `from->to`.
    pub link_utilization: BTreeMap<String, f64>,
    /// [gCO2eq]
    pub cumulative_carbon: f64,
    /// [L]
    pub cumulative_water: f64,
    /// Migration share of `cumulative_carbon` [gCO2eq].
    pub cumulative_migration_carbon: f64,
}

impl PlantState {
    pub fn placement(&self) -> Option<&Placement> {
        self.placement.as_ref()
    }

    pub fn assignment(&self) -> Option<&BTreeMap<WorkloadId, SiteId>> {
        self.placement.as_ref().map(|p| &p.assignment)
    }

    /// Applies compute assignment and network flows in one step. The new
    /// state is assembled aside and swapped in, so no caller can observe
    /// one plane updated without the other.
    pub fn execute(
        &mut self,
        placement: &Placement,
        verdict: &TwinVerdict,
        snapshot: &TelemetrySnapshot,
        workloads: &[Workload],
    ) -> Result<()> {
        if !verdict.pass() {
            return Err(Error::Invalid(format!("refusing to execute: twin checks {:?} failed", verdict.failed())));
        }
        if self.placement.as_ref() == Some(placement) {
            return Ok(());
        }
        let moved = self
            .assignment()
            .is_some_and(|old| placement.assignment.iter().any(|(w, s)| old.get(w).is_some_and(|o| o != s)));
        let mut next = self.clone();
        next.placement = Some(placement.clone());
        next.measure(snapshot, workloads);
        if moved {
            next.cumulative_carbon += placement.migration_carbon;
            next.cumulative_migration_carbon += placement.migration_carbon;
        }
        *self = next;
        Ok(())
    }

    fn measure(&mut self, snapshot: &TelemetrySnapshot, workloads: &[Workload]) {
        let empty = Placement::default();
        let p = self.placement.as_ref().unwrap_or(&empty);
        self.power_draw = site_loads(p, workloads);
        self.water_draw = self
            .power_draw
            .iter()
            .filter_map(|(s, &kw)| {
                snapshot
                    .site_index(s)
                    .map(|i| (s.clone(), water_draw_lph(snapshot.sites[i].water_intensity, kw)))
            })
            .collect();
        self.link_utilization = link_utilization(p, snapshot)
            .into_iter()
            .map(|((a, b), u)| (format!("{a}->{b}"), u))
            .collect();
    }

    /// Carbon rate of the running placement under `snapshot` [g/h].
    pub fn carbon_rate(&self, snapshot: &TelemetrySnapshot) -> f64 {
        self.power_draw
            .iter()
            .filter_map(|(s, &kw)| snapshot.site_index(s).map(|i| carbon_rate_gph(snapshot.sites[i].carbon_intensity, kw)))
            .sum()
    }

    /// Runs the plant for `secs` under `snapshot`; returns (carbon g, water L).
    pub fn accrue(&mut self, snapshot: &TelemetrySnapshot, workloads: &[Workload], secs: f64) -> (f64, f64) {
        self.measure(snapshot, workloads);
        let hours = secs / 3600.0;
        let carbon = self.carbon_rate(snapshot) * hours;
        let water = self.water_draw.values().sum::<f64>() * hours;
        self.cumulative_carbon += carbon;
        self.cumulative_water += water;
        (carbon, water)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleOutcome {
    Executed,
    RetainedWithAlert,
    RetainedWithCertificate,
    Hold,
}

/// One audit-trail entry per cycle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub timestamp: i64,
    pub outcome: CycleOutcome,
    pub objective: Option<f64>,
    pub solves: usize,
    pub rejected: Vec<Vec<TwinCheck>>,
    pub assignment: BTreeMap<WorkloadId, SiteId>,
    pub moves: usize,
    /// Operational carbon accrued over this cycle [g].
    pub carbon_g: f64,
    /// Migration carbon charged at execution this cycle [g].
    pub migration_g: f64,
    pub water_l: f64,
    /// Bounded-latency workloads whose physical delay exceeds their budget.
    pub slo_violations: Vec<WorkloadId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<InfeasibilityCertificate>,
    /// Result of the irreducibility re-check, when enabled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate_minimal: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alert: Option<String>,
    pub solve_secs: f64,
}

/// Loop configuration; everything else comes from the snapshot stream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoopConfig {
    pub alpha: f64,
    pub cycle_secs: i64,
    /// Forecast horizon Δ [min].
    pub horizon_min: f64,
    /// Wall-clock budget for the optimize/validate phase [s].
    pub budget_secs: f64,
    pub hop_limit: usize,
    pub objective: ObjectiveKind,
    pub sustainability: bool,
    pub network: NetworkView,
    pub transport_term: bool,
    pub twin: TwinConfig,
    pub freshness: FreshnessPolicy,
    pub alerts_to_stderr: bool,
    /// Re-check every emitted certificate for irreducibility.
    #[serde(default)]
    pub check_certificates: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            cycle_secs: crate::telemetry::DEFAULT_CYCLE_SECS,
            horizon_min: 60.0,
            budget_secs: 300.0,
            hop_limit: crate::formulation::DEFAULT_HOP_LIMIT,
            objective: ObjectiveKind::Sustainability,
            sustainability: true,
            network: NetworkView::Physical,
            transport_term: false,
            twin: TwinConfig::default(),
            freshness: FreshnessPolicy::default(),
            alerts_to_stderr: true,
            check_certificates: false,
        }
    }
}

/// The network as the optimizer sees it: under the equivalent view every
/// link is free, instantaneous and unloaded.
pub fn view_snapshot(snapshot: &TelemetrySnapshot, view: NetworkView) -> TelemetrySnapshot {
    let mut s = snapshot.clone();
    if view == NetworkView::Equivalent {
        for l in &mut s.links {
            l.delay = 0.0;
            l.capacity = f64::INFINITY;
            l.utilization = 0.0;
        }
    }
    s
}

pub struct ControlLoop {
    pub config: LoopConfig,
    pub workloads: Vec<Workload>,
    pub plant: PlantState,
    ingestor: Ingestor,
    estimator: Estimator,
    forecasts: BTreeMap<crate::model::ParamKey, Vec<crate::model::ForecastPoint>>,
    cycle: usize,
    log: Option<Box<dyn Write>>,
}

impl ControlLoop {
    pub fn new(template: TelemetrySnapshot, workloads: Vec<Workload>, config: LoopConfig) -> Result<Self> {
        let ingestor = Ingestor::new(template, config.freshness.clone())?;
        let estimator = Estimator::new(config.horizon_min, config.cycle_secs);
        Ok(Self {
            config,
            workloads,
            plant: PlantState::default(),
            ingestor,
            estimator,
            forecasts: BTreeMap::new(),
            cycle: 0,
            log: None,
        })
    }

    /// Appends every cycle record as one JSON line.
    pub fn with_log(mut self, log: Box<dyn Write>) -> Self {
        self.log = Some(log);
        self
    }

    fn options(&self) -> BuildOptions {
        BuildOptions {
            alpha: self.config.alpha,
            hop_limit: self.config.hop_limit,
            incumbent: self.plant.assignment().cloned(),
            transport_term: self.config.transport_term,
            sustainability: self.config.sustainability,
            objective: self.config.objective,
            network: self.config.network,
            ..BuildOptions::default()
        }
    }

    /// One full cycle at `timestamp`, fed with the readings that arrived
    /// since the previous one.
    pub fn run_cycle(&mut self, readings: &[RawReading], timestamp: i64) -> Result<CycleRecord> {
        // Observe.
        for r in readings {
            self.ingestor.push(r)?;
        }
        let observed = self.ingestor.snapshot(timestamp, &self.forecasts);
        // Estimate.
        let theta = self.estimator.update(&observed);
        self.forecasts.clone_from(&theta.forecasts);

        let mut record = CycleRecord {
            cycle: self.cycle,
            timestamp,
            outcome: CycleOutcome::Hold,
            objective: None,
            solves: 0,
            rejected: Vec::new(),
            assignment: BTreeMap::new(),
            moves: 0,
            carbon_g: 0.0,
            migration_g: 0.0,
            water_l: 0.0,
            slo_violations: Vec::new(),
            certificate: None,
            certificate_minimal: None,
            alert: None,
            solve_secs: 0.0,
        };
        self.cycle += 1;

        if theta.hold {
            record.alert = Some(format!("optimization held: {}", theta.hold_reasons.join("; ")));
        } else {
            self.optimize(&theta, &mut record)?;
        }

        // The plant runs whatever is in force over the coming cycle.
        let (carbon, water) = self.plant.accrue(&observed, &self.workloads, self.config.cycle_secs as f64);
        record.carbon_g = carbon;
        record.water_l = water;
        if let Some(p) = self.plant.placement() {
            record.assignment = p.assignment.clone();
            record.slo_violations = slo_violations(&observed, &self.workloads, p);
        }
        if let Some(a) = &record.alert {
            if self.config.alerts_to_stderr {
                eprintln!("[cycle {} @ {}] {:?}: {a}", record.cycle, record.timestamp, record.outcome);
            }
        }
        if let Some(log) = &mut self.log {
            serde_json::to_writer(&mut *log, &record)?;
            log.write_all(b"\n")?;
        }
        Ok(record)
    }

    fn optimize(&mut self, theta: &TelemetrySnapshot, record: &mut CycleRecord) -> Result<()> {
        let deadline = Deadline::after_secs(self.config.budget_secs);
        let view = view_snapshot(theta, self.config.network);
        let mut options = self.options();
        let hint: Option<Vec<Option<usize>>> = self.plant.assignment().map(|a| {
            self.workloads
                .iter()
                .map(|w| a.get(&w.id).and_then(|s| theta.site_index(s)))
                .collect()
        });
        for attempt in 0..self.config.twin.max_attempts.max(1) {
            if attempt > 0 && deadline.expired() {
                break;
            }
            let inst = build_instance(theta, &self.workloads, &options)?;
            let out = solve_with_incumbent(&inst, deadline.remaining_secs().max(0.0), hint.as_deref())?;
            record.solves += 1;
            record.solve_secs = deadline.elapsed_secs();
            match out.status {
                SolveStatus::Optimal => {}
                SolveStatus::Infeasible if attempt == 0 => {
                    let budget = deadline.remaining_secs().max(1.0);
                    let cert = extract_iis(theta, &self.workloads, &options, budget)?;
                    if self.config.check_certificates {
                        record.certificate_minimal = Some(check_certificate(theta, &self.workloads, &options, &cert, budget)?);
                    }
                    record.outcome = CycleOutcome::RetainedWithCertificate;
                    record.alert = Some(format!("no valid placement: {}", cert.diagnosis.join("; ")));
                    record.certificate = Some(cert);
                    return Ok(());
                }
                SolveStatus::Infeasible => {
                    record.outcome = CycleOutcome::RetainedWithAlert;
                    record.alert = Some("every optimal candidate failed twin validation".into());
                    return Ok(());
                }
                SolveStatus::Timeout => {
                    record.outcome = CycleOutcome::RetainedWithAlert;
                    record.alert = Some(format!("solve budget exhausted with gap {:.3e}", out.gap));
                    return Ok(());
                }
            }
            let (Some(placement), Some(solution)) = (out.placement, out.solution) else {
                return Err(Error::Invalid("optimal outcome without a placement".into()));
            };
            let ctx = VerifyContext {
                incumbent: options.incumbent.as_ref(),
                ..VerifyContext::default()
            };
            // Without sustainability rows the carbon and water limits are
            // only measured, not enforced.
            let enforced = |v: &Violation| {
                self.config.sustainability || !matches!(v.kind, ViolationKind::CarbonGate | ViolationKind::WaterCap)
            };
            let violations = verify_placement(&view, &self.workloads, &placement, &ctx);
            if let Some(v) = violations.iter().find(|v| enforced(v)) {
                record.outcome = CycleOutcome::RetainedWithAlert;
                record.alert = Some(format!("solver placement failed verification: {v}"));
                return Ok(());
            }
            let verdict = validate(&placement, theta, &self.workloads, &self.config.twin);
            if verdict.pass() {
                let moves = self.plant.assignment().map_or(0, |old| {
                    placement
                        .assignment
                        .iter()
                        .filter(|(w, s)| old.get(*w).is_some_and(|o| o != *s))
                        .count()
                });
                let before = self.plant.cumulative_migration_carbon;
                self.plant.execute(&placement, &verdict, theta, &self.workloads)?;
                record.migration_g = self.plant.cumulative_migration_carbon - before;
                record.moves = moves;
                record.objective = Some(placement.objective);
                record.outcome = CycleOutcome::Executed;
                return Ok(());
            }
            record.rejected.push(verdict.failed());
            let pattern: Vec<(usize, usize)> = solution
                .assignment
                .iter()
                .enumerate()
                .filter_map(|(k, s)| s.map(|i| (i, k)))
                .collect();
            options.cuts.push(pattern);
        }
        record.outcome = CycleOutcome::RetainedWithAlert;
        record.alert = Some(format!(
            "twin rejected {} candidate(s); current placement retained",
            record.rejected.len()
        ));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::ArcFlow;
    use crate::telemetry::{generate_stream, StreamSpec};

    fn placed(pairs: &[(&str, &str)]) -> Placement {
        Placement {
            assignment: pairs.iter().map(|(w, s)| ((*w).into(), (*s).into())).collect(),
            ..Placement::default()
        }
    }

    #[test]
    fn slack_instance_passes() {
        let snap = complete(2, 1.0);
        let w = vec![workload("a", 10.0, "s0")];
        let v = validate(&placed(&[("a", "s0")]), &snap, &w, &TwinConfig::default());
        assert!(v.pass());
        assert_eq!(v.checks.len(), 4);
    }

    #[test]
    fn congested_link_is_named() {
        let mut snap = complete(2, 1.0);
        snap.links[0].utilization = 0.5;
        let w = vec![workload("a", 10.0, "s1")];
        let mut p = placed(&[("a", "s0")]);
        p.flows.push(ArcFlow {
            from: "s0".into(),
            to: "s1".into(),
            workload: "a".into(),
            rate: 45.0,
        });
        let v = validate(&p, &snap, &w, &TwinConfig::default());
        assert_eq!(v.failed(), vec![TwinCheck::NetworkCongestion]);
        assert_eq!(v.checks[2].failing, vec!["s0->s1".to_string()]);
    }

    #[test]
    fn locality_tag_outside_region() {
        let mut snap = complete(2, 1.0);
        snap.sites[0].region_tag = "us".into();
        snap.sites[1].region_tag = "eu".into();
        let mut w = workload("a", 10.0, "s0");
        w.locality_tags.push("eu-only".into());
        let v = validate(&placed(&[("a", "s0")]), &snap, &[w.clone()], &TwinConfig::default());
        assert_eq!(v.failed(), vec![TwinCheck::PolicyCompliance]);
        assert!(validate(&placed(&[("a", "s1")]), &snap, &[w], &TwinConfig::default()).pass());
    }

    #[test]
    fn thermal_and_ups() {
        let mut snap = complete(1, 1.0);
        snap.sites[0].thermal_cooling_cap = Some(50.0);
        snap.sites[0].ups_headroom_frac = 0.95;
        let w = vec![workload("a", 60.0, "s0")];
        let v = validate(&placed(&[("a", "s0")]), &snap, &w, &TwinConfig::default());
        assert_eq!(v.failed(), vec![TwinCheck::ThermalMargin, TwinCheck::PowerStability]);
    }

    #[test]
    fn reexecuting_is_idempotent() {
        let snap = complete(2, 1.0);
        let w = vec![workload("a", 10.0, "s0")];
        let p = placed(&[("a", "s0")]);
        let v = validate(&p, &snap, &w, &TwinConfig::default());
        let mut plant = PlantState::default();
        plant.execute(&p, &v, &snap, &w).unwrap();
        let once = plant.clone();
        plant.execute(&p, &v, &snap, &w).unwrap();
        assert_eq!(plant, once);
    }

    #[test]
    fn migration_carbon_is_charged_once() {
        let snap = complete(2, 1.0);
        let w = vec![workload("a", 10.0, "s0")];
        let v = validate(&placed(&[("a", "s0")]), &snap, &w, &TwinConfig::default());
        let mut plant = PlantState::default();
        plant.execute(&placed(&[("a", "s0")]), &v, &snap, &w).unwrap();
        let mut moved = placed(&[("a", "s1")]);
        moved.migration_carbon = 7.0;
        plant.execute(&moved, &v, &snap, &w).unwrap();
        assert_eq!(plant.cumulative_carbon, 7.0);
        plant.execute(&moved, &v, &snap, &w).unwrap();
        assert_eq!(plant.cumulative_carbon, 7.0);
    }

    #[test]
    fn failed_verdict_is_refused() {
        let snap = complete(1, 1.0);
        let verdict = TwinVerdict {
            checks: vec![CheckOutcome {
                check: TwinCheck::ThermalMargin,
                pass: false,
                failing: vec!["s0".into()],
            }],
        };
        let mut plant = PlantState::default();
        assert!(plant.execute(&placed(&[]), &verdict, &snap, &[]).is_err());
        assert!(plant.placement().is_none());
    }

    fn quiet() -> LoopConfig {
        LoopConfig {
            alerts_to_stderr: false,
            budget_secs: 30.0,
            ..LoopConfig::default()
        }
    }

    #[test]
    fn rejected_optimum_falls_to_next_best() {
        let mut snap = complete(2, 1.0);
        snap.sites[0].carbon_intensity = 100.0;
        snap.sites[1].carbon_intensity = 500.0;
        snap.sites[0].region_tag = "us".into();
        snap.sites[1].region_tag = "eu".into();
        let mut w = workload("a", 10.0, "s0");
        w.locality_tags.push("eu-only".into());
        let mut lp = ControlLoop::new(snap.clone(), vec![w], quiet()).unwrap();
        let r = generate_stream(&StreamSpec::constant(snap), 0, 300, 300, 1);
        let rec = lp.run_cycle(&r, 0).unwrap();
        assert_eq!(rec.outcome, CycleOutcome::Executed);
        assert_eq!(rec.solves, 2);
        assert_eq!(rec.rejected, vec![vec![TwinCheck::PolicyCompliance]]);
        assert_eq!(rec.assignment[&WorkloadId::from("a")], SiteId::from("s1"));
    }

    #[test]
    fn steady_stream_reaches_fixed_point() {
        let snap = complete(3, 1.0);
        let w = vec![workload("a", 10.0, "s0"), workload("b", 20.0, "s1")];
        let mut lp = ControlLoop::new(snap.clone(), w, quiet()).unwrap();
        let stream = generate_stream(&StreamSpec::constant(snap), 0, 1800, 300, 1);
        let mut last = None;
        for c in 0..6 {
            let ts = c * 300;
            let batch: Vec<_> = stream.iter().filter(|r| r.timestamp == ts).cloned().collect();
            let rec = lp.run_cycle(&batch, ts).unwrap();
            assert_eq!(rec.outcome, CycleOutcome::Executed);
            if let Some(prev) = &last {
                assert_eq!(&rec.assignment, prev);
                assert_eq!(rec.moves, 0);
            }
            last = Some(rec.assignment);
        }
    }

    #[test]
    fn infeasible_cycle_keeps_placement_and_certifies() {
        let snap = complete(1, 1.0);
        let w = vec![workload("a", 600.0, "s0")];
        let mut lp = ControlLoop::new(snap.clone(), w, quiet()).unwrap();
        let stream = generate_stream(&StreamSpec::constant(snap.clone()), 0, 300, 300, 1);
        assert_eq!(lp.run_cycle(&stream, 0).unwrap().outcome, CycleOutcome::Executed);
        let mut tight = snap;
        tight.sites[0].water_permit = 100.0;
        let stream = generate_stream(&StreamSpec::constant(tight), 300, 300, 300, 1);
        let rec = lp.run_cycle(&stream, 300).unwrap();
        assert_eq!(rec.outcome, CycleOutcome::RetainedWithCertificate);
        assert_eq!(rec.assignment[&WorkloadId::from("a")], SiteId::from("s0"));
        assert!(rec.certificate.is_some());
    }
}
