//! Scenarios A/B/C and the Baseline / ComputeOnly / Joint comparison.
//!
//! Every number here is an invented default kept in the versioned JSON
//! files under `scenarios/`; only the qualitative orderings are asserted.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{ConstraintClass, NetworkView, ObjectiveKind};
use crate::model::{LatencyBudget, Link, Problem, Site, SiteId, TelemetrySnapshot, Workload, WorkloadClass};
use crate::routing::{shortest_delays, Graph, FIBER_INDEX, SPEED_OF_LIGHT_KM_S};
use crate::telemetry::{FreshnessPolicy, Ingestor, SiteDynamics, StreamGenerator, StreamSpec, StressWindow, DAY, HOUR};
use crate::twin::{ControlLoop, CycleOutcome, LoopConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    A,
    B,
    C,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [Self::A, Self::B, Self::C];
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
        })
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            other => Err(Error::Invalid(format!("unknown scenario `{other}`; expected A, B or C"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Configuration {
    /// Minimum latency, no sustainability rows.
    Baseline,
    /// Sustainability placement over an equivalent network, re-checked on
    /// the physical one.
    ComputeOnly,
    /// The full closed loop.
    Joint,
}

impl Configuration {
    pub const ALL: [Configuration; 3] = [Self::Baseline, Self::ComputeOnly, Self::Joint];

    /// Loop settings for this configuration on top of `base`.
    pub fn loop_config(self, base: &LoopConfig) -> LoopConfig {
        let mut c = base.clone();
        match self {
            Self::Baseline => {
                c.objective = ObjectiveKind::Latency;
                c.sustainability = false;
                c.network = NetworkView::Physical;
            }
            Self::ComputeOnly => {
                c.objective = ObjectiveKind::Sustainability;
                c.sustainability = true;
                c.network = NetworkView::Equivalent;
                // The network is invisible to this configuration, congestion included.
                c.twin.congestion_threshold = f64::INFINITY;
            }
            Self::Joint => {
                c.objective = ObjectiveKind::Sustainability;
                c.sustainability = true;
                c.network = NetworkView::Physical;
            }
        }
        c
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Baseline => "Baseline",
            Self::ComputeOnly => "ComputeOnly",
            Self::Joint => "Joint",
        })
    }
}

/// Sites sharing one grid: same carbon signal up to a static offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub name: String,
    pub sites: usize,
    pub center_km: (f64, f64),
    /// Sites are scattered uniformly in a disc of this radius.
    pub spread_km: f64,
    pub carbon_mean: f64,
    /// Static per-site offset, as a fraction of the zone mean.
    pub carbon_site_jitter: f64,
    pub carbon_amplitude: f64,
    pub carbon_peak_hour: f64,
    pub carbon_noise: f64,
    pub carbon_ceiling: f64,
    pub water_intensity: (f64, f64),
    pub water_seasonal_amplitude: f64,
    pub water_diurnal_amplitude: f64,
    /// Permit as a multiple of the base water draw at full power cap.
    pub permit_headroom: f64,
    pub power_cap: (f64, f64),
    /// Standard deviation of the power headroom walk [kW].
    pub power_walk: f64,
    /// Demand endpoints live in this zone.
    pub demand: bool,
    /// Subject to the stress calendar.
    pub stressed: bool,
}

/// Heat event over the stressed zones, relative to the scenario start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressCalendar {
    pub start_secs: i64,
    pub end_secs: i64,
    pub permit_factor: f64,
    pub water_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMix {
    pub training: usize,
    pub inference: usize,
    pub batch: usize,
    pub training_power: (f64, f64),
    pub inference_power: (f64, f64),
    pub batch_power: (f64, f64),
    pub inference_traffic: (f64, f64),
    pub batch_traffic: (f64, f64),
    pub batch_state_gb: (f64, f64),
    /// Inference budget as a fraction of the delay from its endpoint to
    /// the nearest other site, so inference is served at the endpoint.
    pub inference_slo_frac: (f64, f64),
    pub inference_rehydration_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub version: u32,
    pub id: ScenarioId,
    /// Unix seconds of the first cycle.
    pub start: i64,
    pub horizon_secs: i64,
    pub cycle_secs: i64,
    pub seeds: Vec<u64>,
    pub zones: Vec<ZoneSpec>,
    pub stress: Option<StressCalendar>,
    pub mix: WorkloadMix,
    /// Link capacity [Gbps].
    pub link_capacity: f64,
    pub link_utilization: f64,
    pub utilization_noise: f64,
}

const SPEC_A: &str = include_str!("../scenarios/a.json");
const SPEC_B: &str = include_str!("../scenarios/b.json");
const SPEC_C: &str = include_str!("../scenarios/c.json");

/// Day of year the water-intensity season peaks.
const WATER_PEAK_DAY: f64 = 200.0;

impl ScenarioSpec {
    /// The shipped default for `id`.
    pub fn default_for(id: ScenarioId) -> Self {
        let text = match id {
            ScenarioId::A => SPEC_A,
            ScenarioId::B => SPEC_B,
            ScenarioId::C => SPEC_C,
        };
        serde_json::from_str(text).expect("shipped scenario spec parses")
    }

    pub fn site_count(&self) -> usize {
        self.zones.iter().map(|z| z.sites).sum()
    }

    pub fn cycles(&self) -> usize {
        (self.horizon_secs / self.cycle_secs.max(1)).max(0) as usize
    }

    /// Whether the absolute timestamp `t` falls in the stress window.
    pub fn in_stress(&self, t: i64) -> bool {
        self.stress
            .as_ref()
            .is_some_and(|s| t - self.start >= s.start_secs && t - self.start < s.end_secs)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.cycle_secs <= 0 || self.horizon_secs < self.cycle_secs {
            return bad(format!("scenario {}: horizon must cover at least one cycle", self.id));
        }
        if self.site_count() == 0 {
            return bad(format!("scenario {}: no sites", self.id));
        }
        if !self.zones.iter().any(|z| z.demand && z.sites > 0) {
            return bad(format!("scenario {}: no demand zone", self.id));
        }
        for z in &self.zones {
            let ranges = [z.water_intensity, z.power_cap];
            if ranges.iter().any(|&(lo, hi)| lo > hi || lo < 0.0) {
                return bad(format!("zone `{}`: bad range", z.name));
            }
        }
        if let Some(s) = &self.stress {
            if s.start_secs >= s.end_secs || s.permit_factor < 0.0 || s.water_factor < 0.0 {
                return bad(format!("scenario {}: bad stress calendar", self.id));
            }
        }
        Ok(())
    }
}

/// One seeded instance: topology, workload universe and reading source.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub id: ScenarioId,
    pub seed: u64,
    pub template: TelemetrySnapshot,
    pub workloads: Vec<Workload>,
    pub stream: StreamSpec,
    /// Zone name per site, in template order.
    pub zone_of: Vec<String>,
    pub positions_km: Vec<(f64, f64)>,
}

impl BuiltScenario {
    /// Centroid of the demand-zone sites [km].
    pub fn demand_center(&self, spec: &ScenarioSpec) -> (f64, f64) {
        let demand: Vec<&(f64, f64)> = self
            .positions_km
            .iter()
            .zip(&self.zone_of)
            .filter(|(_, z)| spec.zones.iter().any(|s| &s.name == *z && s.demand))
            .map(|(p, _)| p)
            .collect();
        let n = demand.len().max(1) as f64;
        (demand.iter().map(|p| p.0).sum::<f64>() / n, demand.iter().map(|p| p.1).sum::<f64>() / n)
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn route_delay_ms(a: (f64, f64), b: (f64, f64)) -> f64 {
    let km_per_ms = SPEED_OF_LIGHT_KM_S / FIBER_INDEX * 1e-3;
    let dist = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    // Fiber routes run longer than the straight line.
    (dist * 1.3 + 20.0) / km_per_ms
}

pub fn build_scenario(spec: &ScenarioSpec, seed: u64) -> Result<BuiltScenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sites = Vec::new();
    let mut zone_of = Vec::new();
    let mut positions = Vec::new();
    let mut dynamics = BTreeMap::new();
    for zone in &spec.zones {
        for i in 0..zone.sites {
            let r = zone.spread_km * rng.gen::<f64>().sqrt();
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            positions.push((zone.center_km.0 + r * phi.cos(), zone.center_km.1 + r * phi.sin()));
            let carbon_mean = zone.carbon_mean * (1.0 + zone.carbon_site_jitter * rng.gen_range(-1.0..=1.0));
            let water = draw(&mut rng, zone.water_intensity);
            let power_cap = draw(&mut rng, zone.power_cap);
            let id = SiteId::from(format!("{}-{i}", zone.name));
            dynamics.insert(id.clone(), SiteDynamics {
                carbon_mean,
                carbon_amplitude: zone.carbon_amplitude,
                carbon_peak_hour: zone.carbon_peak_hour,
                carbon_noise: zone.carbon_noise,
                water_seasonal_amplitude: zone.water_seasonal_amplitude,
                water_peak_day: WATER_PEAK_DAY,
                water_diurnal_amplitude: zone.water_diurnal_amplitude,
                water_peak_hour: 15.0,
                power_walk: zone.power_walk,
                power_bounds: (power_cap * 0.97, power_cap),
            });
            sites.push(Site {
                id,
                power_cap,
                carbon_intensity: carbon_mean,
                water_intensity: water,
                carbon_ceiling: zone.carbon_ceiling,
                water_permit: zone.permit_headroom * water * power_cap,
                thermal_cooling_cap: None,
                ups_headroom_frac: 0.0,
                region_tag: zone.name.clone(),
                onsite_gen: 0.0,
                onsite_batt: 0.0,
            });
            zone_of.push(zone.name.clone());
        }
    }
    let n = sites.len();
    let mut links = Vec::with_capacity(n * n.saturating_sub(1));
    for a in 0..n {
        for b in 0..n {
            if a != b {
                links.push(Link {
                    from: sites[a].id.clone(),
                    to: sites[b].id.clone(),
                    capacity: spec.link_capacity,
                    delay: route_delay_ms(positions[a], positions[b]),
                    energy_per_bit: 1e-11,
                    utilization: spec.link_utilization,
                    alarmed: false,
                });
            }
        }
    }

    let mut demand: Vec<usize> = (0..n)
        .filter(|&i| spec.zones.iter().any(|z| z.name == zone_of[i] && z.demand))
        .collect();
    demand.shuffle(&mut rng);
    let nearest = |i: usize| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| route_delay_ms(positions[i], positions[j]))
            .fold(f64::INFINITY, f64::min)
    };
    let mix = &spec.mix;
    let mut workloads = Vec::new();
    let classes = std::iter::repeat(WorkloadClass::Training)
        .take(mix.training)
        .chain(std::iter::repeat(WorkloadClass::Inference).take(mix.inference))
        .chain(std::iter::repeat(WorkloadClass::Batch).take(mix.batch));
    // Endpoints are dealt round-robin per class so no endpoint is overloaded.
    let mut dealt: BTreeMap<WorkloadClass, usize> = BTreeMap::new();
    for (k, class) in classes.enumerate() {
        let turn = dealt.entry(class).or_default();
        let dest = demand[*turn % demand.len()];
        *turn += 1;
        let w = match class {
            WorkloadClass::Training => Workload {
                id: format!("train-{k}").into(),
                power: draw(&mut rng, mix.training_power),
                latency_slo: LatencyBudget::Unbounded,
                traffic: 0.0,
                portable: false,
                state_size: 0.0,
                rehydration: 0.0,
                rehydration_overrides: BTreeMap::new(),
                class,
                dest: sites[dest].id.clone(),
                locality_tags: Vec::new(),
            },
            WorkloadClass::Inference => Workload {
                id: format!("infer-{k}").into(),
                power: draw(&mut rng, mix.inference_power),
                latency_slo: LatencyBudget::Bounded(nearest(dest) * draw(&mut rng, mix.inference_slo_frac)),
                traffic: draw(&mut rng, mix.inference_traffic),
                portable: true,
                // Stateless serving replicas.
                state_size: 0.0,
                rehydration: mix.inference_rehydration_ms,
                rehydration_overrides: BTreeMap::new(),
                class,
                dest: sites[dest].id.clone(),
                locality_tags: Vec::new(),
            },
            WorkloadClass::Batch => Workload {
                id: format!("batch-{k}").into(),
                power: draw(&mut rng, mix.batch_power),
                latency_slo: LatencyBudget::Unbounded,
                traffic: draw(&mut rng, mix.batch_traffic),
                portable: true,
                state_size: draw(&mut rng, mix.batch_state_gb),
                rehydration: 0.0,
                rehydration_overrides: BTreeMap::new(),
                class,
                dest: sites[dest].id.clone(),
                locality_tags: Vec::new(),
            },
        };
        workloads.push(w);
    }

    let template = TelemetrySnapshot::new(spec.start, sites, links);
    let mut stream = StreamSpec::constant(template.clone());
    stream.dynamics = dynamics;
    stream.utilization_noise = spec.utilization_noise;
    if let Some(cal) = &spec.stress {
        for (site, zone) in template.sites.iter().zip(&zone_of) {
            if spec.zones.iter().any(|z| &z.name == zone && z.stressed) {
                stream.stress.push(StressWindow {
                    site: site.id.clone(),
                    start: cal.start_secs,
                    end: cal.end_secs,
                    permit_factor: cal.permit_factor,
                    water_factor: cal.water_factor,
                });
            }
        }
    }
    Ok(BuiltScenario {
        id: spec.id,
        seed,
        template,
        workloads,
        stream,
        zone_of,
        positions_km: positions,
    })
}

/// The observed snapshot at `cycle`, replayed from the stream with the
/// default freshness policy.
pub fn snapshot_at(spec: &ScenarioSpec, built: &BuiltScenario, cycle: usize) -> Result<Problem> {
    let mut ingestor = Ingestor::new(built.template.clone(), FreshnessPolicy::default())?;
    let mut generator = StreamGenerator::new(built.stream.clone(), spec.start, spec.cycle_secs, built.seed);
    let mut t = spec.start;
    for _ in 0..=cycle {
        let (ts, readings) = generator.next_batch();
        for r in &readings {
            ingestor.push(r)?;
        }
        t = ts;
    }
    Ok(Problem {
        snapshot: ingestor.snapshot(t, &BTreeMap::new()),
        workloads: built.workloads.clone(),
    })
}

/// First cycle at the afternoon water peak inside the stress window.
pub fn peak_stress_cycle(spec: &ScenarioSpec) -> Option<usize> {
    let cal = spec.stress.as_ref()?;
    let from = spec.start + cal.start_secs;
    let peak = 15 * HOUR;
    let t = from + (peak - from.rem_euclid(DAY)).rem_euclid(DAY);
    (t < spec.start + cal.end_secs && t < spec.start + spec.horizon_secs)
        .then(|| ((t - spec.start) / spec.cycle_secs) as usize)
}

/// Per-cycle values for external plotting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TracePoint {
    pub cycle: usize,
    pub timestamp: i64,
    pub outcome: CycleOutcome,
    pub in_stress: bool,
    pub carbon_g: f64,
    pub migration_g: f64,
    pub water_l: f64,
    pub slo_violations: usize,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: ScenarioId,
    pub configuration: Configuration,
    pub seed: u64,
    pub cycles: usize,
    /// Operational plus migration carbon [kg].
    pub carbon_kg: f64,
    pub migration_kg: f64,
    pub water_m3: f64,
    /// Weighted carbon and water relative to Baseline on the same seed.
    pub impact: f64,
    /// Workload-cycles whose physical delay exceeded the budget.
    pub slo_violations: usize,
    pub infeasible_cycles: usize,
    pub infeasible_in_stress: usize,
    pub infeasible_outside_stress: usize,
    pub alert_cycles: usize,
    pub hold_cycles: usize,
    pub moves: usize,
    pub certificates: usize,
    pub certificates_with_water: usize,
    /// Certificates that passed the irreducibility re-check.
    pub certificates_minimal: usize,
    /// Mean delay from host to endpoint per class [ms].
    pub mean_delay_ms: BTreeMap<WorkloadClass, f64>,
    pub max_solve_secs: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TracePoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub alpha: f64,
    pub budget_secs: f64,
    /// Overrides the spec horizon.
    pub horizon_secs: Option<i64>,
    pub keep_trace: bool,
    pub check_certificates: bool,
    /// Worker threads for seeds and configurations; 0 means all cores.
    pub threads: usize,
    pub base: LoopConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            budget_secs: 300.0,
            horizon_secs: None,
            keep_trace: false,
            check_certificates: false,
            threads: 0,
            base: LoopConfig {
                alerts_to_stderr: false,
                ..LoopConfig::default()
            },
        }
    }
}

/// Runs one configuration over the horizon. Impact is left at 0 until the
/// report normalizes against Baseline.
pub fn run_configuration(
    spec: &ScenarioSpec,
    built: &BuiltScenario,
    configuration: Configuration,
    options: &RunOptions,
) -> Result<ReportRow> {
    let mut config = configuration.loop_config(&options.base);
    config.alpha = options.alpha;
    config.budget_secs = options.budget_secs;
    config.cycle_secs = spec.cycle_secs;
    config.check_certificates = options.check_certificates;
    let mut control = ControlLoop::new(built.template.clone(), built.workloads.clone(), config)?;
    let mut generator = StreamGenerator::new(built.stream.clone(), spec.start, spec.cycle_secs, built.seed);
    let horizon = options.horizon_secs.unwrap_or(spec.horizon_secs);
    let cycles = (horizon / spec.cycle_secs).max(0) as usize;

    let index: BTreeMap<&SiteId, usize> = built.template.sites.iter().enumerate().map(|(i, s)| (&s.id, i)).collect();
    let mut row = ReportRow {
        scenario: spec.id,
        configuration,
        seed: built.seed,
        cycles,
        carbon_kg: 0.0,
        migration_kg: 0.0,
        water_m3: 0.0,
        impact: 0.0,
        slo_violations: 0,
        infeasible_cycles: 0,
        infeasible_in_stress: 0,
        infeasible_outside_stress: 0,
        alert_cycles: 0,
        hold_cycles: 0,
        moves: 0,
        certificates: 0,
        certificates_with_water: 0,
        certificates_minimal: 0,
        mean_delay_ms: BTreeMap::new(),
        max_solve_secs: 0.0,
        trace: Vec::new(),
    };
    let mut delay_sum: BTreeMap<WorkloadClass, (f64, usize)> = BTreeMap::new();
    let mut delays: Option<Vec<Vec<f64>>> = None;
    for _ in 0..cycles {
        let (t, readings) = generator.next_batch();
        let record = control.run_cycle(&readings, t)?;
        let stress = spec.in_stress(t);
        row.carbon_kg += (record.carbon_g + record.migration_g) / 1e3;
        row.migration_kg += record.migration_g / 1e3;
        row.water_m3 += record.water_l / 1e3;
        row.slo_violations += record.slo_violations.len();
        row.moves += record.moves;
        row.max_solve_secs = row.max_solve_secs.max(record.solve_secs);
        match record.outcome {
            CycleOutcome::RetainedWithCertificate => {
                row.infeasible_cycles += 1;
                if stress {
                    row.infeasible_in_stress += 1;
                } else {
                    row.infeasible_outside_stress += 1;
                }
            }
            CycleOutcome::RetainedWithAlert => row.alert_cycles += 1,
            CycleOutcome::Hold => row.hold_cycles += 1,
            CycleOutcome::Executed => {}
        }
        if let Some(cert) = &record.certificate {
            row.certificates += 1;
            if cert.has_class(ConstraintClass::WaterCap) {
                row.certificates_with_water += 1;
            }
        }
        if record.certificate_minimal == Some(true) {
            row.certificates_minimal += 1;
        }
        // Link delays are static across the stream.
        let d = delays.get_or_insert_with(|| shortest_delays(&Graph::from_snapshot(&built.template)));
        for w in &built.workloads {
            if let (Some(host), Some(&j)) = (record.assignment.get(&w.id), index.get(&w.dest)) {
                if let Some(&i) = index.get(host) {
                    let e = delay_sum.entry(w.class).or_default();
                    e.0 += d[i][j];
                    e.1 += 1;
                }
            }
        }
        if options.keep_trace {
            row.trace.push(TracePoint {
                cycle: record.cycle,
                timestamp: t,
                outcome: record.outcome,
                in_stress: stress,
                carbon_g: record.carbon_g,
                migration_g: record.migration_g,
                water_l: record.water_l,
                slo_violations: record.slo_violations.len(),
                objective: record.objective,
            });
        }
    }
    row.mean_delay_ms = delay_sum
        .into_iter()
        .map(|(c, (sum, n))| (c, if n > 0 { sum / n as f64 } else { 0.0 }))
        .collect();
    Ok(row)
}

/// Flat CSV projection of a row.
#[derive(Debug, Serialize)]
struct CsvRow {
    scenario: ScenarioId,
    configuration: Configuration,
    seed: u64,
    cycles: usize,
    carbon_kg: f64,
    migration_kg: f64,
    water_m3: f64,
    impact: f64,
    slo_violations: usize,
    infeasible_cycles: usize,
    infeasible_in_stress: usize,
    infeasible_outside_stress: usize,
    alert_cycles: usize,
    hold_cycles: usize,
    moves: usize,
    certificates: usize,
    certificates_with_water: usize,
    delay_training_ms: f64,
    delay_inference_ms: f64,
    delay_batch_ms: f64,
    max_solve_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparativeReport {
    pub alpha: f64,
    pub rows: Vec<ReportRow>,
}

/// One qualitative ordering on one seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub scenario: ScenarioId,
    pub seed: u64,
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// Relative tolerance on |Joint − ComputeOnly| impact in scenario A.
pub const SIMILAR_IMPACT_TOL: f64 = 0.05;

impl ComparativeReport {
    /// Sorts rows and fills `impact` from the Baseline row of each seed.
    pub fn new(alpha: f64, mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by(|a, b| (a.scenario, a.configuration, a.seed).cmp(&(b.scenario, b.configuration, b.seed)));
        let baseline: BTreeMap<(ScenarioId, u64), (f64, f64)> = rows
            .iter()
            .filter(|r| r.configuration == Configuration::Baseline)
            .map(|r| ((r.scenario, r.seed), (r.carbon_kg, r.water_m3)))
            .collect();
        let ratio = |x: f64, base: f64| if base > 0.0 { x / base } else { 1.0 };
        for r in &mut rows {
            if let Some(&(c, w)) = baseline.get(&(r.scenario, r.seed)) {
                r.impact = alpha * ratio(r.carbon_kg, c) + (1.0 - alpha) * ratio(r.water_m3, w);
            }
        }
        Self { alpha, rows }
    }

    pub fn row(&self, scenario: ScenarioId, configuration: Configuration, seed: u64) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.configuration == configuration && r.seed == seed)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            let delay = |c| r.mean_delay_ms.get(&c).copied().unwrap_or(0.0);
            w.serialize(CsvRow {
                scenario: r.scenario,
                configuration: r.configuration,
                seed: r.seed,
                cycles: r.cycles,
                carbon_kg: r.carbon_kg,
                migration_kg: r.migration_kg,
                water_m3: r.water_m3,
                impact: r.impact,
                slo_violations: r.slo_violations,
                infeasible_cycles: r.infeasible_cycles,
                infeasible_in_stress: r.infeasible_in_stress,
                infeasible_outside_stress: r.infeasible_outside_stress,
                alert_cycles: r.alert_cycles,
                hold_cycles: r.hold_cycles,
                moves: r.moves,
                certificates: r.certificates,
                certificates_with_water: r.certificates_with_water,
                delay_training_ms: delay(WorkloadClass::Training),
                delay_inference_ms: delay(WorkloadClass::Inference),
                delay_batch_ms: delay(WorkloadClass::Batch),
                max_solve_secs: r.max_solve_secs,
            })
            .map_err(|e| Error::Invalid(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
    }

    /// The qualitative orderings, per scenario and seed, plus the invariants
    /// that hold on every scenario.
    pub fn orderings(&self) -> Vec<OrderingCheck> {
        let mut out = Vec::new();
        let keys: std::collections::BTreeSet<(ScenarioId, u64)> = self.rows.iter().map(|r| (r.scenario, r.seed)).collect();
        for (scenario, seed) in keys {
            let (Some(base), Some(co), Some(joint)) = (
                self.row(scenario, Configuration::Baseline, seed),
                self.row(scenario, Configuration::ComputeOnly, seed),
                self.row(scenario, Configuration::Joint, seed),
            ) else {
                continue;
            };
            let mut check = |name: &str, pass: bool, detail: String| {
                out.push(OrderingCheck { scenario, seed, name: name.to_string(), pass, detail });
            };
            check(
                "joint impact <= baseline",
                base.carbon_kg > 0.0 && joint.impact <= base.impact + 1e-9,
                format!("joint {:.4} baseline {:.4}", joint.impact, base.impact),
            );
            check(
                "joint has no SLO violations",
                joint.slo_violations == 0,
                format!("{} violations", joint.slo_violations),
            );
            let d = |r: &ReportRow| r.mean_delay_ms.get(&WorkloadClass::Inference).copied().unwrap_or(0.0);
            check(
                "inference delay not above baseline",
                d(joint) <= d(base) + 1e-9,
                format!("joint {:.3} ms baseline {:.3} ms", d(joint), d(base)),
            );
            match scenario {
                ScenarioId::A => {
                    let rel = (joint.impact - co.impact).abs() / co.impact.max(1e-12);
                    check(
                        "joint and compute-only perform similarly",
                        rel <= SIMILAR_IMPACT_TOL,
                        format!("relative gap {:.2}%", rel * 100.0),
                    );
                }
                ScenarioId::B => {
                    check(
                        "compute-only violates SLOs",
                        co.slo_violations >= 1,
                        format!("{} violations", co.slo_violations),
                    );
                    check(
                        "joint impact < baseline",
                        joint.impact < base.impact,
                        format!("joint {:.4} baseline {:.4}", joint.impact, base.impact),
                    );
                }
                ScenarioId::C => {
                    check(
                        "infeasible only under stress",
                        joint.infeasible_in_stress >= 1 && joint.infeasible_outside_stress == 0,
                        format!("{} in window, {} outside", joint.infeasible_in_stress, joint.infeasible_outside_stress),
                    );
                    check(
                        "every certificate contains a water cap",
                        joint.certificates >= 1 && joint.certificates_with_water == joint.certificates,
                        format!("{}/{} with water", joint.certificates_with_water, joint.certificates),
                    );
                }
            }
        }
        out
    }
}

/// Every seed and configuration of `spec`, spread over worker threads.
/// The merged report is sorted and does not depend on scheduling.
pub fn run_scenario(spec: &ScenarioSpec, options: &RunOptions) -> Result<ComparativeReport> {
    let mut jobs = Vec::new();
    for &seed in &spec.seeds {
        let built = build_scenario(spec, seed)?;
        for c in Configuration::ALL {
            jobs.push((built.clone(), c));
        }
    }
    let threads = match options.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(Vec::with_capacity(jobs.len()));
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some((built, c)) = jobs.get(i) else { break };
                let r = run_configuration(spec, built, *c, options);
                results.lock().expect("no worker panicked").push(r);
            });
        }
    });
    let rows = results.into_inner().expect("no worker panicked").into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ComparativeReport::new(options.alpha, rows))
}
