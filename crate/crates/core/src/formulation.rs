//! Builds the placement-and-routing MILP from a snapshot and a workload set.
//!
//! Binaries `x[i][k]` place workload `k` at site `i`. Routing uses one
//! continuous weight per admissible path from a candidate site to the
//! workload's demand endpoint; every such path individually meets the
//! latency budget, so traffic may be split freely across them. Gates fix
//! binaries to zero before the solve and every fixing is logged with the
//! constraint group it derives from, so infeasibility analysis can drop a
//! group and everything that group implied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::Sense;
use crate::model::{LatencyBudget, SiteId, TelemetrySnapshot, Workload, WorkloadId};
use crate::routing::{enumerate_admissible_paths, shortest_delays, Graph, Path};

pub const DEFAULT_HOP_LIMIT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintClass {
    CarbonGate,
    WaterCap,
    PowerCap,
    LatencyGate,
    LinkCap,
    Assignment,
    FlowBalance,
    NoGood,
}

impl ConstraintClass {
    /// Order in which infeasibility analysis tries dropping groups.
    pub const FILTER_ORDER: [ConstraintClass; 6] = [
        Self::CarbonGate,
        Self::WaterCap,
        Self::PowerCap,
        Self::LatencyGate,
        Self::LinkCap,
        Self::Assignment,
    ];

    pub fn prefix(self) -> &'static str {
        match self {
            Self::CarbonGate => "carbon",
            Self::WaterCap => "water",
            Self::PowerCap => "power",
            Self::LatencyGate => "latency",
            Self::LinkCap => "link",
            Self::Assignment => "assign",
            Self::FlowBalance => "flow",
            Self::NoGood => "nogood",
        }
    }
}

/// A labeled constraint group: one class applied to one site, workload,
/// edge or cut.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupId {
    pub class: ConstraintClass,
    /// Site, workload or cut index, or the pair's source site.
    pub index: usize,
    /// Edge head or workload, for two-index groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<usize>,
}

impl GroupId {
    pub fn new(class: ConstraintClass, index: usize) -> Self {
        Self {
            class,
            index,
            second: None,
        }
    }

    pub fn pair(class: ConstraintClass, a: usize, b: usize) -> Self {
        Self {
            class,
            index: a,
            second: Some(b),
        }
    }

    /// Relaxable groups are the ones infeasibility analysis may drop.
    pub fn relaxable(&self) -> bool {
        !matches!(self.class, ConstraintClass::FlowBalance | ConstraintClass::NoGood)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateReason {
    /// Grid intensity above the site ceiling.
    Carbon,
    /// Workload power alone exceeds the site power cap.
    Power,
    /// Workload water draw alone exceeds the site permit.
    Water,
    /// Shortest one-way delay exceeds the effective budget.
    Latency,
    /// Migration overhead leaves no latency budget.
    MigrationBudget,
    /// A short enough path exists only beyond the hop limit.
    HopLimit,
    /// No path at all from the site to the demand endpoint.
    Unreachable,
    /// A non-portable workload stays at its incumbent site.
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub site: usize,
    pub workload: usize,
    pub reason: GateReason,
    /// Group the fixing derives from; `None` for structural fixings.
    pub group: Option<GroupId>,
}

/// Min-max window for objective normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationWindow {
    pub carbon_min: f64,
    pub carbon_max: f64,
    pub water_min: f64,
    pub water_max: f64,
}

impl NormalizationWindow {
    pub fn from_snapshot(snapshot: &TelemetrySnapshot) -> Self {
        Self::from_snapshots(std::iter::once(snapshot))
    }

    pub fn from_snapshots<'a>(snapshots: impl IntoIterator<Item = &'a TelemetrySnapshot>) -> Self {
        let mut w = Self {
            carbon_min: f64::INFINITY,
            carbon_max: f64::NEG_INFINITY,
            water_min: f64::INFINITY,
            water_max: f64::NEG_INFINITY,
        };
        for snap in snapshots {
            for s in &snap.sites {
                w.include(s.effective_carbon_intensity(), s.water_intensity);
            }
        }
        if !w.carbon_min.is_finite() {
            w = Self {
                carbon_min: 0.0,
                carbon_max: 0.0,
                water_min: 0.0,
                water_max: 0.0,
            };
        }
        w
    }

    pub fn include(&mut self, carbon: f64, water: f64) {
        self.carbon_min = self.carbon_min.min(carbon);
        self.carbon_max = self.carbon_max.max(carbon);
        self.water_min = self.water_min.min(water);
        self.water_max = self.water_max.max(water);
    }

    pub fn carbon(&self, value: f64) -> f64 {
        scale(value, self.carbon_min, self.carbon_max)
    }

    pub fn water(&self, value: f64) -> f64 {
        scale(value, self.water_min, self.water_max)
    }
}

/// Degenerate windows map to zero.
fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi - lo <= 1e-12 {
        0.0
    } else {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Weighted normalized carbon and water.
    #[default]
    Sustainability,
    /// Total shortest one-way delay to each demand endpoint.
    Latency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NetworkView {
    /// Real delays and capacities.
    #[default]
    Physical,
    /// Every path is equivalent: zero delay, unbounded capacity.
    Equivalent,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub alpha: f64,
    pub hop_limit: usize,
    pub window: Option<NormalizationWindow>,
    /// Current placement; moves away from it pay migration overheads.
    pub incumbent: Option<BTreeMap<WorkloadId, SiteId>>,
    /// Adds the network transport carbon term to the objective.
    pub transport_term: bool,
    /// Carbon gate and water rows.
    pub sustainability: bool,
    pub objective: ObjectiveKind,
    pub network: NetworkView,
    /// Groups left out of the instance.
    pub relaxed: BTreeSet<GroupId>,
    /// Assignment patterns to exclude, as (site, workload) index pairs.
    pub cuts: Vec<Vec<(usize, usize)>>,
    /// Drop dominated paths and substitute single-route flows into the binaries.
    pub presolve: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            hop_limit: DEFAULT_HOP_LIMIT,
            window: None,
            incumbent: None,
            transport_term: false,
            sustainability: true,
            objective: ObjectiveKind::Sustainability,
            network: NetworkView::Physical,
            relaxed: BTreeSet::new(),
            cuts: Vec::new(),
            presolve: true,
        }
    }
}

impl BuildOptions {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Binary {
    pub site: usize,
    pub workload: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathVar {
    pub workload: usize,
    pub source: usize,
    pub path: Path,
    /// Edge indices of `path` in the instance graph.
    pub edges: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub group: GroupId,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableCounts {
    /// N * M before gating.
    pub binaries_nominal: usize,
    /// Surviving binaries after gating.
    pub binaries: usize,
    /// Arc-flow equivalent |E| * M.
    pub continuous_nominal: usize,
    /// Path-weight columns actually built.
    pub path_weights: usize,
}

/// A labeled constraint system ready for the solver.
#[derive(Debug, Clone)]
pub struct MilpInstance {
    pub site_ids: Vec<SiteId>,
    pub workload_ids: Vec<WorkloadId>,
    pub graph: Graph,
    pub binaries: Vec<Binary>,
    /// `binary_of[k][i]` is the column of `x[i][k]` when it survived gating.
    pub binary_of: Vec<Vec<Option<usize>>>,
    pub paths: Vec<PathVar>,
    /// Single-route flows folded into their binary: rate = traffic * x.
    pub fixed_routes: Vec<PathVar>,
    /// Per column, binaries first then path weights.
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub gate_log: Vec<GateRecord>,
    /// Relaxable groups present in the instance.
    pub groups: Vec<GroupId>,
    pub counts: VariableCounts,
    pub alpha: f64,
    pub window: NormalizationWindow,
    /// Migration carbon [gCO2eq] of each surviving binary, zero when not a move.
    pub migration_carbon: Vec<f64>,
    /// Grid carbon [gCO2eq/h] and water [L/h] rates of each surviving binary.
    pub carbon_rate: Vec<f64>,
    pub water_rate: Vec<f64>,
    pub traffic: Vec<f64>,
    pub notes: Vec<String>,
}

impl MilpInstance {
    pub fn num_sites(&self) -> usize {
        self.site_ids.len()
    }

    pub fn num_workloads(&self) -> usize {
        self.workload_ids.len()
    }

    pub fn num_columns(&self) -> usize {
        self.binaries.len() + self.paths.len()
    }

    pub fn path_column(&self, p: usize) -> usize {
        self.binaries.len() + p
    }

    /// Some workload has no surviving site.
    pub fn trivially_infeasible(&self) -> bool {
        self.binary_of.iter().any(|sites| sites.iter().all(Option::is_none))
            && self
                .rows
                .iter()
                .any(|r| r.group.class == ConstraintClass::Assignment && r.coeffs.is_empty())
    }

    pub fn label(&self, group: &GroupId) -> String {
        let site = |i: usize| sanitize(&self.site_ids[i].0);
        let wl = |k: usize| sanitize(&self.workload_ids[k].0);
        let p = group.class.prefix();
        match group.class {
            ConstraintClass::CarbonGate | ConstraintClass::WaterCap | ConstraintClass::PowerCap => {
                format!("{p}_{}", site(group.index))
            }
            ConstraintClass::LatencyGate | ConstraintClass::Assignment => {
                format!("{p}_{}", wl(group.index))
            }
            ConstraintClass::LinkCap => {
                let e = &self.graph.edges()[group.index];
                format!("{p}_{}_{}", site(e.from), site(e.to))
            }
            ConstraintClass::FlowBalance => {
                format!("{p}_{}_{}", site(group.index), wl(group.second.unwrap_or(0)))
            }
            ConstraintClass::NoGood => format!("{p}_{}", group.index),
        }
    }

    /// Assignment of a binary solution vector, as site per workload.
    pub fn assignment_of(&self, x: &[f64]) -> Vec<Option<usize>> {
        let mut out = vec![None; self.num_workloads()];
        for (j, b) in self.binaries.iter().enumerate() {
            if x[j] > 0.5 {
                out[b.workload] = Some(b.site);
            }
        }
        out
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
        .collect()
}

/// Sites whose (blended) grid intensity exceeds the ceiling.
pub fn apply_carbon_gate(snapshot: &TelemetrySnapshot, workloads: &[Workload]) -> Vec<GateRecord> {
    let mut out = Vec::new();
    for (i, s) in snapshot.sites.iter().enumerate() {
        if !s.passes_carbon_gate() {
            for k in 0..workloads.len() {
                out.push(GateRecord {
                    site: i,
                    workload: k,
                    reason: GateReason::Carbon,
                    group: Some(GroupId::new(ConstraintClass::CarbonGate, i)),
                });
            }
        }
    }
    out
}

/// Pairs whose shortest one-way delay to the demand endpoint exceeds the
/// workload budget. `delays` comes from [`shortest_delays`].
pub fn apply_latency_gate(
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
    delays: &[Vec<f64>],
) -> Result<Vec<GateRecord>> {
    let mut out = Vec::new();
    for (k, w) in workloads.iter().enumerate() {
        let dest = snapshot
            .site_index(&w.dest)
            .ok_or_else(|| Error::UnknownSite(w.dest.0.clone()))?;
        for (i, row) in delays.iter().enumerate() {
            if !w.latency_slo.admits(row[dest]) {
                out.push(GateRecord {
                    site: i,
                    workload: k,
                    reason: GateReason::Latency,
                    group: Some(GroupId::new(ConstraintClass::LatencyGate, k)),
                });
            }
        }
    }
    Ok(out)
}

/// Pairs where the workload alone overruns the site's power cap or water
/// permit.
pub fn singleton_feasibility_fixes(
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
) -> Vec<GateRecord> {
    let mut out = Vec::new();
    for (i, s) in snapshot.sites.iter().enumerate() {
        for (k, w) in workloads.iter().enumerate() {
            if w.power > s.power_cap {
                out.push(GateRecord {
                    site: i,
                    workload: k,
                    reason: GateReason::Power,
                    group: Some(GroupId::new(ConstraintClass::PowerCap, i)),
                });
            } else if s.water_intensity * w.power > s.water_permit {
                out.push(GateRecord {
                    site: i,
                    workload: k,
                    reason: GateReason::Water,
                    group: Some(GroupId::new(ConstraintClass::WaterCap, i)),
                });
            }
        }
    }
    out
}

/// Data transfer delay [ms] of `state_gb` over `bandwidth_gbps`.
pub fn transfer_delay_ms(state_gb: f64, bandwidth_gbps: f64) -> f64 {
    8.0 * state_gb / bandwidth_gbps * 1e3
}

/// Transfer route from `from` to `to`: the direct link when provisioned,
/// otherwise the minimum-delay path. Returns (bottleneck residual
/// bandwidth [Gbps], summed energy per bit [J/bit]).
pub fn transfer_route(snapshot: &TelemetrySnapshot, from: usize, to: usize) -> Option<(f64, f64)> {
    if from == to {
        return Some((f64::INFINITY, 0.0));
    }
    let graph = Graph::from_snapshot(snapshot);
    if let Some(e) = graph.edge(from, to) {
        let l = &snapshot.links[e.link];
        return Some((l.residual_capacity(), l.energy_per_bit));
    }
    let n = graph.nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    dist[from] = 0.0;
    while let Some(u) = (0..n)
        .filter(|&v| !done[v] && dist[v].is_finite())
        .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
    {
        done[u] = true;
        for e in graph.out_edges(u) {
            if dist[u] + e.delay < dist[e.to] {
                dist[e.to] = dist[u] + e.delay;
                via[e.to] = graph.edge_index(u, e.to);
            }
        }
    }
    if !dist[to].is_finite() {
        return None;
    }
    let mut hops = Vec::new();
    let mut v = to;
    while let Some(e) = via[v] {
        hops.push(e);
        v = graph.edges()[e].from;
    }
    let mut bw = f64::INFINITY;
    let mut energy = 0.0;
    for e in hops {
        let l = &snapshot.links[graph.edges()[e].link];
        bw = bw.min(l.residual_capacity());
        energy += l.energy_per_bit;
    }
    Some((bw, energy))
}

/// Latency budget left at `to` after migrating `workload` from `from`:
/// `λ − δ_tx − δ_rh`. `Ok(None)` marks the destination inadmissible.
pub fn effective_latency_budget(
    workload: &Workload,
    from: &SiteId,
    to: &SiteId,
    snapshot: &TelemetrySnapshot,
) -> Result<Option<LatencyBudget>> {
    if from == to {
        return Ok(Some(workload.latency_slo));
    }
    if !workload.portable {
        return Err(Error::NotPortable(workload.id.0.clone()));
    }
    let i = snapshot
        .site_index(from)
        .ok_or_else(|| Error::UnknownSite(from.0.clone()))?;
    let j = snapshot
        .site_index(to)
        .ok_or_else(|| Error::UnknownSite(to.0.clone()))?;
    let (bw, _) = transfer_route(snapshot, i, j).unwrap_or((0.0, 0.0));
    migration_budget(workload, to, bw)
}

fn migration_budget(workload: &Workload, to: &SiteId, bandwidth: f64) -> Result<Option<LatencyBudget>> {
    let transfer = if workload.state_size == 0.0 {
        0.0
    } else if bandwidth > 0.0 {
        transfer_delay_ms(workload.state_size, bandwidth)
    } else {
        return Err(Error::NoTransferBandwidth(bandwidth));
    };
    let overhead = transfer + workload.rehydration_at(to);
    Ok(match workload.latency_slo {
        LatencyBudget::Unbounded => Some(LatencyBudget::Unbounded),
        LatencyBudget::Bounded(ms) => {
            let left = ms - overhead;
            (left > 0.0).then_some(LatencyBudget::Bounded(left))
        }
    })
}

/// One-time carbon [gCO2eq] of moving `state_gb` over a route with
/// `energy_per_bit` [J/bit], charged at the source grid intensity.
pub fn migration_carbon(source_carbon_intensity: f64, energy_per_bit: f64, state_gb: f64) -> f64 {
    let bits = 8.0 * state_gb * 1e9;
    let kwh = energy_per_bit * bits / 3.6e6;
    source_carbon_intensity * kwh
}

/// Builds the labeled instance.
pub fn build_instance(
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
    options: &BuildOptions,
) -> Result<MilpInstance> {
    if !(0.0..=1.0).contains(&options.alpha) || options.alpha.is_nan() {
        return Err(Error::AlphaOutOfRange(options.alpha));
    }
    let n = snapshot.sites.len();
    let m = workloads.len();
    let physical = Graph::from_snapshot(snapshot);
    let graph = match options.network {
        NetworkView::Physical => physical.clone(),
        NetworkView::Equivalent => physical.equivalent_paths(),
    };
    let delays = shortest_delays(&graph);
    let physical_delays = shortest_delays(&physical);
    let window = options
        .window
        .unwrap_or_else(|| NormalizationWindow::from_snapshot(snapshot));
    let relaxed = |g: &GroupId| options.relaxed.contains(g);
    let mut dests = Vec::with_capacity(m);
    for w in workloads {
        dests.push(
            snapshot
                .site_index(&w.dest)
                .ok_or_else(|| Error::UnknownSite(w.dest.0.clone()))?,
        );
    }
    let incumbent_site: Vec<Option<usize>> = workloads
        .iter()
        .map(|w| {
            options
                .incumbent
                .as_ref()
                .and_then(|inc| inc.get(&w.id))
                .and_then(|s| snapshot.site_index(s))
        })
        .collect();

    let mut gate_log = Vec::new();
    let mut binaries = Vec::new();
    let mut binary_of = vec![vec![None; n]; m];
    let mut candidate_paths: Vec<(usize, usize, Vec<Path>)> = Vec::new();
    let mut migration = Vec::new();
    let mut notes = Vec::new();

    for (k, w) in workloads.iter().enumerate() {
        let latency_group = GroupId::new(ConstraintClass::LatencyGate, k);
        let latency_on = !relaxed(&latency_group);
        for (i, site) in snapshot.sites.iter().enumerate() {
            let mut fix = |reason: GateReason, group: Option<GroupId>| {
                gate_log.push(GateRecord {
                    site: i,
                    workload: k,
                    reason,
                    group,
                });
            };
            let carbon_group = GroupId::new(ConstraintClass::CarbonGate, i);
            if options.sustainability && !relaxed(&carbon_group) && !site.passes_carbon_gate() {
                fix(GateReason::Carbon, Some(carbon_group));
                continue;
            }
            if let Some(home) = incumbent_site[k] {
                if !w.portable && home != i {
                    fix(GateReason::Pinned, None);
                    continue;
                }
            }
            let power_group = GroupId::new(ConstraintClass::PowerCap, i);
            if !relaxed(&power_group) && w.power > site.power_cap {
                fix(GateReason::Power, Some(power_group));
                continue;
            }
            let water_group = GroupId::new(ConstraintClass::WaterCap, i);
            if options.sustainability
                && !relaxed(&water_group)
                && site.water_intensity * w.power > site.water_permit
            {
                fix(GateReason::Water, Some(water_group));
                continue;
            }
            // Effective budget, tightened when placing here means migrating.
            let mut budget = if latency_on { w.latency_slo } else { LatencyBudget::Unbounded };
            let mut move_carbon = 0.0;
            if let Some(home) = incumbent_site[k] {
                if home != i {
                    let (bw, energy) = transfer_route(snapshot, home, i).unwrap_or((0.0, 0.0));
                    move_carbon = migration_carbon(
                        snapshot.sites[home].carbon_intensity,
                        energy,
                        w.state_size,
                    );
                    if latency_on {
                        match migration_budget(w, &site.id, bw) {
                            Ok(Some(b)) => budget = b,
                            Ok(None) | Err(_) => {
                                fix(GateReason::MigrationBudget, Some(latency_group.clone()));
                                continue;
                            }
                        }
                    }
                }
            }
            let dest = dests[k];
            if !budget.admits(delays[i][dest]) {
                let reason = if delays[i][dest].is_finite() {
                    GateReason::Latency
                } else {
                    GateReason::Unreachable
                };
                let group = (reason == GateReason::Latency).then(|| latency_group.clone());
                fix(reason, group);
                continue;
            }
            let paths = if i == dest || w.traffic <= 0.0 {
                Vec::new()
            } else {
                enumerate_admissible_paths(&graph, i, dest, budget, options.hop_limit)
            };
            if i != dest && paths.is_empty() {
                let any = enumerate_admissible_paths(&graph, i, dest, budget, options.hop_limit);
                if any.is_empty() {
                    fix(GateReason::HopLimit, latency_on.then(|| latency_group.clone()));
                    continue;
                }
            }
            binary_of[k][i] = Some(binaries.len());
            binaries.push(Binary { site: i, workload: k });
            migration.push(move_carbon);
            if !paths.is_empty() {
                candidate_paths.push((k, i, paths));
            }
        }
    }

    // Objective over binaries.
    let mut objective = Vec::with_capacity(binaries.len());
    let mut carbon_rate = Vec::with_capacity(binaries.len());
    let mut water_rate = Vec::with_capacity(binaries.len());
    for (j, b) in binaries.iter().enumerate() {
        let site = &snapshot.sites[b.site];
        let w = &workloads[b.workload];
        let gamma = site.effective_carbon_intensity();
        carbon_rate.push(gamma * w.power);
        water_rate.push(site.water_intensity * w.power);
        let c = match options.objective {
            ObjectiveKind::Sustainability => {
                options.alpha * window.carbon(gamma) * w.power
                    + (1.0 - options.alpha) * window.water(site.water_intensity) * w.power
                    + migration[j]
            }
            ObjectiveKind::Latency => physical_delays[b.site][dests[b.workload]],
        };
        objective.push(c);
    }

    let transport_of = |edges: &[usize]| -> f64 {
        if !options.transport_term {
            return 0.0;
        }
        edges
            .iter()
            .map(|&e| {
                let edge = &graph.edges()[e];
                let l = &snapshot.links[edge.link];
                // g/kWh * J/bit * 1e9 bit/s per Gbps * 3600 s/h / 3.6e6 J/kWh
                snapshot.sites[edge.from].effective_carbon_intensity() * l.energy_per_bit * 1e6
            })
            .sum()
    };
    let mut candidates: Vec<(usize, usize, Vec<(Path, Vec<usize>, f64)>)> = candidate_paths
        .into_iter()
        .map(|(k, i, ps)| {
            let ps = ps
                .into_iter()
                .map(|p| {
                    let edges = p.edge_indices(&graph);
                    let cost = transport_of(&edges);
                    (p, edges, cost)
                })
                .collect();
            (k, i, ps)
        })
        .collect();
    // Edges whose worst-case load (every workload that may use it sending all
    // traffic over it) exceeds capacity.
    let constrained = |cands: &[(usize, usize, Vec<(Path, Vec<usize>, f64)>)]| -> Vec<bool> {
        let mut users: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); graph.edges().len()];
        for (k, _, ps) in cands {
            for (_, edges, _) in ps {
                for &e in edges {
                    users[e].insert(*k, workloads[*k].traffic);
                }
            }
        }
        users
            .iter()
            .enumerate()
            .map(|(e, u)| {
                let cap = graph.edges()[e].capacity;
                cap.is_finite()
                    && !relaxed(&GroupId::new(ConstraintClass::LinkCap, e))
                    && u.values().sum::<f64>() > cap
            })
            .collect()
    };
    if options.presolve {
        // A path over unconstrained edges dominates every costlier path.
        loop {
            let tight = constrained(&candidates);
            let mut changed = false;
            for (_, _, ps) in &mut candidates {
                let free = ps
                    .iter()
                    .enumerate()
                    .filter(|(_, (_, edges, _))| edges.iter().all(|&e| !tight[e]))
                    .min_by(|(a, x), (b, y)| x.2.total_cmp(&y.2).then(x.0.delay.total_cmp(&y.0.delay)).then(a.cmp(b)))
                    .map(|(idx, (_, _, c))| (idx, *c));
                if let Some((keep, cost)) = free {
                    let before = ps.len();
                    let mut idx = 0;
                    ps.retain(|(_, _, c)| {
                        let k = idx == keep || *c < cost;
                        idx += 1;
                        k
                    });
                    changed |= ps.len() != before;
                }
            }
            if !changed {
                break;
            }
        }
    }

    let mut paths = Vec::new();
    let mut fixed_routes = Vec::new();
    let mut flow_rows = Vec::new();
    // Per edge: (column, coefficient) of every flow term crossing it.
    let mut through: Vec<Vec<(usize, f64, usize)>> = vec![Vec::new(); graph.edges().len()];
    for (k, i, ps) in candidates {
        let x = binary_of[k][i].expect("candidate has a binary");
        let rho = workloads[k].traffic;
        if options.presolve && ps.len() == 1 {
            let (p, edges, cost) = ps.into_iter().next().expect("one path");
            objective[x] += cost * rho;
            for &e in &edges {
                through[e].push((x, rho, k));
            }
            fixed_routes.push(PathVar {
                workload: k,
                source: i,
                path: p,
                edges,
            });
            continue;
        }
        let mut coeffs = Vec::with_capacity(ps.len() + 1);
        for (p, edges, cost) in ps {
            let col = binaries.len() + paths.len();
            coeffs.push((col, 1.0));
            objective.push(cost);
            for &e in &edges {
                through[e].push((col, 1.0, k));
            }
            paths.push(PathVar {
                workload: k,
                source: i,
                path: p,
                edges,
            });
        }
        coeffs.push((x, -rho));
        flow_rows.push(Row {
            group: GroupId::pair(ConstraintClass::FlowBalance, i, k),
            coeffs,
            sense: Sense::Eq,
            rhs: 0.0,
        });
    }
    // Path columns follow the binaries; objective entries were pushed in order.
    debug_assert_eq!(objective.len(), binaries.len() + paths.len());

    let mut rows = Vec::new();
    let mut groups = Vec::new();
    for k in 0..m {
        let g = GroupId::new(ConstraintClass::Assignment, k);
        if relaxed(&g) {
            continue;
        }
        let coeffs: Vec<(usize, f64)> = binary_of[k].iter().flatten().map(|&j| (j, 1.0)).collect();
        groups.push(g.clone());
        rows.push(Row {
            group: g,
            coeffs,
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    for (i, site) in snapshot.sites.iter().enumerate() {
        let placed: Vec<(usize, f64)> = (0..m)
            .filter_map(|k| binary_of[k][i].map(|j| (j, workloads[k].power)))
            .collect();
        let load: f64 = placed.iter().map(|(_, p)| p).sum();
        let g = GroupId::new(ConstraintClass::PowerCap, i);
        if !relaxed(&g) && load > site.power_cap {
            groups.push(g.clone());
            rows.push(Row {
                group: g,
                coeffs: placed.clone(),
                sense: Sense::Le,
                rhs: site.power_cap,
            });
        }
        let g = GroupId::new(ConstraintClass::WaterCap, i);
        if options.sustainability && !relaxed(&g) && load * site.water_intensity > site.water_permit {
            groups.push(g.clone());
            rows.push(Row {
                group: g,
                coeffs: placed
                    .iter()
                    .map(|&(j, p)| (j, site.water_intensity * p))
                    .collect(),
                sense: Sense::Le,
                rhs: site.water_permit,
            });
        }
    }
    for (e, users) in through.into_iter().enumerate() {
        let cap = graph.edges()[e].capacity;
        let g = GroupId::new(ConstraintClass::LinkCap, e);
        if users.is_empty() || relaxed(&g) || !cap.is_finite() {
            continue;
        }
        let mut per_workload: BTreeMap<usize, f64> = BTreeMap::new();
        for &(_, _, k) in &users {
            per_workload.insert(k, workloads[k].traffic);
        }
        if per_workload.values().sum::<f64>() <= cap {
            continue;
        }
        groups.push(g.clone());
        rows.push(Row {
            group: g,
            coeffs: users.iter().map(|&(col, a, _)| (col, a)).collect(),
            sense: Sense::Le,
            rhs: cap,
        });
    }
    rows.extend(flow_rows);
    for (c, pattern) in options.cuts.iter().enumerate() {
        let cols: Option<Vec<usize>> = pattern
            .iter()
            .map(|&(i, k)| binary_of.get(k).and_then(|s| s.get(i).copied().flatten()))
            .collect();
        // A pattern touching a gated pair is already excluded.
        if let Some(cols) = cols {
            rows.push(Row {
                group: GroupId::new(ConstraintClass::NoGood, c),
                coeffs: cols.iter().map(|&j| (j, 1.0)).collect(),
                sense: Sense::Le,
                rhs: cols.len() as f64 - 1.0,
            });
        }
    }

    let mut gated_groups: BTreeSet<GroupId> = BTreeSet::new();
    for g in gate_log.iter().filter_map(|r| r.group.clone()) {
        if matches!(g.class, ConstraintClass::CarbonGate | ConstraintClass::LatencyGate) {
            gated_groups.insert(g);
        }
    }
    // Singleton fixes count toward their row group even when the row was omitted.
    for g in gate_log.iter().filter_map(|r| r.group.clone()) {
        if matches!(g.class, ConstraintClass::PowerCap | ConstraintClass::WaterCap) && !groups.contains(&g) {
            gated_groups.insert(g);
        }
    }
    groups.extend(gated_groups);
    groups.sort();
    groups.dedup();

    if options.incumbent.is_some() {
        notes.push(
            "migration carbon enters the objective at face value in gCO2eq, added to the normalized terms".into(),
        );
    }
    let counts = VariableCounts {
        binaries_nominal: n * m,
        binaries: binaries.len(),
        continuous_nominal: snapshot.links.len() * m,
        path_weights: paths.len(),
    };
    Ok(MilpInstance {
        site_ids: snapshot.sites.iter().map(|s| s.id.clone()).collect(),
        workload_ids: workloads.iter().map(|w| w.id.clone()).collect(),
        graph,
        binaries,
        binary_of,
        paths,
        fixed_routes,
        objective,
        rows,
        gate_log,
        groups,
        counts,
        alpha: options.alpha,
        window,
        migration_carbon: migration,
        carbon_rate,
        water_rate,
        traffic: workloads.iter().map(|w| w.traffic).collect(),
        notes,
    })
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.second {
            Some(b) => write!(f, "{:?}({}, {})", self.class, self.index, b),
            None => write!(f, "{:?}({})", self.class, self.index),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::*;
    use crate::model::WorkloadClass;

    #[test]
    fn carbon_gate_boundary() {
        let mut snap = complete(2, 1.0);
        snap.sites[0].carbon_intensity = 600.0;
        snap.sites[0].carbon_ceiling = 500.0;
        snap.sites[1].carbon_intensity = 500.0;
        snap.sites[1].carbon_ceiling = 500.0;
        let w = vec![workload("a", 1.0, "s0"), workload("b", 1.0, "s1")];
        let g = apply_carbon_gate(&snap, &w);
        assert_eq!(g.len(), 2);
        assert!(g.iter().all(|r| r.site == 0 && r.reason == GateReason::Carbon));
    }

    #[test]
    fn all_sites_gated_is_trivially_infeasible() {
        let mut snap = complete(2, 1.0);
        for s in &mut snap.sites {
            s.carbon_ceiling = 10.0;
        }
        let inst = build_instance(&snap, &[workload("a", 1.0, "s0")], &BuildOptions::default()).unwrap();
        assert!(inst.binaries.is_empty());
        assert!(inst.trivially_infeasible());
    }

    #[test]
    fn latency_gate_cases() {
        let snap = complete(3, 7.0);
        let mut w = workload("a", 1.0, "s0");
        w.latency_slo = LatencyBudget::Bounded(5.0);
        let batch = workload("b", 1.0, "s0");
        let d = shortest_delays(&Graph::from_snapshot(&snap));
        let g = apply_latency_gate(&snap, &[w, batch], &d).unwrap();
        let sites: Vec<usize> = g.iter().map(|r| r.site).collect();
        assert_eq!(sites, vec![1, 2]);
        assert!(g.iter().all(|r| r.workload == 0));
    }

    #[test]
    fn singleton_fixes() {
        let mut snap = complete(1, 1.0);
        snap.sites[0].power_cap = 500.0;
        assert_eq!(singleton_feasibility_fixes(&snap, &[workload("a", 600.0, "s0")]).len(), 1);
        snap.sites[0].power_cap = 1000.0;
        snap.sites[0].water_intensity = 2.0;
        snap.sites[0].water_permit = 900.0;
        let f = singleton_feasibility_fixes(&snap, &[workload("a", 500.0, "s0")]);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].reason, GateReason::Water);
        snap.sites[0].water_permit = 1e6;
        assert!(singleton_feasibility_fixes(&snap, &[workload("a", 500.0, "s0")]).is_empty());
    }

    fn migrating(lambda: f64, state: f64, rh: f64) -> Workload {
        let mut w = workload("m", 1.0, "s1");
        w.latency_slo = LatencyBudget::Bounded(lambda);
        w.state_size = state;
        w.rehydration = rh;
        w
    }

    #[test]
    fn migration_budgets() {
        let mut snap = complete(2, 1.0);
        snap.links[0].capacity = 100.0; // s0 -> s1
        // 8 * 0.25 GB / 100 Gbps = 20 ms
        let w = migrating(50.0, 0.25, 10.0);
        let b = effective_latency_budget(&w, &"s0".into(), &"s1".into(), &snap).unwrap();
        assert_eq!(b, Some(LatencyBudget::Bounded(20.0)));
        // 8 * 0.375 / 100 = 30 ms
        let w = migrating(50.0, 0.375, 0.0);
        let b = effective_latency_budget(&w, &"s0".into(), &"s1".into(), &snap).unwrap();
        let Some(LatencyBudget::Bounded(ms)) = b else { panic!() };
        assert!((ms - 20.0).abs() < 1e-12);
        assert_eq!(transfer_delay_ms(100.0, 100.0), 8000.0);
        let w = migrating(50.0, 100.0, 0.0);
        assert_eq!(
            effective_latency_budget(&w, &"s0".into(), &"s1".into(), &snap).unwrap(),
            None
        );
        let mut pinned = migrating(50.0, 1.0, 0.0);
        pinned.portable = false;
        pinned.class = WorkloadClass::Training;
        assert!(matches!(
            effective_latency_budget(&pinned, &"s0".into(), &"s1".into(), &snap),
            Err(Error::NotPortable(_))
        ));
    }

    #[test]
    fn migration_carbon_units() {
        assert_eq!(migration_carbon(400.0, 1e-12, 0.0), 0.0);
        let g = migration_carbon(400.0, 1e-12, 100.0);
        // 0.8 J = 0.8 / 3.6e6 kWh at 400 g/kWh
        let expected = 400.0 * 0.8 / 3.6e6;
        assert!((g - expected).abs() < 1e-18);
        assert!((g - 8.9e-5).abs() < 1e-6);
    }

    #[test]
    fn alpha_must_be_in_range() {
        let snap = complete(1, 1.0);
        let err = build_instance(&snap, &[], &BuildOptions::with_alpha(1.5)).unwrap_err();
        assert!(matches!(err, Error::AlphaOutOfRange(_)));
        let ok = build_instance(&snap, &[], &BuildOptions::with_alpha(1.0)).unwrap();
        assert!(ok.binaries.is_empty() && ok.rows.is_empty());
    }

    #[test]
    fn nominal_counts_for_complete_digraphs() {
        for (n, m, cont) in [(4, 10, 120), (6, 15, 450), (8, 20, 1120)] {
            let snap = complete(n, 1.0);
            let w: Vec<Workload> = (0..m).map(|k| workload(&format!("w{k}"), 1.0, "s0")).collect();
            let inst = build_instance(&snap, &w, &BuildOptions::default()).unwrap();
            assert_eq!(inst.counts.continuous_nominal, cont);
            assert!(inst.counts.binaries <= n * m);
        }
    }

    #[test]
    fn normalized_coefficients() {
        let mut snap = complete(2, 1.0);
        snap.sites[0].carbon_intensity = 100.0;
        snap.sites[1].carbon_intensity = 500.0;
        let inst = build_instance(&snap, &[workload("a", 1.0, "s0")], &BuildOptions::with_alpha(1.0)).unwrap();
        assert_eq!(inst.objective, vec![0.0, 1.0]);
        let w = NormalizationWindow::from_snapshot(&complete(3, 1.0));
        assert_eq!(w.carbon(200.0), 0.0);
    }

    #[test]
    fn flow_rows_link_paths_to_binaries() {
        let snap = complete(3, 1.0);
        let mut w = workload("a", 1.0, "s0");
        w.traffic = 10.0;
        let full = BuildOptions {
            presolve: false,
            ..BuildOptions::default()
        };
        let inst = build_instance(&snap, &[w.clone()], &full).unwrap();
        // Sources s1 and s2 each have 1 direct + 1 two-hop path.
        assert_eq!(inst.paths.len(), 4);
        let flows: Vec<&Row> = inst
            .rows
            .iter()
            .filter(|r| r.group.class == ConstraintClass::FlowBalance)
            .collect();
        assert_eq!(flows.len(), 2);
        for r in flows {
            assert_eq!(r.coeffs.len(), 3);
            assert_eq!(r.coeffs.last().unwrap().1, -10.0);
        }
        assert_eq!(inst.label(&GroupId::new(ConstraintClass::Assignment, 0)), "assign_a");
        // Ample capacity: presolve keeps the direct route only, folded into x.
        let pre = build_instance(&snap, &[w], &BuildOptions::default()).unwrap();
        assert!(pre.paths.is_empty());
        assert_eq!(pre.fixed_routes.len(), 2);
        assert!(pre.fixed_routes.iter().all(|r| r.path.hops() == 1));
    }
}
