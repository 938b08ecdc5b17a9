//! Independent full-constraint check of a placement against raw inputs.
//!
//! Works from the snapshot and workload list only; nothing from the built
//! instance is trusted. Binary-side sums are checked with a relative 1e-9
//! slack for float summation, continuous flows within 1e-7.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::formulation::effective_latency_budget;
use crate::model::{LatencyBudget, Placement, SiteId, TelemetrySnapshot, Workload, WorkloadId};

pub const FLOW_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViolationKind {
    CarbonGate,
    WaterCap,
    Assignment,
    PowerCap,
    Latency,
    MigrationLatency,
    LinkCap,
    FlowBalance,
    Linking,
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.detail)
    }
}

/// What the placement is checked against.
#[derive(Debug, Clone, Default)]
pub struct VerifyContext<'a> {
    /// Placement in force before this one; moves tighten latency budgets.
    pub incumbent: Option<&'a BTreeMap<WorkloadId, SiteId>>,
    /// Workloads whose assignment was deliberately dropped.
    pub unassigned_ok: &'a [WorkloadId],
}

fn slack(rhs: f64) -> f64 {
    1e-9 * rhs.abs().max(1.0)
}

/// Minimum one-way delay from `from` to every node over usable links.
fn dijkstra(snapshot: &TelemetrySnapshot, from: usize) -> Vec<f64> {
    let n = snapshot.sites.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[from] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n)
            .filter(|&v| !done[v] && dist[v].is_finite())
            .min_by(|&a, &b| dist[a].total_cmp(&dist[b]))
        else {
            break;
        };
        done[u] = true;
        for l in snapshot.links.iter().filter(|l| !l.alarmed && l.from == snapshot.sites[u].id) {
            if let Some(v) = snapshot.site_index(&l.to) {
                let d = dist[u] + l.delay;
                if d < dist[v] {
                    dist[v] = d;
                }
            }
        }
    }
    dist
}

/// Every hard-constraint violation of `placement`. Empty means compliant.
pub fn verify_placement(
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
    placement: &Placement,
    ctx: &VerifyContext<'_>,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, detail: String| out.push(Violation { kind, detail });
    let n = snapshot.sites.len();
    let mut load = vec![0.0; n];

    for id in placement.assignment.keys() {
        if !workloads.iter().any(|w| &w.id == id) {
            push(ViolationKind::Assignment, format!("unknown workload {id} placed"));
        }
    }

    let mut site_of: Vec<Option<usize>> = Vec::with_capacity(workloads.len());
    for w in workloads {
        let placed = placement.assignment.get(&w.id).map(|s| (s, snapshot.site_index(s)));
        match placed {
            None => {
                if !ctx.unassigned_ok.contains(&w.id) {
                    push(ViolationKind::Assignment, format!("{} not placed", w.id));
                }
                site_of.push(None);
            }
            Some((s, None)) => {
                push(ViolationKind::Assignment, format!("{} placed at unknown site {s}", w.id));
                site_of.push(None);
            }
            Some((_, Some(i))) => {
                load[i] += w.power;
                site_of.push(Some(i));
            }
        }
    }

    for (i, site) in snapshot.sites.iter().enumerate() {
        let used = site_of.iter().any(|s| *s == Some(i));
        if used && site.effective_carbon_intensity() > site.carbon_ceiling {
            push(
                ViolationKind::CarbonGate,
                format!(
                    "{}: intensity {} above ceiling {}",
                    site.id,
                    site.effective_carbon_intensity(),
                    site.carbon_ceiling
                ),
            );
        }
        if load[i] > site.power_cap + slack(site.power_cap) {
            push(
                ViolationKind::PowerCap,
                format!("{}: load {} kW above cap {}", site.id, load[i], site.power_cap),
            );
        }
        let draw = site.water_intensity * load[i];
        if draw > site.water_permit + slack(site.water_permit) {
            push(
                ViolationKind::WaterCap,
                format!("{}: draw {} L/h above permit {}", site.id, draw, site.water_permit),
            );
        }
    }

    // Arc flows per workload, and the arc totals implied by the path list.
    let mut arc: BTreeMap<(&WorkloadId, usize, usize), f64> = BTreeMap::new();
    for f in &placement.flows {
        match (snapshot.site_index(&f.from), snapshot.site_index(&f.to)) {
            (Some(a), Some(b)) => *arc.entry((&f.workload, a, b)).or_default() += f.rate,
            _ => push(ViolationKind::FlowBalance, format!("flow on unknown arc {}->{}", f.from, f.to)),
        }
        if f.rate < -FLOW_TOL {
            push(ViolationKind::FlowBalance, format!("negative flow {} on {}->{}", f.rate, f.from, f.to));
        }
    }
    let mut from_paths: BTreeMap<(&WorkloadId, usize, usize), f64> = BTreeMap::new();

    for (k, w) in workloads.iter().enumerate() {
        let Some(i) = site_of[k] else { continue };
        let Some(d) = snapshot.site_index(&w.dest) else {
            push(ViolationKind::Latency, format!("{}: unknown destination {}", w.id, w.dest));
            continue;
        };
        let mut budget = w.latency_slo;
        if let Some(home) = ctx.incumbent.and_then(|inc| inc.get(&w.id)) {
            if home != &snapshot.sites[i].id {
                if !w.portable {
                    push(ViolationKind::Pinned, format!("{} is not portable but moved", w.id));
                }
                match effective_latency_budget(w, home, &snapshot.sites[i].id, snapshot) {
                    Ok(Some(b)) => budget = b,
                    _ => {
                        push(
                            ViolationKind::MigrationLatency,
                            format!("{}: no latency budget left after migration", w.id),
                        );
                        continue;
                    }
                }
            }
        }
        let floor = dijkstra(snapshot, i)[d];
        if !budget.admits(floor) {
            push(
                ViolationKind::Latency,
                format!("{}: best delay {floor} ms exceeds budget {:?}", w.id, budget),
            );
        }
        let mut carried = 0.0;
        for p in placement.paths.iter().filter(|p| p.workload == w.id) {
            let idx: Option<Vec<usize>> = p.nodes.iter().map(|s| snapshot.site_index(s)).collect();
            let Some(idx) = idx else {
                push(ViolationKind::FlowBalance, format!("{}: path through unknown site", w.id));
                continue;
            };
            if idx.first() != Some(&i) || idx.last() != Some(&d) {
                push(ViolationKind::FlowBalance, format!("{}: path does not join {} to {}", w.id, i, d));
            }
            let mut seen = vec![false; n];
            let mut delay = 0.0;
            for &v in &idx {
                if std::mem::replace(&mut seen[v], true) {
                    push(ViolationKind::FlowBalance, format!("{}: path revisits a site", w.id));
                }
            }
            for pair in idx.windows(2) {
                let link = snapshot
                    .links
                    .iter()
                    .find(|l| !l.alarmed && l.from == snapshot.sites[pair[0]].id && l.to == snapshot.sites[pair[1]].id);
                match link {
                    Some(l) => delay += l.delay,
                    None => {
                        delay = f64::INFINITY;
                        push(ViolationKind::LinkCap, format!("{}: path uses a missing or alarmed link", w.id));
                    }
                }
                *from_paths.entry((&w.id, pair[0], pair[1])).or_default() += p.rate;
            }
            if p.rate > FLOW_TOL && !budget.admits(delay) {
                let kind = if budget == w.latency_slo {
                    ViolationKind::Latency
                } else {
                    ViolationKind::MigrationLatency
                };
                push(kind, format!("{}: path delay {delay} ms exceeds budget {:?}", w.id, budget));
            }
            carried += p.rate;
        }
        let demand = if i == d { 0.0 } else { w.traffic };
        if (carried - demand).abs() > FLOW_TOL * demand.max(1.0) {
            push(
                ViolationKind::FlowBalance,
                format!("{}: paths carry {carried}, demand {demand}", w.id),
            );
        }
        // Net outflow at every node.
        for v in 0..n {
            let out_f: f64 = arc.iter().filter(|((id, a, _), _)| *id == &w.id && *a == v).map(|(_, r)| r).sum();
            let in_f: f64 = arc.iter().filter(|((id, _, b), _)| *id == &w.id && *b == v).map(|(_, r)| r).sum();
            let want = if i == d {
                0.0
            } else if v == i {
                w.traffic
            } else if v == d {
                -w.traffic
            } else {
                0.0
            };
            if (out_f - in_f - want).abs() > FLOW_TOL * w.traffic.max(1.0) {
                push(
                    ViolationKind::FlowBalance,
                    format!("{} at {}: net outflow {} expected {want}", w.id, snapshot.sites[v].id, out_f - in_f),
                );
            }
        }
    }

    // Flow of unplaced workloads must be zero.
    for ((id, a, b), r) in &arc {
        let placed = workloads
            .iter()
            .position(|w| &&w.id == id)
            .and_then(|k| site_of[k])
            .is_some();
        if !placed && *r > FLOW_TOL {
            push(ViolationKind::Linking, format!("{id} routes {r} on {a}->{b} while unplaced"));
        }
    }
    for key in arc.keys().chain(from_paths.keys()) {
        let a = arc.get(key).copied().unwrap_or(0.0);
        let p = from_paths.get(key).copied().unwrap_or(0.0);
        if (a - p).abs() > FLOW_TOL * a.abs().max(1.0) {
            push(
                ViolationKind::Linking,
                format!("{} arc {}->{}: arc flow {a} vs path flow {p}", key.0, key.1, key.2),
            );
        }
    }

    let mut per_link: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for ((_, a, b), r) in &arc {
        *per_link.entry((*a, *b)).or_default() += r;
    }
    for ((a, b), total) in per_link {
        if total <= FLOW_TOL {
            continue;
        }
        let link = snapshot
            .links
            .iter()
            .find(|l| l.from == snapshot.sites[a].id && l.to == snapshot.sites[b].id);
        match link {
            Some(l) if !l.alarmed => {
                if total > l.residual_capacity() + FLOW_TOL * l.residual_capacity().max(1.0) {
                    push(
                        ViolationKind::LinkCap,
                        format!("{}->{}: {total} Gbps above residual {}", l.from, l.to, l.residual_capacity()),
                    );
                }
            }
            _ => push(
                ViolationKind::LinkCap,
                format!("{}->{} carries {total} without a usable link", snapshot.sites[a].id, snapshot.sites[b].id),
            ),
        }
    }
    out
}

/// True when every path of every workload meets its own SLO on the physical network.
pub fn slo_violations(snapshot: &TelemetrySnapshot, workloads: &[Workload], placement: &Placement) -> Vec<WorkloadId> {
    let mut bad = Vec::new();
    for w in workloads {
        let LatencyBudget::Bounded(_) = w.latency_slo else { continue };
        let Some(i) = placement.assignment.get(&w.id).and_then(|s| snapshot.site_index(s)) else {
            continue;
        };
        let Some(d) = snapshot.site_index(&w.dest) else { continue };
        if !w.latency_slo.admits(dijkstra(snapshot, i)[d]) {
            bad.push(w.id.clone());
        }
    }
    bad
}
