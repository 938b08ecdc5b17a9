//! Feasible-region analytics: membership, the downward-closed family of
//! feasible workload sets, infeasibility certificates and the green-but-far
//! site partition.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulation::{build_instance, BuildOptions, ConstraintClass, GroupId, MilpInstance};
use crate::milp::{solve_feasibility, SolveStatus};
use crate::model::{LatencyBudget, Placement, SiteId, TelemetrySnapshot, Workload, WorkloadClass, WorkloadId};
use crate::routing::{latency_radius, shortest_delays, Graph};
use crate::verify::{verify_placement, VerifyContext};

/// Largest universe `enumerate_fsor` accepts.
pub const UNIVERSE_GUARD: usize = 15;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Membership {
    pub feasible: bool,
    pub witness: Option<Placement>,
}

fn feasibility(
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
    options: &BuildOptions,
    budget_secs: f64,
) -> Result<(bool, Option<Placement>, MilpInstance)> {
    let inst = build_instance(snapshot, workloads, options)?;
    let out = solve_feasibility(&inst, budget_secs)?;
    match out.status {
        SolveStatus::Optimal => Ok((true, out.placement, inst)),
        SolveStatus::Infeasible => Ok((false, None, inst)),
        SolveStatus::Timeout => Err(Error::Invalid(format!(
            "feasibility undecided after {budget_secs} s ({} nodes)",
            out.nodes
        ))),
    }
}

/// Whether some placement and routing of `workloads` meets every hard
/// constraint; the witness is independently verified.
pub fn fsor_contains(
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
    options: &BuildOptions,
    budget_secs: f64,
) -> Result<Membership> {
    let (feasible, witness, _) = feasibility(snapshot, workloads, options, budget_secs)?;
    if let Some(p) = &witness {
        let ctx = VerifyContext {
            incumbent: options.incumbent.as_ref(),
            ..VerifyContext::default()
        };
        let violations = verify_placement(snapshot, workloads, p, &ctx);
        if !violations.is_empty() {
            return Err(Error::Invalid(format!("witness failed verification: {}", violations[0])));
        }
    }
    Ok(Membership { feasible, witness })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitePartition {
    pub interior: Vec<SiteId>,
    pub green_but_far: Vec<SiteId>,
    pub ineligible: Vec<SiteId>,
    /// Fiber reach of the budget [km]; `None` when unbounded.
    pub radius_km: Option<f64>,
}

/// Splits sites by sustainability eligibility and latency admissibility for
/// one workload.
pub fn classify_green_but_far(snapshot: &TelemetrySnapshot, workload: &Workload) -> Result<SitePartition> {
    let dest = snapshot
        .site_index(&workload.dest)
        .ok_or_else(|| Error::UnknownSite(workload.dest.0.clone()))?;
    let delays = shortest_delays(&Graph::from_snapshot(snapshot));
    let mut part = SitePartition {
        interior: Vec::new(),
        green_but_far: Vec::new(),
        ineligible: Vec::new(),
        radius_km: latency_radius(workload.latency_slo),
    };
    for (i, site) in snapshot.sites.iter().enumerate() {
        let green = site.passes_carbon_gate()
            && site.water_intensity * workload.power <= site.water_permit
            && workload.power <= site.power_cap;
        let near = workload.latency_slo.admits(delays[i][dest]);
        let bucket = match (green, near) {
            (true, true) => &mut part.interior,
            (true, false) => &mut part.green_but_far,
            (false, _) => &mut part.ineligible,
        };
        bucket.push(site.id.clone());
    }
    Ok(part)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryVerdict {
    pub workloads: Vec<WorkloadId>,
    pub feasible: bool,
    /// Decided by downward closure or monotone pruning rather than a solve.
    pub inferred: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FsorReport {
    pub timestamp: i64,
    pub universe: Vec<WorkloadId>,
    pub queried: Vec<QueryVerdict>,
    /// Maximal feasible sets; the family is every subset of one of these.
    pub maximal: Vec<Vec<WorkloadId>>,
    /// Per class: sites admissible for at least one workload of the class.
    pub admissible_sites: BTreeMap<WorkloadClass, usize>,
    /// (workload, site) pairs that are sustainability-eligible but out of reach.
    pub green_but_far: Vec<(WorkloadId, SiteId)>,
    pub solves: usize,
}

impl FsorReport {
    /// Whether `set` belongs to the family.
    pub fn contains(&self, set: &[WorkloadId]) -> bool {
        self.maximal.iter().any(|m| set.iter().all(|w| m.contains(w)))
    }
}

/// Exact downward-closed family over `universe`, by subset size with monotone
/// pruning.
pub fn enumerate_fsor(
    snapshot: &TelemetrySnapshot,
    universe: &[Workload],
    options: &BuildOptions,
    budget_secs: f64,
) -> Result<FsorReport> {
    let u = universe.len();
    if u > UNIVERSE_GUARD {
        return Err(Error::UniverseGuard {
            size: u,
            limit: UNIVERSE_GUARD,
        });
    }
    let mut masks: Vec<u32> = (0..1u32 << u).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut feasible_sets: Vec<u32> = Vec::new();
    let mut infeasible_min: Vec<u32> = Vec::new();
    let mut queried = Vec::new();
    let mut solves = 0;
    let ids = |mask: u32| -> Vec<WorkloadId> {
        (0..u).filter(|b| mask >> b & 1 == 1).map(|b| universe[b].id.clone()).collect()
    };
    for mask in masks {
        // Some subset one element smaller is infeasible: so is this set.
        if infeasible_min.iter().any(|&f| f & mask == f) {
            queried.push(QueryVerdict {
                workloads: ids(mask),
                feasible: false,
                inferred: true,
            });
            continue;
        }
        let subset: Vec<Workload> = (0..u).filter(|b| mask >> b & 1 == 1).map(|b| universe[b].clone()).collect();
        let (ok, _, _) = feasibility(snapshot, &subset, options, budget_secs)?;
        solves += 1;
        queried.push(QueryVerdict {
            workloads: ids(mask),
            feasible: ok,
            inferred: false,
        });
        if ok {
            feasible_sets.push(mask);
        } else {
            infeasible_min.push(mask);
        }
    }
    let feasible: BTreeSet<u32> = feasible_sets.iter().copied().collect();
    let maximal: Vec<Vec<WorkloadId>> = feasible_sets
        .iter()
        .copied()
        .filter(|&m| (0..u).all(|b| m >> b & 1 == 1 || !feasible.contains(&(m | 1 << b))))
        .map(ids)
        .collect();

    let delays = shortest_delays(&Graph::from_snapshot(snapshot));
    let mut admissible: BTreeMap<WorkloadClass, BTreeSet<usize>> = BTreeMap::new();
    let mut green_but_far = Vec::new();
    for w in universe {
        let entry = admissible.entry(w.class).or_default();
        let Some(dest) = snapshot.site_index(&w.dest) else { continue };
        for (i, s) in snapshot.sites.iter().enumerate() {
            let green = s.passes_carbon_gate() && s.water_intensity * w.power <= s.water_permit && w.power <= s.power_cap;
            let near = w.latency_slo.admits(delays[i][dest]);
            if green && near {
                entry.insert(i);
            }
            if green && !near {
                green_but_far.push((w.id.clone(), s.id.clone()));
            }
        }
    }
    Ok(FsorReport {
        timestamp: snapshot.timestamp,
        universe: universe.iter().map(|w| w.id.clone()).collect(),
        queried,
        maximal,
        admissible_sites: admissible.into_iter().map(|(c, s)| (c, s.len())).collect(),
        green_but_far,
        solves,
    })
}

/// Investment lever a certificate group points at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lever {
    CarbonEligibility,
    WaterHeadroom,
    PowerCapacity,
    LatencyAdmissibility,
    NetworkCapacity,
    WorkloadDemand,
}

impl Lever {
    fn of(class: ConstraintClass) -> Self {
        match class {
            ConstraintClass::CarbonGate => Lever::CarbonEligibility,
            ConstraintClass::WaterCap => Lever::WaterHeadroom,
            ConstraintClass::PowerCap => Lever::PowerCapacity,
            ConstraintClass::LatencyGate => Lever::LatencyAdmissibility,
            ConstraintClass::LinkCap => Lever::NetworkCapacity,
            _ => Lever::WorkloadDemand,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Lever::CarbonEligibility => "carbon eligibility: too few sites under their carbon ceiling",
            Lever::WaterHeadroom => "water headroom: permits too tight for the power profile",
            Lever::PowerCapacity => "power capacity: eligible sites lack electrical headroom",
            Lever::LatencyAdmissibility => "latency admissibility: no compliant site within the delay radius",
            Lever::NetworkCapacity => "network capacity: links cannot carry the required traffic",
            Lever::WorkloadDemand => "workload demand: shed or defer one of these workloads",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateGroup {
    pub group: GroupId,
    pub label: String,
    pub lever: Lever,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    pub timestamp: i64,
    pub groups: Vec<CertificateGroup>,
    /// Text diagnosis, one line per lever involved.
    pub diagnosis: Vec<String>,
    pub solves: usize,
}

impl InfeasibilityCertificate {
    pub fn group_ids(&self) -> Vec<GroupId> {
        self.groups.iter().map(|g| g.group.clone()).collect()
    }

    pub fn has_class(&self, class: ConstraintClass) -> bool {
        self.groups.iter().any(|g| g.group.class == class)
    }
}

/// Every group that can bind for this snapshot and workload set, in filter
/// order. Groups that provably never bind are left out.
pub fn candidate_groups(snapshot: &TelemetrySnapshot, workloads: &[Workload], options: &BuildOptions) -> Vec<GroupId> {
    let mut out = Vec::new();
    let graph = Graph::from_snapshot(snapshot);
    let total_traffic: f64 = workloads.iter().map(|w| w.traffic).sum();
    for class in ConstraintClass::FILTER_ORDER {
        match class {
            ConstraintClass::CarbonGate if options.sustainability => {
                for (i, s) in snapshot.sites.iter().enumerate() {
                    if !s.passes_carbon_gate() {
                        out.push(GroupId::new(class, i));
                    }
                }
            }
            ConstraintClass::WaterCap if options.sustainability => {
                out.extend((0..snapshot.sites.len()).map(|i| GroupId::new(class, i)));
            }
            ConstraintClass::PowerCap => out.extend((0..snapshot.sites.len()).map(|i| GroupId::new(class, i))),
            ConstraintClass::LatencyGate => {
                for (k, w) in workloads.iter().enumerate() {
                    if matches!(w.latency_slo, LatencyBudget::Bounded(_)) {
                        out.push(GroupId::new(class, k));
                    }
                }
            }
            ConstraintClass::LinkCap if options.network == crate::formulation::NetworkView::Physical => {
                for (e, edge) in graph.edges().iter().enumerate() {
                    if edge.capacity < total_traffic {
                        out.push(GroupId::new(class, e));
                    }
                }
            }
            ConstraintClass::Assignment => out.extend((0..workloads.len()).map(|k| GroupId::new(class, k))),
            _ => {}
        }
    }
    out.retain(|g| !options.relaxed.contains(g));
    out
}

/// Minimal set of labeled groups that is jointly infeasible, by deletion
/// filtering in [`ConstraintClass::FILTER_ORDER`].
pub fn extract_iis(
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
    options: &BuildOptions,
    budget_secs: f64,
) -> Result<InfeasibilityCertificate> {
    let (ok, _, base) = feasibility(snapshot, workloads, options, budget_secs)?;
    let mut solves = 1;
    if ok {
        return Err(Error::NotInfeasible);
    }
    let universe = candidate_groups(snapshot, workloads, options);
    let mut dropped: BTreeSet<GroupId> = BTreeSet::new();
    let mut kept = Vec::new();
    for g in universe {
        let mut opts = options.clone();
        opts.relaxed.extend(dropped.iter().cloned());
        opts.relaxed.insert(g.clone());
        let (feasible, _, _) = feasibility(snapshot, workloads, &opts, budget_secs)?;
        solves += 1;
        if feasible {
            kept.push(g);
        } else {
            dropped.insert(g);
        }
    }
    let groups: Vec<CertificateGroup> = kept
        .into_iter()
        .map(|g| CertificateGroup {
            label: base.label(&g),
            lever: Lever::of(g.class),
            group: g,
        })
        .collect();
    let mut by_lever: BTreeMap<Lever, Vec<&str>> = BTreeMap::new();
    for g in &groups {
        by_lever.entry(g.lever).or_default().push(&g.label);
    }
    let diagnosis = by_lever
        .into_iter()
        .map(|(lever, labels)| format!("{} [{}]", lever.describe(), labels.join(", ")))
        .collect();
    Ok(InfeasibilityCertificate {
        timestamp: snapshot.timestamp,
        groups,
        diagnosis,
        solves,
    })
}

/// Re-solves with each certificate group dropped in turn, and with none.
/// True when the certificate is irreducible and infeasible.
pub fn check_certificate(
    snapshot: &TelemetrySnapshot,
    workloads: &[Workload],
    options: &BuildOptions,
    certificate: &InfeasibilityCertificate,
    budget_secs: f64,
) -> Result<bool> {
    let listed: BTreeSet<GroupId> = certificate.group_ids().into_iter().collect();
    let others: Vec<GroupId> = candidate_groups(snapshot, workloads, options)
        .into_iter()
        .filter(|g| !listed.contains(g))
        .collect();
    let mut opts = options.clone();
    opts.relaxed.extend(others);
    if feasibility(snapshot, workloads, &opts, budget_secs)?.0 {
        return Ok(false);
    }
    for g in &listed {
        let mut o = opts.clone();
        o.relaxed.insert(g.clone());
        if !feasibility(snapshot, workloads, &o, budget_secs)?.0 {
            return Ok(false);
        }
    }
    Ok(true)
}
