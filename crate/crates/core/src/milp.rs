//! Branch-and-bound over placement binaries, plus the exhaustive oracle.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::clock::Deadline;
use crate::error::{Error, Result};
use crate::formulation::{ConstraintClass, GroupId, MilpInstance, Row};
use crate::lp::{solve_lp, LpProblem, LpStatus, Sense};
use crate::model::{ArcFlow, PathFlow, Placement};

const INT_TOL: f64 = 1e-6;
/// LP-guided rounding runs on every n-th node taken from the queue.
const ROUNDING_EVERY: usize = 8;
const CUT_ROUNDS: usize = 30;
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Timeout,
}

/// Column values of an integral solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub values: Vec<f64>,
    pub objective: f64,
    /// Site per workload; `None` only when the workload's assignment row was relaxed.
    pub assignment: Vec<Option<usize>>,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub solution: Option<Solution>,
    pub placement: Option<Placement>,
    /// Best proven lower bound.
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_secs: f64,
    /// Groups present when the root was proven infeasible.
    pub infeasible_groups: Vec<GroupId>,
}

impl SolveOutcome {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// LP relaxation of the instance: binaries in [0, 1], path weights >= 0.
pub fn relaxation(instance: &MilpInstance) -> LpProblem {
    let nb = instance.binaries.len();
    let mut lp = LpProblem::new(instance.num_columns());
    lp.objective.clone_from(&instance.objective);
    for u in &mut lp.upper[..nb] {
        *u = 1.0;
    }
    for row in &instance.rows {
        lp.add_row(&row.coeffs, row.sense, row.rhs);
    }
    lp
}

/// Exclude every solution that matches `pattern`, a list of (site, workload)
/// index pairs.
pub fn add_nogood_cut(instance: &MilpInstance, pattern: &[(usize, usize)]) -> MilpInstance {
    let mut out = instance.clone();
    let cols: Option<Vec<usize>> = pattern
        .iter()
        .map(|&(i, k)| instance.binary_of.get(k).and_then(|s| s.get(i).copied().flatten()))
        .collect();
    if let Some(cols) = cols {
        let index = out
            .rows
            .iter()
            .filter(|r| r.group.class == ConstraintClass::NoGood)
            .count();
        out.rows.push(Row {
            group: GroupId::new(ConstraintClass::NoGood, index),
            coeffs: cols.iter().map(|&j| (j, 1.0)).collect(),
            sense: Sense::Le,
            rhs: cols.len() as f64 - 1.0,
        });
    }
    out
}

struct Node {
    bound: f64,
    seq: usize,
    fixed: Vec<(usize, f64)>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn prune_tol(incumbent: f64) -> f64 {
    1e-9 * incumbent.abs().max(1.0)
}

fn solve_node(base: &LpProblem, fixed: &[(usize, f64)]) -> Result<crate::lp::LpResult> {
    let mut lp = base.clone();
    for &(j, v) in fixed {
        lp.lower[j] = v;
        lp.upper[j] = v;
    }
    solve_lp(&lp)
}

/// Binary-only `<=` row with nonnegative coefficients; `row` indexes the
/// relaxation.
struct Knapsack {
    row: usize,
    items: Vec<(usize, f64)>,
    rhs: f64,
}

/// Items beyond this many free binaries skip capacity tightening.
const SUBSET_SUM_ITEMS: usize = 28;

fn half_sums(weights: &[f64], cap: f64) -> Vec<f64> {
    let mut sums = vec![0.0];
    for &a in weights {
        for i in 0..sums.len() {
            let s = sums[i] + a;
            if s <= cap {
                sums.push(s);
            }
        }
    }
    sums
}

/// Largest subset sum of `weights` not above `cap`, meeting in the middle.
fn max_subset_sum(weights: &[f64], cap: f64) -> f64 {
    let (l, r) = weights.split_at(weights.len() / 2);
    let left = half_sums(l, cap);
    let mut right = half_sums(r, cap);
    right.sort_by(f64::total_cmp);
    let mut best = 0.0f64;
    for a in left {
        let k = right.partition_point(|&b| a + b <= cap);
        if k > 0 {
            best = best.max(a + right[k - 1]);
        }
    }
    best
}

/// Node relaxation with every knapsack capacity lowered to the largest load
/// its free items can actually reach. A binary fixed to one implies zero for
/// the workload's other sites.
fn solve_node_tight(
    instance: &MilpInstance,
    base: &LpProblem,
    knapsacks: &[Knapsack],
    fixed: &[(usize, f64)],
) -> Result<crate::lp::LpResult> {
    let nb = instance.binaries.len();
    let mut state: Vec<Option<f64>> = vec![None; nb];
    for &(j, v) in fixed {
        state[j] = Some(v);
    }
    for &(j, v) in fixed {
        if v == 1.0 {
            let k = instance.binaries[j].workload;
            for other in instance.binary_of[k].iter().flatten() {
                if *other != j && state[*other].is_none() {
                    state[*other] = Some(0.0);
                }
            }
        }
    }
    let mut lp = base.clone();
    for (j, v) in state.iter().enumerate() {
        if let Some(v) = *v {
            lp.lower[j] = v;
            lp.upper[j] = v;
        }
    }
    for ks in knapsacks {
        let mut load = 0.0;
        let mut free = Vec::new();
        for &(j, a) in &ks.items {
            match state[j] {
                Some(v) => load += a * v,
                None => free.push(a),
            }
        }
        let cap = ks.rhs - load;
        if cap < 0.0 || free.len() > SUBSET_SUM_ITEMS || free.iter().sum::<f64>() <= cap {
            continue;
        }
        let slack = 1e-9 * ks.rhs.abs().max(1.0);
        let reach = load + max_subset_sum(&free, cap + slack);
        if reach < lp.rhs[ks.row] {
            lp.rhs[ks.row] = reach;
        }
    }
    solve_lp(&lp)
}

fn solve_with_fixings(base: &LpProblem, fixed: &[(usize, f64)]) -> Result<(LpStatus, Vec<f64>, f64)> {
    let r = solve_node(base, fixed)?;
    Ok((r.status, r.x, r.objective))
}

/// Extended cover inequalities violated by `x`, separated from every
/// binary-only `<=` row with nonnegative coefficients.
fn separate_covers(knapsacks: &[&Row], x: &[f64]) -> Vec<(Vec<usize>, f64)> {
    let mut cuts = Vec::new();
    for row in knapsacks {
        let items: Vec<(usize, f64)> = row.coeffs.iter().copied().filter(|&(_, a)| a > 0.0).collect();
        let total: f64 = items.iter().map(|&(_, a)| a).sum();
        if total <= row.rhs + 1e-9 {
            continue;
        }
        // Greedy minimum-weight cover: cheapest (1 - x) per unit of weight first.
        let mut order = items.clone();
        order.sort_by(|&(i, a), &(j, b)| ((1.0 - x[i]) / a).total_cmp(&((1.0 - x[j]) / b)).then(i.cmp(&j)));
        let mut cover = Vec::new();
        let mut weight = 0.0;
        for &(j, a) in &order {
            cover.push((j, a));
            weight += a;
            if weight > row.rhs + 1e-9 {
                break;
            }
        }
        if weight <= row.rhs + 1e-9 {
            continue;
        }
        // Drop items the cover does not need, largest slack first.
        cover.sort_by(|&(i, _), &(j, _)| x[i].total_cmp(&x[j]).then(i.cmp(&j)));
        let mut k = 0;
        while k < cover.len() {
            if weight - cover[k].1 > row.rhs + 1e-9 {
                weight -= cover[k].1;
                cover.remove(k);
            } else {
                k += 1;
            }
        }
        let size = cover.len() as f64;
        let amax = cover.iter().map(|&(_, a)| a).fold(0.0, f64::max);
        let mut cols: Vec<usize> = cover.iter().map(|&(j, _)| j).collect();
        for &(j, a) in &items {
            if a >= amax && !cols.contains(&j) {
                cols.push(j);
            }
        }
        let lhs: f64 = cols.iter().map(|&j| x[j]).sum();
        if lhs > size - 1.0 + 1e-6 {
            cols.sort_unstable();
            cuts.push((cols, size - 1.0));
        }
    }
    cuts
}

/// Binaries whose reduced cost alone lifts the bound to the incumbent keep
/// their current value in the whole subtree.
fn reduced_cost_fixings(
    nb: usize,
    fixed: &mut Vec<(usize, f64)>,
    lp: &crate::lp::LpResult,
    incumbent: f64,
) {
    if !incumbent.is_finite() || lp.reduced_costs.is_empty() {
        return;
    }
    let cutoff = incumbent - prune_tol(incumbent);
    let mut is_fixed = vec![false; nb];
    for &(j, _) in fixed.iter() {
        is_fixed[j] = true;
    }
    for j in 0..nb {
        if is_fixed[j] {
            continue;
        }
        let d = lp.reduced_costs[j];
        let x = lp.x[j];
        if x <= INT_TOL && d > 0.0 && lp.objective + d > cutoff {
            fixed.push((j, 0.0));
        } else if x >= 1.0 - INT_TOL && d < 0.0 && lp.objective - d > cutoff {
            fixed.push((j, 1.0));
        }
    }
}

/// Fix binaries to the rounded values and solve the remaining routing LP.
fn complete_integral(instance: &MilpInstance, base: &LpProblem, x: &[f64]) -> Result<Option<Solution>> {
    let fixed: Vec<(usize, f64)> = (0..instance.binaries.len())
        .map(|j| (j, x[j].round()))
        .collect();
    let (status, values, objective) = solve_with_fixings(base, &fixed)?;
    if status != LpStatus::Optimal {
        return Ok(None);
    }
    Ok(Some(Solution {
        assignment: instance.assignment_of(&values),
        values,
        objective,
    }))
}

/// Greedy start: cheapest admissible site per workload, heaviest first,
/// respecting binary-only rows; one relocation pass repairs a workload that
/// does not fit. With `guide` (an LP point), sites are tried in decreasing
/// LP value instead of increasing cost.
fn greedy(instance: &MilpInstance, base: &LpProblem, guide: Option<&[f64]>) -> Result<Option<Solution>> {
    let nb = instance.binaries.len();
    let m = instance.num_workloads();
    let binary_rows: Vec<&Row> = instance
        .rows
        .iter()
        .filter(|r| r.sense == Sense::Le && r.coeffs.iter().all(|&(j, _)| j < nb))
        .collect();
    let mut col_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nb];
    for (r, row) in binary_rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            col_rows[j].push((r, a));
        }
    }
    let mut activity = vec![0.0; binary_rows.len()];
    let fits = |activity: &[f64], j: usize| {
        col_rows[j]
            .iter()
            .all(|&(r, a)| activity[r] + a <= binary_rows[r].rhs + 1e-9)
    };
    let weight = |k: usize| -> f64 {
        instance.binary_of[k]
            .iter()
            .flatten()
            .flat_map(|&j| col_rows[j].iter().map(|&(_, a)| a.abs()))
            .fold(0.0, f64::max)
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)).then(a.cmp(&b)));
    let mut chosen: Vec<Option<usize>> = vec![None; m];
    let apply = |activity: &mut [f64], j: usize, sign: f64| {
        for &(r, a) in &col_rows[j] {
            activity[r] += sign * a;
        }
    };
    for &k in &order {
        let mut cands: Vec<usize> = instance.binary_of[k].iter().flatten().copied().collect();
        if cands.is_empty() {
            return Ok(None);
        }
        match guide {
            Some(x) => cands.sort_by(|&a, &b| {
                x[b].total_cmp(&x[a])
                    .then(instance.objective[a].total_cmp(&instance.objective[b]))
                    .then(a.cmp(&b))
            }),
            None => cands.sort_by(|&a, &b| instance.objective[a].total_cmp(&instance.objective[b]).then(a.cmp(&b))),
        }
        if let Some(&j) = cands.iter().find(|&&j| fits(&activity, j)) {
            apply(&mut activity, j, 1.0);
            chosen[k] = Some(j);
            continue;
        }
        // Repair: move one earlier workload to free room for the cheapest candidate.
        let mut repaired = false;
        'outer: for &j in &cands {
            for other in 0..m {
                let Some(cur) = chosen[other] else { continue };
                apply(&mut activity, cur, -1.0);
                if fits(&activity, j) {
                    apply(&mut activity, j, 1.0);
                    let alt = instance.binary_of[other]
                        .iter()
                        .flatten()
                        .copied()
                        .filter(|&a| a != cur)
                        .find(|&a| fits(&activity, a));
                    if let Some(a) = alt {
                        apply(&mut activity, a, 1.0);
                        chosen[other] = Some(a);
                        chosen[k] = Some(j);
                        repaired = true;
                        break 'outer;
                    }
                    apply(&mut activity, j, -1.0);
                }
                apply(&mut activity, cur, 1.0);
            }
        }
        if !repaired {
            return Ok(None);
        }
    }
    let mut x = vec![0.0; instance.num_columns()];
    for j in chosen.into_iter().flatten() {
        x[j] = 1.0;
    }
    complete_integral(instance, base, &x)
}

/// Certified branch-and-bound. Returns the incumbent and proven bound on
/// timeout.
pub fn solve(instance: &MilpInstance, budget_secs: f64) -> Result<SolveOutcome> {
    solve_with_incumbent(instance, budget_secs, None)
}

/// As [`solve`], seeded with a known feasible binary assignment (site per
/// workload) when one is available.
pub fn solve_with_incumbent(
    instance: &MilpInstance,
    budget_secs: f64,
    hint: Option<&[Option<usize>]>,
) -> Result<SolveOutcome> {
    let deadline = Deadline::after_secs(budget_secs);
    let base = relaxation(instance);
    let nb = instance.binaries.len();
    let mut nodes = 0usize;

    let finish = |status, incumbent: Option<Solution>, bound: f64, nodes: usize| {
        let gap = match (&incumbent, status) {
            (_, SolveStatus::Optimal) => 0.0,
            (Some(s), _) => ((s.objective - bound) / s.objective.abs().max(1.0)).max(0.0),
            (None, _) => f64::INFINITY,
        };
        let placement = incumbent.as_ref().map(|s| placement_of(instance, s));
        let infeasible_groups = if status == SolveStatus::Infeasible {
            instance.groups.clone()
        } else {
            Vec::new()
        };
        Ok(SolveOutcome {
            status,
            solution: incumbent,
            placement,
            bound,
            gap,
            nodes,
            wall_secs: deadline.elapsed_secs(),
            infeasible_groups,
        })
    };

    if instance.trivially_infeasible() {
        return finish(SolveStatus::Infeasible, None, f64::INFINITY, 0);
    }

    let mut incumbent = greedy(instance, &base, None)?;
    if let Some(h) = hint {
        let mut x = vec![0.0; instance.num_columns()];
        let valid = h.iter().enumerate().all(|(k, s)| match s {
            Some(i) => match instance.binary_of[k][*i] {
                Some(j) => {
                    x[j] = 1.0;
                    true
                }
                None => false,
            },
            None => true,
        });
        if valid {
            if let Some(s) = complete_integral(instance, &base, &x)? {
                if incumbent.as_ref().is_none_or(|c| s.objective < c.objective - prune_tol(c.objective)) {
                    incumbent = Some(s);
                }
            }
        }
    }

    let mut base = base;
    let tight: Vec<Knapsack> = instance
        .rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.sense == Sense::Le && r.coeffs.iter().all(|&(j, a)| j < nb && a >= 0.0))
        .map(|(row, r)| Knapsack {
            row,
            items: r.coeffs.clone(),
            rhs: r.rhs,
        })
        .collect();
    let mut root = solve_node_tight(instance, &base, &tight, &[])?;
    nodes += 1;
    // Root cut loop: binary knapsack rows tightened by cover inequalities.
    let knapsacks: Vec<&Row> = tight.iter().map(|k| &instance.rows[k.row]).collect();
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..CUT_ROUNDS {
        if root.status != LpStatus::Optimal {
            break;
        }
        let fresh: Vec<_> = separate_covers(&knapsacks, &root.x)
            .into_iter()
            .filter(|(cols, _)| seen.insert(cols.clone()))
            .collect();
        if fresh.is_empty() {
            break;
        }
        for (cols, rhs) in fresh {
            let coeffs: Vec<(usize, f64)> = cols.iter().map(|&j| (j, 1.0)).collect();
            base.add_row(&coeffs, Sense::Le, rhs);
        }
        root = solve_node_tight(instance, &base, &tight, &[])?;
        nodes += 1;
    }
    let (status, obj) = (root.status, root.objective);
    match status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return finish(SolveStatus::Infeasible, None, f64::INFINITY, nodes);
        }
        LpStatus::Unbounded | LpStatus::NumericFailure => {
            return Err(Error::Invalid(format!("root relaxation ended {status:?}")));
        }
    }
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    let mut popped = 0usize;
    let mut root_fixed = Vec::new();
    reduced_cost_fixings(nb, &mut root_fixed, &root, incumbent.as_ref().map_or(f64::INFINITY, |c| c.objective));
    heap.push(Node {
        bound: obj,
        seq,
        fixed: root_fixed,
        x: root.x,
    });

    while let Some(node) = heap.pop() {
        if let Some(inc) = &incumbent {
            if node.bound >= inc.objective - prune_tol(inc.objective) {
                heap.clear();
                break;
            }
        }
        if deadline.expired() {
            let bound = node.bound.min(heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min));
            return finish(SolveStatus::Timeout, incumbent, bound, nodes);
        }
        popped += 1;
        if popped % ROUNDING_EVERY == 1 {
            if let Some(sol) = greedy(instance, &base, Some(&node.x))? {
                if incumbent
                    .as_ref()
                    .is_none_or(|c| sol.objective < c.objective - prune_tol(c.objective))
                {
                    incumbent = Some(sol);
                }
                let inc = incumbent.as_ref().map_or(f64::INFINITY, |c| c.objective);
                if node.bound >= inc - prune_tol(inc) {
                    continue;
                }
            }
        }
        // Most fractional binary, ties to the lowest (site, workload).
        let mut branch: Option<(usize, f64)> = None;
        for j in 0..nb {
            let v = node.x[j];
            let frac = v.min(1.0 - v);
            if frac <= INT_TOL {
                continue;
            }
            let better = match branch {
                None => true,
                Some((b, f)) => {
                    frac > f + 1e-12
                        || (frac >= f - 1e-12 && {
                            let (bj, jj) = (&instance.binaries[b], &instance.binaries[j]);
                            (jj.site, jj.workload) < (bj.site, bj.workload)
                        })
                }
            };
            if better {
                branch = Some((j, frac));
            }
        }
        let Some((j, _)) = branch else {
            if let Some(sol) = complete_integral(instance, &base, &node.x)? {
                if incumbent
                    .as_ref()
                    .is_none_or(|c| sol.objective < c.objective - prune_tol(c.objective))
                {
                    incumbent = Some(sol);
                }
            }
            continue;
        };
        for v in [0.0, 1.0] {
            let mut fixed = node.fixed.clone();
            fixed.push((j, v));
            let lp = solve_node_tight(instance, &base, &tight, &fixed)?;
            nodes += 1;
            if lp.status != LpStatus::Optimal {
                continue;
            }
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |c| c.objective);
            if lp.objective >= inc - prune_tol(inc) {
                continue;
            }
            reduced_cost_fixings(nb, &mut fixed, &lp, inc);
            seq += 1;
            heap.push(Node {
                bound: lp.objective,
                seq,
                fixed,
                x: lp.x,
            });
        }
    }
    match incumbent {
        Some(inc) => {
            let bound = inc.objective;
            finish(SolveStatus::Optimal, Some(inc), bound, nodes)
        }
        None => finish(SolveStatus::Infeasible, None, f64::INFINITY, nodes),
    }
}

/// Feasibility only: the objective is zeroed so the first integral point ends the search.
pub fn solve_feasibility(instance: &MilpInstance, budget_secs: f64) -> Result<SolveOutcome> {
    let mut inst = instance.clone();
    for c in &mut inst.objective {
        *c = 0.0;
    }
    solve(&inst, budget_secs)
}

/// Exhaustive oracle: every gate-respecting placement, each checked by the
/// routing LP.
pub fn brute_force(instance: &MilpInstance) -> Result<SolveOutcome> {
    let deadline = Deadline::after_secs(f64::INFINITY);
    let n = instance.num_sites() as f64;
    let m = instance.num_workloads() as i32;
    let size = n.powi(m);
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::BruteForceGuard {
            placements: size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let base = relaxation(instance);
    let nb = instance.binaries.len();
    let assigned: Vec<bool> = (0..instance.num_workloads())
        .map(|k| {
            instance
                .rows
                .iter()
                .any(|r| r.group == GroupId::new(ConstraintClass::Assignment, k))
        })
        .collect();
    let options: Vec<Vec<Option<usize>>> = instance
        .binary_of
        .iter()
        .zip(&assigned)
        .map(|(sites, &must)| {
            let mut o: Vec<Option<usize>> = sites.iter().flatten().map(|&j| Some(j)).collect();
            if !must {
                o.insert(0, None);
            }
            o
        })
        .collect();
    let binary_rows: Vec<&Row> = instance
        .rows
        .iter()
        .filter(|r| r.coeffs.iter().all(|&(j, _)| j < nb))
        .collect();
    let paths_cost_free = instance.objective[nb..].iter().all(|&c| c == 0.0);

    // Enumerate in mixed-radix order, keep binary-row feasible placements.
    let mut candidates: Vec<(f64, usize, Vec<usize>)> = Vec::new();
    if options.iter().all(|o| !o.is_empty()) {
        let mut digits = vec![0usize; options.len()];
        let mut index = 0usize;
        loop {
            let cols: Vec<usize> = digits
                .iter()
                .zip(&options)
                .filter_map(|(&d, o)| o[d])
                .collect();
            let mut x = vec![0.0; nb];
            for &j in &cols {
                x[j] = 1.0;
            }
            let ok = binary_rows.iter().all(|r| {
                let lhs: f64 = r.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
                match r.sense {
                    Sense::Le => lhs <= r.rhs + 1e-9,
                    Sense::Ge => lhs >= r.rhs - 1e-9,
                    Sense::Eq => (lhs - r.rhs).abs() <= 1e-9,
                }
            });
            if ok {
                let obj: f64 = cols.iter().map(|&j| instance.objective[j]).sum();
                candidates.push((obj, index, cols));
            }
            index += 1;
            let mut pos = 0;
            loop {
                if pos == digits.len() {
                    break;
                }
                digits[pos] += 1;
                if digits[pos] < options[pos].len() {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
            if pos == digits.len() {
                break;
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut best: Option<Solution> = None;
    let mut nodes = 0;
    for (obj, _, cols) in candidates {
        if paths_cost_free {
            if let Some(b) = &best {
                if obj >= b.objective - 1e-12 {
                    break;
                }
            }
        }
        let mut x = vec![0.0; instance.num_columns()];
        for &j in &cols {
            x[j] = 1.0;
        }
        nodes += 1;
        if let Some(sol) = complete_integral(instance, &base, &x)? {
            if best.as_ref().is_none_or(|b| sol.objective < b.objective - 1e-12) {
                best = Some(sol);
            }
            if paths_cost_free {
                break;
            }
        }
    }
    let status = if best.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    let bound = best.as_ref().map_or(f64::INFINITY, |b| b.objective);
    let placement = best.as_ref().map(|s| placement_of(instance, s));
    Ok(SolveOutcome {
        status,
        solution: best,
        placement,
        bound,
        gap: 0.0,
        nodes,
        wall_secs: deadline.elapsed_secs(),
        infeasible_groups: if status == SolveStatus::Infeasible {
            instance.groups.clone()
        } else {
            Vec::new()
        },
    })
}

/// Reports a solution in domain terms, with arc flows rebuilt from path weights.
pub fn placement_of(instance: &MilpInstance, solution: &Solution) -> Placement {
    let nb = instance.binaries.len();
    let mut placement = Placement {
        objective: solution.objective,
        ..Placement::default()
    };
    for (k, site) in solution.assignment.iter().enumerate() {
        if let Some(i) = site {
            placement
                .assignment
                .insert(instance.workload_ids[k].clone(), instance.site_ids[*i].clone());
        }
    }
    for (j, _) in instance.binaries.iter().enumerate() {
        if solution.values[j] > 0.5 {
            placement.carbon_rate += instance.carbon_rate[j];
            placement.water_rate += instance.water_rate[j];
            placement.migration_carbon += instance.migration_carbon[j];
        }
    }
    let mut arcs: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let routed = instance
        .paths
        .iter()
        .enumerate()
        .map(|(p, pv)| (pv, solution.values[nb + p]))
        .chain(instance.fixed_routes.iter().map(|pv| {
            let on = instance.binary_of[pv.workload][pv.source].is_some_and(|j| solution.values[j] > 0.5);
            (pv, if on { instance.traffic[pv.workload] } else { 0.0 })
        }));
    for (pv, rate) in routed {
        if rate <= 1e-9 {
            continue;
        }
        placement.paths.push(PathFlow {
            workload: instance.workload_ids[pv.workload].clone(),
            nodes: pv.path.nodes.iter().map(|&i| instance.site_ids[i].clone()).collect(),
            rate,
            delay: pv.path.delay,
        });
        for &e in &pv.edges {
            *arcs.entry((e, pv.workload)).or_default() += rate;
        }
    }
    for ((e, k), rate) in arcs {
        let edge = &instance.graph.edges()[e];
        placement.flows.push(ArcFlow {
            from: instance.site_ids[edge.from].clone(),
            to: instance.site_ids[edge.to].clone(),
            workload: instance.workload_ids[k].clone(),
            rate,
        });
    }
    placement
}
