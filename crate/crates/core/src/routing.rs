//! Delay-constrained path machinery over the optical graph.

use crate::error::{Error, Result};
use crate::model::{LatencyBudget, TelemetrySnapshot};

/// Speed of light in vacuum [km/s].
pub const SPEED_OF_LIGHT_KM_S: f64 = 299_792.458;
/// Group index of standard single-mode fiber at 1550 nm.
pub const FIBER_INDEX: f64 = 1.468;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// [ms]
    pub delay: f64,
    /// Capacity available to routed workloads [Gbps].
    pub capacity: f64,
    /// Index into `TelemetrySnapshot::links`.
    pub link: usize,
}

/// Directed graph over site indices. Alarmed links are not part of it.
#[derive(Debug, Clone)]
pub struct Graph {
    nodes: usize,
    edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
    lookup: Vec<Option<usize>>,
}

impl Graph {
    pub fn new(nodes: usize, edges: Vec<Edge>) -> Self {
        let mut out = vec![Vec::new(); nodes];
        let mut lookup = vec![None; nodes * nodes];
        for (i, e) in edges.iter().enumerate() {
            out[e.from].push(i);
            lookup[e.from * nodes + e.to] = Some(i);
        }
        for adj in &mut out {
            adj.sort_by_key(|&i| edges[i].to);
        }
        Self {
            nodes,
            edges,
            out,
            lookup,
        }
    }

    /// Routing graph of a snapshot: alarmed links dropped, capacity reduced
    /// by background utilization.
    pub fn from_snapshot(snapshot: &TelemetrySnapshot) -> Self {
        let edges = snapshot
            .links
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.alarmed)
            .filter_map(|(i, l)| {
                let from = snapshot.site_index(&l.from)?;
                let to = snapshot.site_index(&l.to)?;
                Some(Edge {
                    from,
                    to,
                    delay: l.delay,
                    capacity: l.residual_capacity(),
                    link: i,
                })
            })
            .collect();
        Self::new(snapshot.sites.len(), edges)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_index(&self, from: usize, to: usize) -> Option<usize> {
        if from >= self.nodes || to >= self.nodes {
            return None;
        }
        self.lookup[from * self.nodes + to]
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&Edge> {
        self.edge_index(from, to).map(|i| &self.edges[i])
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.out[node].iter().map(|&i| &self.edges[i])
    }

    /// Same topology with every delay set to zero and capacities unbounded.
    pub fn equivalent_paths(&self) -> Self {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                delay: 0.0,
                capacity: f64::INFINITY,
                ..*e
            })
            .collect();
        Self::new(self.nodes, edges)
    }
}

/// Total one-way delay of a node sequence [ms].
pub fn path_delay(path: &[usize], graph: &Graph) -> Result<f64> {
    path.windows(2).try_fold(0.0, |acc, hop| {
        graph
            .edge(hop[0], hop[1])
            .map(|e| acc + e.delay)
            .ok_or_else(|| Error::MissingEdge {
                from: hop[0].to_string(),
                to: hop[1].to_string(),
            })
    })
}

/// All-pairs minimal one-way delay; unreachable pairs are `f64::INFINITY`.
pub fn shortest_delays(graph: &Graph) -> Vec<Vec<f64>> {
    let n = graph.nodes();
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in graph.edges() {
        if e.delay < dist[e.from][e.to] {
            dist[e.from][e.to] = e.delay;
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i][k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let via = dik + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub nodes: Vec<usize>,
    /// [ms]
    pub delay: f64,
}

impl Path {
    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    /// Edge indices traversed, in order.
    pub fn edge_indices(&self, graph: &Graph) -> Vec<usize> {
        self.nodes
            .windows(2)
            .filter_map(|h| graph.edge_index(h[0], h[1]))
            .collect()
    }
}

/// Every simple path from `source` to `dest` with at most `hop_limit` hops
/// and delay within `budget`, in lexicographic order of node sequence.
///
/// `source == dest` yields the single empty path.
pub fn enumerate_admissible_paths(
    graph: &Graph,
    source: usize,
    dest: usize,
    budget: LatencyBudget,
    hop_limit: usize,
) -> Vec<Path> {
    assert!(hop_limit >= 1, "hop_limit must be at least 1");
    if source == dest {
        return vec![Path {
            nodes: vec![source],
            delay: 0.0,
        }];
    }
    let mut found = Vec::new();
    let mut stack = vec![source];
    let mut visited = vec![false; graph.nodes()];
    visited[source] = true;
    extend(graph, dest, budget, hop_limit, 0.0, &mut stack, &mut visited, &mut found);
    found
}

#[allow(clippy::too_many_arguments)]
fn extend(
    graph: &Graph,
    dest: usize,
    budget: LatencyBudget,
    hop_limit: usize,
    delay: f64,
    stack: &mut Vec<usize>,
    visited: &mut [bool],
    found: &mut Vec<Path>,
) {
    let here = *stack.last().expect("path is never empty");
    // Adjacency lists are sorted by head node, so DFS order is lexicographic.
    for e in graph.out_edges(here) {
        if visited[e.to] {
            continue;
        }
        let next = delay + e.delay;
        if !budget.admits(next) {
            continue;
        }
        stack.push(e.to);
        if e.to == dest {
            found.push(Path {
                nodes: stack.clone(),
                delay: next,
            });
        } else if stack.len() <= hop_limit {
            visited[e.to] = true;
            extend(graph, dest, budget, hop_limit, next, stack, visited, found);
            visited[e.to] = false;
        }
        stack.pop();
    }
}

/// Geographic reach [km] of a one-way latency budget over fiber;
/// `None` for an unbounded budget.
pub fn latency_radius(budget: LatencyBudget) -> Option<f64> {
    budget
        .millis()
        .map(|ms| ms * 1e-3 * SPEED_OF_LIGHT_KM_S / FIBER_INDEX)
}

/// Arc flows induced by weighted paths: `flows[e]` is the rate on edge `e`.
pub fn paths_to_flows(paths: &[(Path, f64)], graph: &Graph) -> Result<Vec<f64>> {
    let mut flows = vec![0.0; graph.edges().len()];
    for (i, (path, weight)) in paths.iter().enumerate() {
        if *weight < 0.0 {
            return Err(Error::NegativeWeight {
                index: i,
                weight: *weight,
            });
        }
        for hop in path.nodes.windows(2) {
            let e = graph.edge_index(hop[0], hop[1]).ok_or_else(|| Error::MissingEdge {
                from: hop[0].to_string(),
                to: hop[1].to_string(),
            })?;
            flows[e] += weight;
        }
    }
    Ok(flows)
}

/// Decomposes an acyclic single-commodity arc flow from `source` to `dest`
/// into paths by repeatedly peeling off the bottleneck of a flow-carrying path.
pub fn flows_to_paths(
    flows: &[f64],
    graph: &Graph,
    source: usize,
    dest: usize,
    tol: f64,
) -> Result<Vec<(Path, f64)>> {
    if flows.iter().any(|&f| f < -tol) {
        let (i, &w) = flows
            .iter()
            .enumerate()
            .find(|(_, &f)| f < -tol)
            .expect("checked above");
        return Err(Error::NegativeWeight { index: i, weight: w });
    }
    let mut residual: Vec<f64> = flows.iter().map(|f| f.max(0.0)).collect();
    let mut out = Vec::new();
    if source == dest {
        return Ok(out);
    }
    loop {
        let mut nodes = vec![source];
        let mut seen = vec![false; graph.nodes()];
        seen[source] = true;
        let mut here = source;
        while here != dest {
            let next = graph
                .out_edges(here)
                .map(|e| (e, graph.edge_index(e.from, e.to).expect("own edge")))
                .filter(|(e, i)| residual[*i] > tol && !seen[e.to])
                .max_by(|a, b| residual[a.1].total_cmp(&residual[b.1]));
            match next {
                Some((e, _)) => {
                    here = e.to;
                    seen[here] = true;
                    nodes.push(here);
                }
                None => break,
            }
        }
        if here != dest {
            break;
        }
        let path = Path {
            delay: path_delay(&nodes, graph)?,
            nodes,
        };
        let edges = path.edge_indices(graph);
        let amount = edges
            .iter()
            .map(|&e| residual[e])
            .fold(f64::INFINITY, f64::min);
        for e in edges {
            residual[e] -= amount;
        }
        out.push((path, amount));
    }
    Ok(out)
}

/// Net outflow at every node for one commodity (out minus in).
pub fn net_outflow(flows: &[f64], graph: &Graph) -> Vec<f64> {
    let mut net = vec![0.0; graph.nodes()];
    for (e, f) in graph.edges().iter().zip(flows) {
        net[e.from] += f;
        net[e.to] -= f;
    }
    net
}
