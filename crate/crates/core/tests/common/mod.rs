//! Independent oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use fsor_core::bench::{random_instance, InstanceParams};
use fsor_core::formulation::BuildOptions;
use fsor_core::lp::{LpProblem, Sense};
use fsor_core::model::{LatencyBudget, SiteId, TelemetrySnapshot, Workload, WorkloadId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Boxed LP with small integer data; degenerate vertices are common.
pub fn random_lp(seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(0..=4);
    let mut lp = LpProblem::new(n);
    for j in 0..n {
        let lo = rng.gen_range(-5..=0) as f64;
        lp.lower[j] = lo;
        lp.upper[j] = lo + rng.gen_range(0..=8) as f64;
        lp.objective[j] = rng.gen_range(-5..=5) as f64;
    }
    for _ in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.gen_range(-5..=5) as f64)).collect();
        let sense = match rng.gen_range(0..20) {
            0..=2 => Sense::Eq,
            3..=11 => Sense::Le,
            _ => Sense::Ge,
        };
        lp.add_row(&coeffs, sense, rng.gen_range(-10..=10) as f64);
    }
    lp
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Minimum objective over all vertices, or `None` when no vertex is
/// feasible. Only valid for finitely bounded variables.
pub fn vertex_oracle(lp: &LpProblem) -> Option<f64> {
    let n = lp.cols;
    // Every constraint as (a, sense, b), bounds included.
    let mut cons: Vec<(Vec<f64>, Sense, f64)> = (0..lp.rows())
        .map(|i| (lp.row(i).to_vec(), lp.senses[i], lp.rhs[i]))
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cons.push((e.clone(), Sense::Ge, lp.lower[j]));
        cons.push((e, Sense::Le, lp.upper[j]));
    }
    let feasible = |x: &[f64]| {
        cons.iter().all(|(a, s, b)| {
            let lhs: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
            let tol = 1e-9 * b.abs().max(1.0);
            match s {
                Sense::Le => lhs <= b + tol,
                Sense::Ge => lhs >= b - tol,
                Sense::Eq => (lhs - b).abs() <= tol,
            }
        })
    };
    let k = cons.len();
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    // All n-subsets of the k constraints, lexicographically.
    fn next(pick: &mut [usize], k: usize) -> bool {
        let n = pick.len();
        for i in (0..n).rev() {
            if pick[i] < k - n + i {
                pick[i] += 1;
                for j in i + 1..n {
                    pick[j] = pick[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, p) in pick.iter_mut().enumerate() {
        *p = i;
    }
    loop {
        let a: Vec<Vec<f64>> = pick.iter().map(|&c| cons[c].0.clone()).collect();
        let b: Vec<f64> = pick.iter().map(|&c| cons[c].2).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let obj: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
                best = Some(best.map_or(obj, |b| b.min(obj)));
            }
        }
        if !next(&mut pick, k) {
            break;
        }
    }
    best
}

/// Small instance for the brute-force oracle: N <= 4, M <= 6.
pub fn oracle_instance(seed: u64) -> (TelemetrySnapshot, Vec<Workload>, BuildOptions) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n = rng.gen_range(1..=4);
    let m = rng.gen_range(1..=6);
    let params = if rng.gen_bool(0.3) { InstanceParams::tight() } else { InstanceParams::default() };
    let (snap, workloads) = random_instance(n, m, seed, &params);
    let options = BuildOptions {
        hop_limit: rng.gen_range(1..=3),
        ..BuildOptions::with_alpha(rng.gen_range(0.0..=1.0))
    };
    (snap, workloads, options)
}

/// Wider fuzz draw: random scale, optional incumbent, optional non-portable
/// workloads and tightened SLOs.
pub fn fuzz_instance(seed: u64) -> (TelemetrySnapshot, Vec<Workload>, BuildOptions) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf022);
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(1..=10);
    let mut params = if rng.gen_bool(0.25) { InstanceParams::tight() } else { InstanceParams::default() };
    params.inference_slo_ms = (rng.gen_range(1.0..4.0), rng.gen_range(4.0..12.0));
    let (snap, mut workloads) = random_instance(n, m, seed, &params);
    for w in &mut workloads {
        if rng.gen_bool(0.05) {
            w.latency_slo = LatencyBudget::Bounded(rng.gen_range(0.5..10.0));
        }
    }
    let incumbent: Option<BTreeMap<WorkloadId, SiteId>> = rng.gen_bool(0.4).then(|| {
        workloads
            .iter()
            .map(|w| (w.id.clone(), snap.sites[rng.gen_range(0..n)].id.clone()))
            .collect()
    });
    let options = BuildOptions {
        hop_limit: rng.gen_range(1..=3),
        incumbent,
        transport_term: rng.gen_bool(0.3),
        ..BuildOptions::with_alpha(rng.gen_range(0.0..=1.0))
    };
    (snap, workloads, options)
}

/// Instance for exhaustive region checks: |U| <= 6 over 2-4 sites.
pub fn region_instance(seed: u64) -> (TelemetrySnapshot, Vec<Workload>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf502);
    let n = rng.gen_range(2..=4);
    let m = rng.gen_range(2..=6);
    random_instance(n, m, seed, &InstanceParams::tight())
}
