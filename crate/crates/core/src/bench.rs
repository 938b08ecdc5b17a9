//! Random instance generator and the solve-time benchmark table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formulation::{build_instance, BuildOptions};
use crate::milp::{solve, SolveStatus};
use crate::model::{LatencyBudget, Link, Site, TelemetrySnapshot, Workload, WorkloadClass};
use crate::routing::{FIBER_INDEX, SPEED_OF_LIGHT_KM_S};

/// Distribution knobs for random instances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceParams {
    /// Side of the square region sites are scattered in [km].
    pub region_km: f64,
    pub power_cap: (f64, f64),
    pub carbon: (f64, f64),
    pub carbon_ceiling: f64,
    pub water_intensity: (f64, f64),
    /// Permit as a fraction of the draw at full power cap.
    pub permit_frac: (f64, f64),
    pub link_capacity: (f64, f64),
    pub utilization: (f64, f64),
    /// Class mix (training, inference, batch), normalized on use.
    pub mix: (f64, f64, f64),
    pub inference_slo_ms: (f64, f64),
    /// Upper bound on total workload power as a fraction of total site power.
    pub load_frac: f64,
    /// Force at least one site over its carbon ceiling.
    pub gate_one_site: bool,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            region_km: 1200.0,
            power_cap: (800.0, 2000.0),
            carbon: (80.0, 520.0),
            carbon_ceiling: 450.0,
            water_intensity: (0.4, 2.2),
            permit_frac: (0.5, 1.0),
            link_capacity: (40.0, 200.0),
            utilization: (0.1, 0.6),
            mix: (0.2, 0.5, 0.3),
            inference_slo_ms: (1.5, 6.0),
            load_frac: 0.4,
            gate_one_site: true,
        }
    }
}

impl InstanceParams {
    /// Scarce capacity so that a fair share of draws is infeasible.
    pub fn tight() -> Self {
        Self {
            power_cap: (100.0, 600.0),
            permit_frac: (0.2, 0.8),
            link_capacity: (2.0, 20.0),
            load_frac: 0.9,
            gate_one_site: false,
            ..Self::default()
        }
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Complete digraph on `n` scattered sites and `m` mixed workloads.
pub fn random_instance(n: usize, m: usize, seed: u64, params: &InstanceParams) -> (TelemetrySnapshot, Vec<Workload>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen::<f64>() * params.region_km, rng.gen::<f64>() * params.region_km))
        .collect();
    let gated = (params.gate_one_site && n > 1).then(|| rng.gen_range(0..n));
    let mut sites = Vec::with_capacity(n);
    for i in 0..n {
        let power_cap = draw(&mut rng, params.power_cap);
        let mut carbon = draw(&mut rng, params.carbon);
        if gated == Some(i) {
            carbon = carbon.max(params.carbon_ceiling * 1.1);
        }
        let water = draw(&mut rng, params.water_intensity);
        let permit = water * power_cap * draw(&mut rng, params.permit_frac);
        sites.push(Site {
            id: format!("s{i}").into(),
            power_cap,
            carbon_intensity: carbon,
            water_intensity: water,
            carbon_ceiling: params.carbon_ceiling,
            water_permit: permit,
            thermal_cooling_cap: None,
            ups_headroom_frac: 0.0,
            region_tag: String::new(),
            onsite_gen: 0.0,
            onsite_batt: 0.0,
        });
    }
    let km_per_ms = SPEED_OF_LIGHT_KM_S / FIBER_INDEX * 1e-3;
    let mut links = Vec::with_capacity(n * n.saturating_sub(1));
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let dist = ((pos[a].0 - pos[b].0).powi(2) + (pos[a].1 - pos[b].1).powi(2)).sqrt();
            // Fiber routes run longer than the straight line.
            let route = dist * 1.3 + 20.0;
            links.push(Link {
                from: sites[a].id.clone(),
                to: sites[b].id.clone(),
                capacity: draw(&mut rng, params.link_capacity),
                delay: route / km_per_ms,
                energy_per_bit: rng.gen_range(5e-12..2e-11),
                utilization: draw(&mut rng, params.utilization),
                alarmed: false,
            });
        }
    }
    let total_power: f64 = sites.iter().map(|s| s.power_cap).sum();
    let per_workload = params.load_frac * total_power / m.max(1) as f64;
    let (t, i, b) = params.mix;
    let sum = t + i + b;
    let mut workloads = Vec::with_capacity(m);
    for k in 0..m {
        let u = rng.gen::<f64>() * sum;
        let class = if u < t {
            WorkloadClass::Training
        } else if u < t + i {
            WorkloadClass::Inference
        } else {
            WorkloadClass::Batch
        };
        let eligible: Vec<usize> = (0..n).filter(|&i| sites[i].passes_carbon_gate()).collect();
        let dest = match eligible.len() {
            0 => format!("s{}", rng.gen_range(0..n.max(1))),
            e => format!("s{}", eligible[rng.gen_range(0..e)]),
        };
        let (power, slo, traffic, state) = match class {
            WorkloadClass::Training => (per_workload * rng.gen_range(1.0..1.8), LatencyBudget::Unbounded, 0.0, 0.0),
            WorkloadClass::Inference => (
                per_workload * rng.gen_range(0.2..0.6),
                LatencyBudget::Bounded(draw(&mut rng, params.inference_slo_ms)),
                rng.gen_range(1.0..10.0),
                rng.gen_range(1.0..20.0),
            ),
            WorkloadClass::Batch => (
                per_workload * rng.gen_range(0.5..1.2),
                LatencyBudget::Unbounded,
                rng.gen_range(0.5..5.0),
                rng.gen_range(10.0..200.0),
            ),
        };
        workloads.push(Workload {
            id: format!("w{k}").into(),
            power,
            latency_slo: slo,
            traffic,
            portable: class != WorkloadClass::Training,
            state_size: state,
            rehydration: if class == WorkloadClass::Inference { 0.5 } else { 0.0 },
            rehydration_overrides: Default::default(),
            class,
            dest: dest.into(),
            locality_tags: Vec::new(),
        });
    }
    (TelemetrySnapshot::new(0, sites, links), workloads)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    Small,
    Medium,
    Paper,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Small, Scale::Medium, Scale::Paper];

    pub fn dims(self) -> (usize, usize) {
        match self {
            Scale::Small => (4, 10),
            Scale::Medium => (6, 15),
            Scale::Paper => (8, 20),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::Small => "Small",
            Scale::Medium => "Medium",
            Scale::Paper => "Paper",
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Scale::Small),
            "medium" => Ok(Scale::Medium),
            "paper" => Ok(Scale::Paper),
            _ => Err(format!("unknown scale {s:?}; expected small, medium, paper or all")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchTrial {
    pub seed: u64,
    /// Earlier draws for this slot that were certified infeasible.
    pub rejected: usize,
    pub binaries: usize,
    pub binaries_nominal: usize,
    pub continuous_nominal: usize,
    pub path_weights: usize,
    pub status: SolveStatus,
    pub nodes: usize,
    pub secs: f64,
}

/// One row of the benchmark table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    /// Largest post-gate binary count over the trials.
    pub binary: usize,
    pub continuous: usize,
    /// "solved/total".
    pub opt: String,
    pub min_s: f64,
    pub median_s: f64,
    pub mean_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub instances: usize,
    pub seed: u64,
    pub budget_secs: f64,
    pub hop_limit: usize,
    pub alpha: f64,
    /// Redraws allowed per slot when a draw is infeasible.
    pub max_redraws: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            instances: 5,
            seed: 1,
            budget_secs: 300.0,
            hop_limit: crate::formulation::DEFAULT_HOP_LIMIT,
            alpha: 0.5,
            max_redraws: 20,
        }
    }
}

const REDRAW_STRIDE: u64 = 1_000_003;

pub fn run_scale(scale: Scale, config: &BenchConfig) -> Result<(BenchRow, Vec<BenchTrial>)> {
    let (n, m) = scale.dims();
    let params = InstanceParams::default();
    let options = BuildOptions {
        hop_limit: config.hop_limit,
        ..BuildOptions::with_alpha(config.alpha)
    };
    let mut trials = Vec::with_capacity(config.instances);
    for t in 0..config.instances {
        let first = config.seed.wrapping_mul(1000).wrapping_add((n * 100 + t) as u64);
        let mut rejected = 0;
        // Infeasible draws are resampled: the table reports optimality on
        // instances that have an optimum.
        let (seed, inst, out) = loop {
            let seed = first.wrapping_add(REDRAW_STRIDE.wrapping_mul(rejected as u64));
            let (snap, workloads) = random_instance(n, m, seed, &params);
            let inst = build_instance(&snap, &workloads, &options)?;
            let out = solve(&inst, config.budget_secs)?;
            if out.status != SolveStatus::Infeasible || rejected >= config.max_redraws {
                break (seed, inst, out);
            }
            rejected += 1;
        };
        trials.push(BenchTrial {
            seed,
            rejected,
            binaries: inst.counts.binaries,
            binaries_nominal: inst.counts.binaries_nominal,
            continuous_nominal: inst.counts.continuous_nominal,
            path_weights: inst.counts.path_weights,
            status: out.status,
            nodes: out.nodes,
            secs: out.wall_secs,
        });
    }
    let mut secs: Vec<f64> = trials.iter().map(|t| t.secs).collect();
    secs.sort_by(f64::total_cmp);
    let k = secs.len();
    let median = match k {
        0 => 0.0,
        _ if k % 2 == 1 => secs[k / 2],
        _ => 0.5 * (secs[k / 2 - 1] + secs[k / 2]),
    };
    let row = BenchRow {
        scenario: scale.name().into(),
        n,
        m,
        binary: trials.iter().map(|t| t.binaries).max().unwrap_or(0),
        continuous: trials.first().map_or(n * n.saturating_sub(1) * m, |t| t.continuous_nominal),
        opt: format!(
            "{}/{}",
            trials.iter().filter(|t| t.status == SolveStatus::Optimal).count(),
            k
        ),
        min_s: secs.first().copied().unwrap_or(0.0),
        median_s: median,
        mean_s: if k == 0 { 0.0 } else { secs.iter().sum::<f64>() / k as f64 },
        max_s: secs.last().copied().unwrap_or(0.0),
    };
    Ok((row, trials))
}
