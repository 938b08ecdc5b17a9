//! Synthetic telemetry streams, the ingestion pipeline with freshness
//! enforcement, and the state estimator.
//!
//! Readings are keyed by [`ParamKey`] and replayable as newline-delimited
//! JSON. Ingestion is incremental: push readings in time order, then cut a
//! snapshot at each cycle timestamp.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Confidence, ForecastPoint, LinkParam, ParamConfidence, ParamKey, SiteId, SiteParam, TelemetrySnapshot,
};

pub const HOUR: i64 = 3600;
pub const DAY: i64 = 86_400;
/// Default control cycle [s].
pub const DEFAULT_CYCLE_SECS: i64 = 300;
/// Per-cycle exponential smoothing factor for slow parameters.
pub const SMOOTHING: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    Power,
    Carbon,
    Water,
    Network,
    Workload,
}

impl Domain {
    pub fn of(key: &ParamKey) -> Self {
        match key {
            ParamKey::Site(_, SiteParam::PowerCap) => Domain::Power,
            ParamKey::Site(_, SiteParam::CarbonIntensity) => Domain::Carbon,
            ParamKey::Site(_, SiteParam::WaterIntensity | SiteParam::WaterPermit) => Domain::Water,
            ParamKey::Link(..) => Domain::Network,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawReading {
    pub domain: Domain,
    pub param: ParamKey,
    pub value: f64,
    /// Unix seconds at the source.
    pub timestamp: i64,
    pub source: String,
}

impl RawReading {
    pub fn new(param: ParamKey, value: f64, timestamp: i64) -> Self {
        let source = match Domain::of(&param) {
            Domain::Power => "bms",
            Domain::Carbon => "grid",
            Domain::Water => "utility",
            Domain::Network => "optical",
            Domain::Workload => "orchestrator",
        };
        Self {
            domain: Domain::of(&param),
            param,
            value,
            timestamp,
            source: source.to_string(),
        }
    }
}

pub fn read_ndjson(reader: impl BufRead) -> Result<Vec<RawReading>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r = serde_json::from_str(&line).map_err(|e| Error::Invalid(format!("line {}: {e}", n + 1)))?;
        out.push(r);
    }
    Ok(out)
}

pub fn write_ndjson(mut writer: impl Write, readings: &[RawReading]) -> Result<()> {
    for r in readings {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// What to do once a parameter is older than its maximum age.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    /// Use the estimator's forecast with a widened uncertainty interval;
    /// falls through to the conservative bound when no forecast exists.
    ForecastSubstitute,
    /// Pessimistic extreme over the preceding hour.
    ConservativeBound,
    /// Unsubstitutable: skip optimization this cycle.
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreshnessRule {
    /// Maximum age τ_max [s].
    pub tau_max: f64,
    pub tier: Tier,
}

/// Rules by parameter name (`carbon_intensity`, `alarmed`, ...) with
/// per-key overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreshnessPolicy {
    pub rules: BTreeMap<String, FreshnessRule>,
    #[serde(default)]
    pub overrides: BTreeMap<ParamKey, FreshnessRule>,
}

impl Default for FreshnessPolicy {
    fn default() -> Self {
        let rule = |tau_max: f64, tier| FreshnessRule { tau_max, tier };
        let rules = [
            (SiteParam::PowerCap.name(), rule(900.0, Tier::ConservativeBound)),
            (SiteParam::CarbonIntensity.name(), rule(900.0, Tier::ForecastSubstitute)),
            (SiteParam::WaterIntensity.name(), rule(3600.0, Tier::ForecastSubstitute)),
            (SiteParam::WaterPermit.name(), rule(3600.0, Tier::ConservativeBound)),
            (LinkParam::Capacity.name(), rule(900.0, Tier::ConservativeBound)),
            (LinkParam::Delay.name(), rule(3600.0, Tier::ConservativeBound)),
            (LinkParam::Utilization.name(), rule(900.0, Tier::ConservativeBound)),
            (LinkParam::Alarm.name(), rule(600.0, Tier::Hold)),
        ]
        .into_iter()
        .map(|(k, r)| (k.to_string(), r))
        .collect();
        Self {
            rules,
            overrides: BTreeMap::new(),
        }
    }
}

impl FreshnessPolicy {
    pub fn rule(&self, key: &ParamKey) -> FreshnessRule {
        if let Some(r) = self.overrides.get(key) {
            return *r;
        }
        let name = match key {
            ParamKey::Site(_, p) => p.name(),
            ParamKey::Link(_, _, p) => p.name(),
        };
        self.rules.get(name).copied().unwrap_or(FreshnessRule {
            tau_max: 900.0,
            tier: Tier::ConservativeBound,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (k, r) in self.rules.iter().map(|(k, r)| (k.clone(), r)).chain(self.overrides.iter().map(|(k, r)| (k.to_string(), r))) {
            if !(r.tau_max > 0.0) {
                return Err(Error::Invalid(format!("tau_max for {k} must be positive, got {}", r.tau_max)));
            }
        }
        Ok(())
    }
}

fn std_dev(values: impl Iterator<Item = f64>) -> f64 {
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for v in values {
        n += 1.0;
        let d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
    }
    if n < 2.0 {
        0.0
    } else {
        (m2 / (n - 1.0)).sqrt()
    }
}

/// Trailing readings per parameter; the window covers one day so the
/// substitution uncertainty can see a full diurnal cycle.
#[derive(Debug, Clone)]
pub struct Ingestor {
    template: TelemetrySnapshot,
    policy: FreshnessPolicy,
    window: BTreeMap<ParamKey, VecDeque<(i64, f64)>>,
    last_seen: BTreeMap<(String, ParamKey), i64>,
}

impl Ingestor {
    /// `template` fixes topology and the static site fields; its values are
    /// never reported as fresh.
    pub fn new(template: TelemetrySnapshot, policy: FreshnessPolicy) -> Result<Self> {
        policy.validate()?;
        let window = template.param_keys().into_iter().map(|k| (k, VecDeque::new())).collect();
        Ok(Self {
            template,
            policy,
            window,
            last_seen: BTreeMap::new(),
        })
    }

    pub fn policy(&self) -> &FreshnessPolicy {
        &self.policy
    }

    /// Rejects readings that go back in time for their (source, parameter)
    /// and parameters absent from the topology.
    pub fn push(&mut self, r: &RawReading) -> Result<()> {
        let Some(w) = self.window.get_mut(&r.param) else {
            return Err(Error::Invalid(format!("reading for unknown parameter {}", r.param)));
        };
        if !r.value.is_finite() {
            return Err(Error::Invalid(format!("non-finite reading for {}", r.param)));
        }
        let seen = self.last_seen.entry((r.source.clone(), r.param.clone())).or_insert(i64::MIN);
        if r.timestamp < *seen {
            return Err(Error::Invalid(format!(
                "reading for {} from {} at {} precedes {}",
                r.param, r.source, r.timestamp, seen
            )));
        }
        *seen = r.timestamp;
        w.push_back((r.timestamp, r.value));
        while w.front().is_some_and(|&(t, _)| t < r.timestamp - DAY) {
            w.pop_front();
        }
        Ok(())
    }

    /// One snapshot at `cycle_ts` using only readings at or before it.
    /// `forecasts` are the previous estimate's trajectories.
    pub fn snapshot(&self, cycle_ts: i64, forecasts: &BTreeMap<ParamKey, Vec<ForecastPoint>>) -> TelemetrySnapshot {
        let mut snap = self.template.clone();
        snap.timestamp = cycle_ts;
        snap.forecasts.clear();
        snap.hold = false;
        snap.hold_reasons.clear();
        snap.confidence.clear();
        for (key, window) in &self.window {
            let visible: Vec<(i64, f64)> = window.iter().copied().filter(|&(t, _)| t <= cycle_ts).collect();
            let (value, conf) = self.resolve(key, &visible, cycle_ts, forecasts);
            if conf.tag == Confidence::Hold {
                snap.hold = true;
                snap.hold_reasons.push(match visible.last() {
                    Some(&(t, _)) => format!("{key} stale for {} s", cycle_ts - t),
                    None => format!("{key} never reported"),
                });
            }
            if let Some(v) = value {
                snap.set_param(key, v);
            }
            snap.confidence.insert(key.clone(), conf);
        }
        snap
    }

    fn resolve(
        &self,
        key: &ParamKey,
        visible: &[(i64, f64)],
        cycle_ts: i64,
        forecasts: &BTreeMap<ParamKey, Vec<ForecastPoint>>,
    ) -> (Option<f64>, ParamConfidence) {
        let rule = self.policy.rule(key);
        let tag = |tag, uncertainty| ParamConfidence { tag, uncertainty };
        if let Some(&(t, v)) = visible.last() {
            if (cycle_ts - t) as f64 <= rule.tau_max {
                // Slow quantities are aligned from the last good value;
                // fast ones are forward-held.
                let aligned = t != cycle_ts && key.is_slow();
                let c = if aligned { Confidence::Interpolated } else { Confidence::Fresh };
                return (Some(v), tag(c, 0.0));
            }
        }
        let spread = std_dev(visible.iter().map(|&(_, v)| v));
        if rule.tier == Tier::ForecastSubstitute {
            let nearest = forecasts
                .get(key)
                .and_then(|f| f.iter().min_by_key(|p| (p.timestamp - cycle_ts).abs()))
                .filter(|p| ((p.timestamp - cycle_ts).abs() as f64) <= rule.tau_max);
            if let Some(p) = nearest {
                return (Some(p.value), tag(Confidence::ForecastSubstituted, spread));
            }
        }
        if rule.tier != Tier::Hold {
            // Preceding hour, anchored at the cycle or, when that hour is
            // empty, at the last reading.
            let anchor = visible
                .last()
                .map_or(cycle_ts, |&(t, _)| if t >= cycle_ts - HOUR { cycle_ts } else { t });
            let hour = visible.iter().filter(|&&(t, _)| t >= anchor - HOUR).map(|&(_, v)| v);
            let bound = if key.higher_is_pessimistic() {
                hour.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
            } else {
                hour.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
            };
            if let Some(b) = bound {
                return (Some(b), tag(Confidence::ConservativeBound, spread));
            }
        }
        (visible.last().map(|&(_, v)| v), tag(Confidence::Hold, spread))
    }
}

/// One-shot ingestion of a sorted reading set.
pub fn ingest(
    readings: &[RawReading],
    template: &TelemetrySnapshot,
    cycle_ts: i64,
    policy: &FreshnessPolicy,
    forecasts: &BTreeMap<ParamKey, Vec<ForecastPoint>>,
) -> Result<TelemetrySnapshot> {
    let mut ing = Ingestor::new(template.clone(), policy.clone())?;
    for r in readings.iter().filter(|r| r.timestamp <= cycle_ts) {
        ing.push(r)?;
    }
    Ok(ing.snapshot(cycle_ts, forecasts))
}

/// Incremental estimator: smoothing state plus a day of history per
/// parameter for the seasonal-naive forecast.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub horizon_min: f64,
    pub cycle_secs: i64,
    smoothed: BTreeMap<ParamKey, f64>,
    history: BTreeMap<ParamKey, VecDeque<(i64, f64)>>,
}

impl Estimator {
    pub fn new(horizon_min: f64, cycle_secs: i64) -> Self {
        Self {
            horizon_min,
            cycle_secs: cycle_secs.max(1),
            smoothed: BTreeMap::new(),
            history: BTreeMap::new(),
        }
    }

    fn seasonal(&self, key: &ParamKey, ts: i64) -> Option<f64> {
        let h = self.history.get(key)?;
        let target = ts - DAY;
        let i = h.partition_point(|&(t, _)| t < target);
        let tol = self.cycle_secs / 2;
        [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter_map(|j| h.get(j))
            .filter(|&&(t, _)| (t - target).abs() <= tol)
            .min_by_key(|&&(t, _)| (t - target).abs())
            .map(|&(_, v)| v)
    }

    /// Feeds one ingested snapshot and returns θ(t, t+Δ): smoothed slow
    /// parameters, pass-through fast ones, low-confidence values pushed to
    /// the pessimistic edge of their interval, and forecast trajectories.
    pub fn update(&mut self, snap: &TelemetrySnapshot) -> TelemetrySnapshot {
        let mut theta = snap.clone();
        theta.forecast_horizon_min = self.horizon_min;
        theta.forecasts.clear();
        for key in snap.param_keys() {
            let Some(raw) = snap.param(&key) else { continue };
            let conf = snap.confidence.get(&key).copied().unwrap_or(ParamConfidence::fresh());
            let mut value = raw;
            if key.is_slow() {
                let s = self.smoothed.entry(key.clone()).or_insert(raw);
                *s += SMOOTHING * (raw - *s);
                value = *s;
            }
            if conf.tag == Confidence::ForecastSubstituted && conf.uncertainty > 0.0 {
                value += if key.higher_is_pessimistic() {
                    conf.uncertainty
                } else {
                    -conf.uncertainty
                };
                if !key.higher_is_pessimistic() {
                    value = value.max(0.0);
                }
            }
            theta.set_param(&key, value);

            let h = self.history.entry(key.clone()).or_default();
            h.push_back((snap.timestamp, raw));
            while h.front().is_some_and(|&(t, _)| t < snap.timestamp - DAY - self.cycle_secs) {
                h.pop_front();
            }
            let steps = ((self.horizon_min * 60.0) / self.cycle_secs as f64).round() as i64;
            let points = (1..=steps.max(0))
                .map(|s| {
                    let ts = snap.timestamp + s * self.cycle_secs;
                    ForecastPoint {
                        timestamp: ts,
                        value: self.seasonal(&key, ts).unwrap_or(value),
                    }
                })
                .collect();
            theta.forecasts.insert(key, points);
        }
        theta
    }
}

/// θ from a snapshot history, oldest first.
pub fn estimate(history: &[TelemetrySnapshot], horizon_min: f64, cycle_secs: i64) -> Result<TelemetrySnapshot> {
    let mut est = Estimator::new(horizon_min, cycle_secs);
    let mut last = None;
    for s in history {
        last = Some(est.update(s));
    }
    last.ok_or_else(|| Error::Invalid("estimation needs at least one snapshot".into()))
}

/// Per-site generator dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteDynamics {
    /// Mean carbon intensity [gCO2/kWh].
    pub carbon_mean: f64,
    /// Diurnal amplitude as a fraction of the mean.
    pub carbon_amplitude: f64,
    /// Hour of day of the carbon peak.
    pub carbon_peak_hour: f64,
    /// Standard deviation of additive carbon noise [gCO2/kWh].
    pub carbon_noise: f64,
    /// Annual amplitude of water intensity as a fraction of the base value.
    pub water_seasonal_amplitude: f64,
    /// Day of year of the water intensity peak.
    pub water_peak_day: f64,
    /// Daily amplitude of water intensity (evaporative cooling follows the
    /// afternoon heat), as a fraction.
    #[serde(default)]
    pub water_diurnal_amplitude: f64,
    #[serde(default = "default_water_peak_hour")]
    pub water_peak_hour: f64,
    /// Standard deviation of each power headroom step [kW].
    pub power_walk: f64,
    /// Bounds of the power headroom walk [kW].
    pub power_bounds: (f64, f64),
}

fn default_water_peak_hour() -> f64 {
    15.0
}

impl SiteDynamics {
    pub fn flat(carbon: f64, power: f64) -> Self {
        Self {
            carbon_mean: carbon,
            carbon_amplitude: 0.0,
            carbon_peak_hour: 18.0,
            carbon_noise: 0.0,
            water_seasonal_amplitude: 0.0,
            water_peak_day: 200.0,
            water_diurnal_amplitude: 0.0,
            water_peak_hour: default_water_peak_hour(),
            power_walk: 0.0,
            power_bounds: (power, power),
        }
    }
}

/// Water stress on one site over a window relative to the stream start:
/// the permit and the water intensity are scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressWindow {
    pub site: SiteId,
    pub start: i64,
    pub end: i64,
    pub permit_factor: f64,
    pub water_factor: f64,
}

/// Suppressed readings for one parameter, to exercise degradation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outage {
    pub param: ParamKey,
    pub start: i64,
    pub end: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    /// Topology and base values; sites without dynamics stay constant.
    pub base: TelemetrySnapshot,
    pub dynamics: BTreeMap<SiteId, SiteDynamics>,
    #[serde(default)]
    pub stress: Vec<StressWindow>,
    #[serde(default)]
    pub outages: Vec<Outage>,
    /// Standard deviation of link utilization noise per reading.
    #[serde(default)]
    pub utilization_noise: f64,
}

impl StreamSpec {
    pub fn constant(base: TelemetrySnapshot) -> Self {
        Self {
            base,
            dynamics: BTreeMap::new(),
            stress: Vec::new(),
            outages: Vec::new(),
            utilization_noise: 0.0,
        }
    }
}

fn noise(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).map_or(0.0, |n| n.sample(rng))
    } else {
        0.0
    }
}

/// Per-cycle persistence of link utilization deviations.
const UTIL_PERSISTENCE: f64 = 0.9;

/// Seeded reading source, one batch per cycle.
#[derive(Debug, Clone)]
pub struct StreamGenerator {
    spec: StreamSpec,
    rng: ChaCha8Rng,
    start: i64,
    cycle: i64,
    next: i64,
    power: Vec<f64>,
    util: Vec<f64>,
}

impl StreamGenerator {
    pub fn new(spec: StreamSpec, start: i64, cycle_secs: i64, seed: u64) -> Self {
        let power = spec
            .base
            .sites
            .iter()
            .map(|s| {
                spec.dynamics
                    .get(&s.id)
                    .map_or(s.power_cap, |d| s.power_cap.clamp(d.power_bounds.0, d.power_bounds.1))
            })
            .collect();
        let util = spec.base.links.iter().map(|l| l.utilization).collect();
        Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(seed),
            start,
            cycle: cycle_secs.max(1),
            next: start,
            power,
            util,
        }
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    /// Timestamp of the next batch.
    pub fn peek_time(&self) -> i64 {
        self.next
    }

    /// Readings for every parameter at the next cycle timestamp.
    pub fn next_batch(&mut self) -> (i64, Vec<RawReading>) {
        let t = self.next;
        self.next += self.cycle;
        let spec = &self.spec;
        let rng = &mut self.rng;
        let rel = t - self.start;
        let hour = t.rem_euclid(DAY) as f64 / HOUR as f64;
        let day = t.rem_euclid(365 * DAY) as f64 / DAY as f64;
        let mut out = Vec::with_capacity(spec.base.param_keys().len());
        let mut emit = |key: ParamKey, value: f64| {
            let suppressed = spec.outages.iter().any(|o| o.param == key && rel >= o.start && rel < o.end);
            if !suppressed {
                out.push(RawReading::new(key, value, t));
            }
        };
        for (s, p) in spec.base.sites.iter().zip(self.power.iter_mut()) {
            let d = spec.dynamics.get(&s.id);
            let (permit_factor, water_factor) = spec
                .stress
                .iter()
                .filter(|w| w.site == s.id && rel >= w.start && rel < w.end)
                .fold((1.0, 1.0), |(p, w), s| (p * s.permit_factor, w * s.water_factor));
            let carbon = match d {
                Some(d) => {
                    let wave = (2.0 * PI * (hour - d.carbon_peak_hour) / 24.0).cos();
                    (d.carbon_mean * (1.0 + d.carbon_amplitude * wave) + noise(rng, d.carbon_noise)).max(0.0)
                }
                None => s.carbon_intensity,
            };
            let water = match d {
                Some(d) => {
                    let season = (2.0 * PI * (day - d.water_peak_day) / 365.0).cos();
                    let daily = (2.0 * PI * (hour - d.water_peak_hour) / 24.0).cos();
                    s.water_intensity * (1.0 + d.water_seasonal_amplitude * season) * (1.0 + d.water_diurnal_amplitude * daily)
                }
                None => s.water_intensity,
            };
            if let Some(d) = d {
                *p = (*p + noise(rng, d.power_walk)).clamp(d.power_bounds.0, d.power_bounds.1);
            }
            emit(ParamKey::Site(s.id.clone(), SiteParam::PowerCap), *p);
            emit(ParamKey::Site(s.id.clone(), SiteParam::CarbonIntensity), carbon);
            emit(ParamKey::Site(s.id.clone(), SiteParam::WaterIntensity), (water * water_factor).max(0.0));
            emit(ParamKey::Site(s.id.clone(), SiteParam::WaterPermit), s.water_permit * permit_factor);
        }
        for (l, u) in spec.base.links.iter().zip(self.util.iter_mut()) {
            // AR(1) around the base utilization.
            *u = (l.utilization + UTIL_PERSISTENCE * (*u - l.utilization) + noise(rng, spec.utilization_noise)).clamp(0.0, 0.95);
            let key = |p| ParamKey::Link(l.from.clone(), l.to.clone(), p);
            emit(key(LinkParam::Capacity), l.capacity);
            emit(key(LinkParam::Delay), l.delay);
            emit(key(LinkParam::Utilization), *u);
            emit(key(LinkParam::Alarm), f64::from(u8::from(l.alarmed)));
        }
        (t, out)
    }
}

/// Time-ordered readings for every parameter at every cycle in
/// `[start, start + horizon)`.
pub fn generate_stream(spec: &StreamSpec, start: i64, horizon_secs: i64, cycle_secs: i64, seed: u64) -> Vec<RawReading> {
    let mut g = StreamGenerator::new(spec.clone(), start, cycle_secs, seed);
    let mut out = Vec::new();
    while g.peek_time() < start + horizon_secs {
        out.extend(g.next_batch().1);
    }
    out
}
