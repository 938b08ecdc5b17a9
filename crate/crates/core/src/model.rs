//! Typed infrastructure state: sites, optical links, workloads, telemetry
//! snapshots and placements.
//!
//! Units follow the field docs. Every file format in the crate is a JSON
//! rendering of these types, so field names here are the on-disk names.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub String);

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkloadId(pub String);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for WorkloadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SiteId {
    fn from(s: &str) -> Self {
        SiteId(s.to_string())
    }
}

impl From<&str> for WorkloadId {
    fn from(s: &str) -> Self {
        WorkloadId(s.to_string())
    }
}

impl From<String> for SiteId {
    fn from(s: String) -> Self {
        SiteId(s)
    }
}

impl From<String> for WorkloadId {
    fn from(s: String) -> Self {
        WorkloadId(s)
    }
}

/// A compute site at one telemetry cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: SiteId,
    /// Available electrical power [kW].
    pub power_cap: f64,
    /// Grid carbon intensity [gCO2eq/kWh].
    pub carbon_intensity: f64,
    /// Water usage effectiveness [L/kWh].
    pub water_intensity: f64,
    /// Policy ceiling on grid carbon intensity [gCO2eq/kWh].
    pub carbon_ceiling: f64,
    /// Water draw permit [L/h].
    pub water_permit: f64,
    /// Cooling capacity used by the twin thermal check [kW]; absent means unconstrained.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermal_cooling_cap: Option<f64>,
    /// Fraction of `power_cap` that must stay unallocated for UPS stability.
    #[serde(default)]
    pub ups_headroom_frac: f64,
    /// Policy region label, matched against workload locality tags.
    #[serde(default)]
    pub region_tag: String,
    /// On-site generation [kW].
    #[serde(default)]
    pub onsite_gen: f64,
    /// On-site battery discharge capacity [kW].
    #[serde(default)]
    pub onsite_batt: f64,
}

impl Site {
    /// Grid intensity prorated by the share of load covered on site.
    ///
    /// With no on-site supply this is exactly `carbon_intensity`.
    pub fn effective_carbon_intensity(&self) -> f64 {
        let onsite = self.onsite_gen + self.onsite_batt;
        if onsite <= 0.0 || self.power_cap <= 0.0 {
            return self.carbon_intensity;
        }
        self.carbon_intensity * (1.0 - onsite / self.power_cap).max(0.0)
    }

    pub fn passes_carbon_gate(&self) -> bool {
        self.effective_carbon_intensity() <= self.carbon_ceiling
    }
}

/// A directed, provisioned optical path between two sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: SiteId,
    pub to: SiteId,
    /// Transmission capacity [Gbps].
    pub capacity: f64,
    /// One-way propagation delay [ms].
    pub delay: f64,
    /// Transport energy [J/bit].
    #[serde(default)]
    pub energy_per_bit: f64,
    /// Background utilization fraction in [0, 1].
    #[serde(default)]
    pub utilization: f64,
    /// Signal-quality alarm; an alarmed link is unavailable for routing.
    #[serde(default)]
    pub alarmed: bool,
}

impl Link {
    /// Capacity not consumed by background traffic [Gbps].
    pub fn residual_capacity(&self) -> f64 {
        self.capacity * (1.0 - self.utilization.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WorkloadClass {
    Training,
    Inference,
    Batch,
}

impl WorkloadClass {
    pub const ALL: [WorkloadClass; 3] = [Self::Training, Self::Inference, Self::Batch];
}

impl fmt::Display for WorkloadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Training => "Training",
            Self::Inference => "Inference",
            Self::Batch => "Batch",
        };
        f.write_str(s)
    }
}

/// One-way latency budget. Serialized as a number of milliseconds or the
/// string `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatencyBudget {
    Bounded(f64),
    Unbounded,
}

impl LatencyBudget {
    pub fn millis(self) -> Option<f64> {
        match self {
            Self::Bounded(ms) => Some(ms),
            Self::Unbounded => None,
        }
    }

    pub fn admits(self, delay_ms: f64) -> bool {
        match self {
            Self::Bounded(ms) => delay_ms <= ms + 1e-9,
            Self::Unbounded => delay_ms.is_finite(),
        }
    }

    /// Budget reduced by a fixed overhead; `None` if nothing is left.
    pub fn tightened(self, overhead_ms: f64) -> Option<LatencyBudget> {
        match self {
            Self::Bounded(ms) => {
                let left = ms - overhead_ms;
                (left >= 0.0).then_some(Self::Bounded(left))
            }
            Self::Unbounded => Some(Self::Unbounded),
        }
    }
}

impl Serialize for LatencyBudget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Bounded(ms) => s.serialize_f64(*ms),
            Self::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for LatencyBudget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(ms) => Ok(Self::Bounded(ms)),
            Raw::Str(s) if s == "unbounded" => Ok(Self::Unbounded),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "latency_slo must be a number or \"unbounded\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub id: WorkloadId,
    /// Power demand [kW].
    pub power: f64,
    /// One-way latency SLO [ms].
    pub latency_slo: LatencyBudget,
    /// Traffic injected toward `dest` [Gbps].
    pub traffic: f64,
    pub portable: bool,
    /// Migratable state [GB].
    #[serde(default)]
    pub state_size: f64,
    /// Rehydration latency at any destination [ms].
    #[serde(default)]
    pub rehydration: f64,
    /// Per-destination rehydration overrides [ms].
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rehydration_overrides: BTreeMap<SiteId, f64>,
    pub class: WorkloadClass,
    /// Site of the demand-serving endpoint.
    pub dest: SiteId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub locality_tags: Vec<String>,
}

impl Workload {
    pub fn rehydration_at(&self, site: &SiteId) -> f64 {
        self.rehydration_overrides
            .get(site)
            .copied()
            .unwrap_or(self.rehydration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Confidence {
    Fresh,
    Interpolated,
    ForecastSubstituted,
    ConservativeBound,
    Hold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamConfidence {
    pub tag: Confidence,
    /// Half-width of the uncertainty interval around the reported value.
    #[serde(default)]
    pub uncertainty: f64,
}

impl ParamConfidence {
    pub fn fresh() -> Self {
        Self {
            tag: Confidence::Fresh,
            uncertainty: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SiteParam {
    PowerCap,
    CarbonIntensity,
    WaterIntensity,
    WaterPermit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkParam {
    Capacity,
    Delay,
    Utilization,
    Alarm,
}

impl SiteParam {
    pub const ALL: [SiteParam; 4] = [
        Self::PowerCap,
        Self::CarbonIntensity,
        Self::WaterIntensity,
        Self::WaterPermit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::PowerCap => "power_cap",
            Self::CarbonIntensity => "carbon_intensity",
            Self::WaterIntensity => "water_intensity",
            Self::WaterPermit => "water_permit",
        }
    }

    pub fn get(self, site: &Site) -> f64 {
        match self {
            Self::PowerCap => site.power_cap,
            Self::CarbonIntensity => site.carbon_intensity,
            Self::WaterIntensity => site.water_intensity,
            Self::WaterPermit => site.water_permit,
        }
    }

    pub fn set(self, site: &mut Site, value: f64) {
        match self {
            Self::PowerCap => site.power_cap = value,
            Self::CarbonIntensity => site.carbon_intensity = value,
            Self::WaterIntensity => site.water_intensity = value,
            Self::WaterPermit => site.water_permit = value,
        }
    }

    /// Whether a larger value is the safe assumption (intensities) or a
    /// smaller one (capacities and permits).
    pub fn higher_is_pessimistic(self) -> bool {
        matches!(self, Self::CarbonIntensity | Self::WaterIntensity)
    }
}

impl LinkParam {
    pub const ALL: [LinkParam; 4] = [Self::Capacity, Self::Delay, Self::Utilization, Self::Alarm];

    pub fn name(self) -> &'static str {
        match self {
            Self::Capacity => "capacity",
            Self::Delay => "delay",
            Self::Utilization => "utilization",
            Self::Alarm => "alarmed",
        }
    }

    pub fn get(self, link: &Link) -> f64 {
        match self {
            Self::Capacity => link.capacity,
            Self::Delay => link.delay,
            Self::Utilization => link.utilization,
            Self::Alarm => f64::from(u8::from(link.alarmed)),
        }
    }

    pub fn set(self, link: &mut Link, value: f64) {
        match self {
            Self::Capacity => link.capacity = value,
            Self::Delay => link.delay = value,
            Self::Utilization => link.utilization = value,
            Self::Alarm => link.alarmed = value != 0.0,
        }
    }

    pub fn higher_is_pessimistic(self) -> bool {
        matches!(self, Self::Delay | Self::Utilization | Self::Alarm)
    }
}

/// Name of one scalar in the telemetry parameter vector, rendered as
/// `site/<id>/<param>` or `link/<from>/<to>/<param>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKey {
    Site(SiteId, SiteParam),
    Link(SiteId, SiteId, LinkParam),
}

impl ParamKey {
    /// Slowly varying parameters are smoothed by the estimator. Permits are
    /// regulatory steps, not noisy measurements, and pass through.
    pub fn is_slow(&self) -> bool {
        matches!(
            self,
            Self::Site(_, SiteParam::WaterIntensity) | Self::Link(_, _, LinkParam::Delay)
        )
    }

    pub fn higher_is_pessimistic(&self) -> bool {
        match self {
            Self::Site(_, p) => p.higher_is_pessimistic(),
            Self::Link(_, _, p) => p.higher_is_pessimistic(),
        }
    }
}

impl fmt::Display for ParamKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Site(s, p) => write!(f, "site/{}/{}", s, p.name()),
            Self::Link(a, b, p) => write!(f, "link/{}/{}/{}", a, b, p.name()),
        }
    }
}

impl FromStr for ParamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        let bad = || Error::Invalid(format!("malformed parameter key `{s}`"));
        match parts.as_slice() {
            ["site", id, p] => {
                let param = SiteParam::ALL
                    .into_iter()
                    .find(|x| x.name() == *p)
                    .ok_or_else(bad)?;
                Ok(Self::Site(SiteId(id.to_string()), param))
            }
            ["link", a, b, p] => {
                let param = LinkParam::ALL
                    .into_iter()
                    .find(|x| x.name() == *p)
                    .ok_or_else(bad)?;
                Ok(Self::Link(SiteId(a.to_string()), SiteId(b.to_string()), param))
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for ParamKey {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    /// Unix seconds.
    pub timestamp: i64,
    pub value: f64,
}

/// Full parameter vector for one control cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    /// Unix seconds of the control cycle.
    pub timestamp: i64,
    pub sites: Vec<Site>,
    pub links: Vec<Link>,
    #[serde(default)]
    pub confidence: BTreeMap<ParamKey, ParamConfidence>,
    /// Forecast horizon Δ [min].
    #[serde(default)]
    pub forecast_horizon_min: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub forecasts: BTreeMap<ParamKey, Vec<ForecastPoint>>,
    /// Set when an unsubstitutable parameter is stale; optimization must be skipped.
    #[serde(default)]
    pub hold: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hold_reasons: Vec<String>,
}

impl TelemetrySnapshot {
    pub fn new(timestamp: i64, sites: Vec<Site>, links: Vec<Link>) -> Self {
        let mut snap = Self {
            timestamp,
            sites,
            links,
            confidence: BTreeMap::new(),
            forecast_horizon_min: 0.0,
            forecasts: BTreeMap::new(),
            hold: false,
            hold_reasons: Vec::new(),
        };
        snap.mark_all_fresh();
        snap
    }

    pub fn param_keys(&self) -> Vec<ParamKey> {
        let mut keys = Vec::new();
        for s in &self.sites {
            for p in SiteParam::ALL {
                keys.push(ParamKey::Site(s.id.clone(), p));
            }
        }
        for l in &self.links {
            for p in LinkParam::ALL {
                keys.push(ParamKey::Link(l.from.clone(), l.to.clone(), p));
            }
        }
        keys
    }

    pub fn mark_all_fresh(&mut self) {
        self.confidence = self
            .param_keys()
            .into_iter()
            .map(|k| (k, ParamConfidence::fresh()))
            .collect();
    }

    pub fn site_index(&self, id: &SiteId) -> Option<usize> {
        self.sites.iter().position(|s| &s.id == id)
    }

    pub fn link(&self, from: &SiteId, to: &SiteId) -> Option<&Link> {
        self.links.iter().find(|l| &l.from == from && &l.to == to)
    }

    pub fn param(&self, key: &ParamKey) -> Option<f64> {
        match key {
            ParamKey::Site(id, p) => self.sites.iter().find(|s| &s.id == id).map(|s| p.get(s)),
            ParamKey::Link(a, b, p) => self.link(a, b).map(|l| p.get(l)),
        }
    }

    pub fn set_param(&mut self, key: &ParamKey, value: f64) -> bool {
        match key {
            ParamKey::Site(id, p) => match self.sites.iter_mut().find(|s| &s.id == id) {
                Some(s) => {
                    p.set(s, value);
                    true
                }
                None => false,
            },
            ParamKey::Link(a, b, p) => {
                match self.links.iter_mut().find(|l| &l.from == a && &l.to == b) {
                    Some(l) => {
                        p.set(l, value);
                        true
                    }
                    None => false,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFlow {
    pub workload: WorkloadId,
    pub nodes: Vec<SiteId>,
    /// [Gbps]
    pub rate: f64,
    /// [ms]
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcFlow {
    pub from: SiteId,
    pub to: SiteId,
    pub workload: WorkloadId,
    /// [Gbps]
    pub rate: f64,
}

/// A certified placement and routing.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Placement {
    pub assignment: BTreeMap<WorkloadId, SiteId>,
    #[serde(default)]
    pub paths: Vec<PathFlow>,
    #[serde(default)]
    pub flows: Vec<ArcFlow>,
    /// Normalized objective value (dimensionless, plus migration penalties).
    #[serde(default)]
    pub objective: f64,
    /// Grid carbon rate of the placed load [gCO2eq/h].
    #[serde(default)]
    pub carbon_rate: f64,
    /// Water draw of the placed load [L/h].
    #[serde(default)]
    pub water_rate: f64,
    /// One-time migration carbon relative to the incumbent [gCO2eq].
    #[serde(default)]
    pub migration_carbon: f64,
}

/// A snapshot and the workloads it must serve, as exchanged on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub snapshot: TelemetrySnapshot,
    pub workloads: Vec<Workload>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorkloadSet {
    pub workloads: Vec<Workload>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub links: Vec<Link>,
}

/// Water draw [L/h] of `power_kw` of IT load at `water_intensity` [L/kWh].
pub fn water_draw_lph(water_intensity: f64, power_kw: f64) -> f64 {
    water_intensity * power_kw
}

/// Grid carbon rate [gCO2eq/h] of `power_kw` at `carbon_intensity` [g/kWh].
pub fn carbon_rate_gph(carbon_intensity: f64, power_kw: f64) -> f64 {
    carbon_intensity * power_kw
}

/// Lists every invariant violation in a snapshot and the workloads it must serve.
pub fn validate_snapshot(snapshot: &TelemetrySnapshot, workloads: &[Workload]) -> Vec<String> {
    let mut out = Vec::new();
    let mut ids = BTreeSet::new();
    for s in &snapshot.sites {
        if !ids.insert(&s.id) {
            out.push(format!("site {}: duplicate id", s.id));
        }
        let physical = [
            ("power_cap", s.power_cap),
            ("carbon_intensity", s.carbon_intensity),
            ("water_intensity", s.water_intensity),
            ("water_permit", s.water_permit),
            ("onsite_gen", s.onsite_gen),
            ("onsite_batt", s.onsite_batt),
            ("thermal_cooling_cap", s.thermal_cooling_cap.unwrap_or(0.0)),
        ];
        for (name, v) in physical {
            if !(v >= 0.0) || !v.is_finite() {
                out.push(format!("site {}: {name} must be finite and >= 0, got {v}", s.id));
            }
        }
        if !(s.carbon_ceiling > 0.0) {
            out.push(format!(
                "site {}: carbon_ceiling must be > 0, got {}",
                s.id, s.carbon_ceiling
            ));
        }
        if !(0.0..=1.0).contains(&s.ups_headroom_frac) {
            out.push(format!(
                "site {}: ups_headroom_frac must lie in [0,1], got {}",
                s.id, s.ups_headroom_frac
            ));
        }
    }
    let mut edges = BTreeSet::new();
    for l in &snapshot.links {
        let name = format!("link {}->{}", l.from, l.to);
        if !ids.contains(&l.from) || !ids.contains(&l.to) {
            out.push(format!("{name}: endpoint is not a known site"));
        }
        if l.from == l.to {
            out.push(format!("{name}: self loop"));
        } else if !(l.delay > 0.0) {
            out.push(format!("{name}: delay must be > 0, got {}", l.delay));
        }
        if !(l.capacity >= 0.0) {
            out.push(format!("{name}: capacity must be >= 0, got {}", l.capacity));
        }
        if !(l.energy_per_bit >= 0.0) {
            out.push(format!("{name}: energy_per_bit must be >= 0"));
        }
        if !(0.0..=1.0).contains(&l.utilization) {
            out.push(format!("{name}: utilization must lie in [0,1], got {}", l.utilization));
        }
        if !edges.insert((&l.from, &l.to)) {
            out.push(format!("{name}: duplicate edge"));
        }
    }
    let mut wids = BTreeSet::new();
    for w in workloads {
        if !wids.insert(&w.id) {
            out.push(format!("workload {}: duplicate id", w.id));
        }
        if !(w.power > 0.0) {
            out.push(format!("workload {}: power must be > 0, got {}", w.id, w.power));
        }
        if !(w.traffic >= 0.0) {
            out.push(format!("workload {}: traffic must be >= 0", w.id));
        }
        if let LatencyBudget::Bounded(ms) = w.latency_slo {
            if !(ms > 0.0) {
                out.push(format!("workload {}: latency_slo must be > 0, got {ms}", w.id));
            }
        }
        if !(w.state_size >= 0.0) || !(w.rehydration >= 0.0) {
            out.push(format!("workload {}: state_size and rehydration must be >= 0", w.id));
        }
        if w.class == WorkloadClass::Training && w.portable {
            out.push(format!("workload {}: training workloads cannot be portable", w.id));
        }
        if !ids.contains(&w.dest) {
            out.push(format!("workload {}: unknown dest site {}", w.id, w.dest));
        }
        for site in w.rehydration_overrides.keys() {
            if !ids.contains(site) {
                out.push(format!("workload {}: rehydration override for unknown site {site}", w.id));
            }
        }
    }
    for key in snapshot.param_keys() {
        if !snapshot.confidence.contains_key(&key) {
            out.push(format!("parameter {key}: missing confidence tag"));
        }
    }
    out
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn site(id: &str, power: f64, carbon: f64, water: f64) -> Site {
        Site {
            id: id.into(),
            power_cap: power,
            carbon_intensity: carbon,
            water_intensity: water,
            carbon_ceiling: 1000.0,
            water_permit: 1e9,
            thermal_cooling_cap: None,
            ups_headroom_frac: 0.0,
            region_tag: String::new(),
            onsite_gen: 0.0,
            onsite_batt: 0.0,
        }
    }

    pub fn link(from: &str, to: &str, delay: f64) -> Link {
        Link {
            from: from.into(),
            to: to.into(),
            capacity: 100.0,
            delay,
            energy_per_bit: 0.0,
            utilization: 0.0,
            alarmed: false,
        }
    }

    pub fn complete(n: usize, delay: f64) -> TelemetrySnapshot {
        let sites: Vec<Site> = (0..n)
            .map(|i| site(&format!("s{i}"), 1000.0, 200.0, 1.0))
            .collect();
        let mut links = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    links.push(link(&format!("s{a}"), &format!("s{b}"), delay));
                }
            }
        }
        TelemetrySnapshot::new(0, sites, links)
    }

    pub fn workload(id: &str, power: f64, dest: &str) -> Workload {
        Workload {
            id: id.into(),
            power,
            latency_slo: LatencyBudget::Unbounded,
            traffic: 0.0,
            portable: true,
            state_size: 0.0,
            rehydration: 0.0,
            rehydration_overrides: BTreeMap::new(),
            class: WorkloadClass::Batch,
            dest: dest.into(),
            locality_tags: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn well_formed_snapshot_has_no_violations() {
        let snap = complete(4, 5.0);
        let w = vec![workload("w0", 10.0, "s1")];
        assert!(validate_snapshot(&snap, &w).is_empty());
    }

    #[test]
    fn zero_delay_link_is_one_violation() {
        let mut snap = complete(4, 5.0);
        snap.links[3].delay = 0.0;
        let v = validate_snapshot(&snap, &[]);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].contains("delay"));
    }

    #[test]
    fn unknown_dest_is_one_violation() {
        let snap = complete(4, 5.0);
        let v = validate_snapshot(&snap, &[workload("w0", 10.0, "nowhere")]);
        assert_eq!(v.len(), 1, "{v:?}");
    }

    #[test]
    fn portable_training_is_rejected() {
        let snap = complete(2, 5.0);
        let mut w = workload("w0", 10.0, "s0");
        w.class = WorkloadClass::Training;
        assert_eq!(validate_snapshot(&snap, &[w]).len(), 1);
    }

    #[test]
    fn water_units_close() {
        // L/kWh * kW = L/h, the permit unit.
        let draw = water_draw_lph(2.0, 500.0);
        assert_eq!(draw, 1000.0);
        let permit_lph = 900.0;
        assert!(draw > permit_lph);
    }

    #[test]
    fn latency_budget_json() {
        let b: LatencyBudget = serde_json::from_str("\"unbounded\"").unwrap();
        assert_eq!(b, LatencyBudget::Unbounded);
        let b: LatencyBudget = serde_json::from_str("12.5").unwrap();
        assert_eq!(b, LatencyBudget::Bounded(12.5));
        assert!(serde_json::from_str::<LatencyBudget>("\"inf\"").is_err());
    }

    #[test]
    fn param_key_round_trip() {
        let k = ParamKey::Link("a".into(), "b".into(), LinkParam::Alarm);
        assert_eq!(k.to_string(), "link/a/b/alarmed");
        assert_eq!(k.to_string().parse::<ParamKey>().unwrap(), k);
    }

    #[test]
    fn blended_carbon_prorates_onsite_supply() {
        let mut s = site("a", 100.0, 600.0, 1.0);
        s.carbon_ceiling = 500.0;
        assert!(!s.passes_carbon_gate());
        s.onsite_gen = 25.0;
        assert!((s.effective_carbon_intensity() - 450.0).abs() < 1e-12);
        assert!(s.passes_carbon_gate());
    }
}
