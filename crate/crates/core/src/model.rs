//! Domain types and the validated simulation configuration.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::churn::{self, SessionModel, TimeToStayModel};
use crate::error::{Error, Result};
use crate::netsim::{BandwidthBucket, City, LatencyModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub u32);

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl PeerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Index into the city table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CityId(pub u16);

/// ISP number, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IspId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServerId(pub u32);

/// A browser session that can act as a requester or a relay.
#[derive(Debug, Clone, PartialEq)]
pub struct Peer {
    pub id: PeerId,
    pub city: CityId,
    pub isp: IspId,
    pub uplink_kbps: f64,
    pub downlink_kbps: f64,
    /// Sim seconds.
    pub join_time: f64,
    /// Sim seconds.
    pub session_duration: f64,
    /// Requesters currently being relayed.
    pub workload: u32,
    /// Uplink currently committed to relayed transfers.
    pub relayed_kbps_in_use: f64,
    /// Server-side fetches in flight on behalf of requesters.
    pub active_fetches: u32,
    /// Set once this session has seen a content fetch fail.
    pub fetch_failure_history: bool,
    pub in_failed_set: bool,
}

impl Peer {
    pub fn new(
        id: PeerId,
        city: CityId,
        isp: IspId,
        uplink_kbps: f64,
        downlink_kbps: f64,
        join_time: f64,
        session_duration: f64,
    ) -> Self {
        Peer {
            id,
            city,
            isp,
            uplink_kbps,
            downlink_kbps,
            join_time,
            session_duration,
            workload: 0,
            relayed_kbps_in_use: 0.0,
            active_fetches: 0,
            fetch_failure_history: false,
            in_failed_set: false,
        }
    }

    pub fn leave_time(&self) -> f64 {
        self.join_time + self.session_duration
    }

    pub fn is_online(&self, t: f64) -> bool {
        self.join_time <= t && t < self.leave_time()
    }

    /// Seconds spent on the page so far. Negative before joining.
    pub fn elapse(&self, t: f64) -> f64 {
        t - self.join_time
    }

    pub fn free_uplink_kbps(&self) -> f64 {
        (self.uplink_kbps - self.relayed_kbps_in_use).max(0.0)
    }

    pub fn uplink_utilization(&self) -> f64 {
        self.relayed_kbps_in_use / self.uplink_kbps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContentItem {
    pub size_kb: f64,
    pub origin_server: ServerId,
}

impl ContentItem {
    pub fn new(size_kb: f64) -> Result<Self> {
        if !(size_kb > 0.0 && size_kb.is_finite()) {
            return Err(Error::Argument(format!("content size must be > 0 KB, got {size_kb}")));
        }
        Ok(ContentItem { size_kb, origin_server: ServerId(0) })
    }

    pub fn size_kbit(&self) -> f64 {
        self.size_kb * 8.0
    }
}

/// One row of a session trace. Timestamps are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub user_id: String,
    pub request_ts: f64,
    pub leave_ts: f64,
    pub fetch_failure: bool,
}

impl TraceRecord {
    pub fn session_seconds(&self) -> f64 {
        self.leave_ts - self.request_ts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    NoRelay,
    Random,
    PathAware,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::PathAware, Strategy::Random, Strategy::NoRelay];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::NoRelay => "no-relay",
            Strategy::Random => "random",
            Strategy::PathAware => "path-aware",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "no-relay" => Ok(Strategy::NoRelay),
            "random" => Ok(Strategy::Random),
            "path-aware" => Ok(Strategy::PathAware),
            other => {
                Err(Error::Argument(format!("unknown strategy `{other}` (expected no-relay, random or path-aware)")))
            }
        }
    }
}

/// How the workload threshold `gamma` is read when filtering candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadFilter {
    /// Drop a candidate when committed uplink / uplink capacity > gamma.
    Utilization,
    /// Drop a candidate when it already relays for more than
    /// `workload_count_limit` requesters.
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of synthetic sessions to generate.
    pub peer_count: usize,
    pub cities: Vec<City>,
    pub isp_count: u16,
    /// Poisson arrival rate, sessions per sim minute.
    pub arrival_rate_per_min: f64,
    pub pareto_shape: f64,
    /// Pareto scale in minutes.
    pub pareto_scale_min: f64,
    /// Share of the candidate list drawn from same-city, same-ISP peers.
    pub alpha: f64,
    /// Workload threshold.
    pub gamma: f64,
    /// Candidate list length.
    pub zeta: usize,
    pub workload_filter: WorkloadFilter,
    pub workload_count_limit: u32,
    /// Fraction of the failure region's peers that lose connectivity.
    pub failure_ratio: f64,
    /// Name of the city hit by the failure.
    pub failure_region: String,
    pub failure_start_s: f64,
    /// Defaults to the end of the simulation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure_end_s: Option<f64>,
    /// Content size requested by every session in a single run.
    pub content_size_kb: f64,
    /// Default size grid for sweeps.
    pub content_sizes_kb: Vec<f64>,
    pub rng_seed: u64,
    pub strategy: Strategy,
    pub sim_duration_s: f64,
    pub latency_base_ms: f64,
    pub latency_slope_ms_per_km: f64,
    pub uplink_profile: Vec<BandwidthBucket>,
    /// Downlink capacity as a multiple of the drawn uplink bucket.
    pub downlink_factor: f64,
    /// Extra wait before a requester gives up on an attempt that failed to
    /// start (relay gone, unreachable, or saturated).
    pub failed_attempt_timeout_s: f64,
    pub time_to_stay: TimeToStayModel,
}

pub const DEFAULT_SIZES_KB: [f64; 6] = [500.0, 1000.0, 2000.0, 4000.0, 8000.0, 16000.0];

impl Default for SimConfig {
    fn default() -> Self {
        let (scale, shape) = churn::default_pareto();
        SimConfig {
            peer_count: 5000,
            cities: crate::netsim::default_cities(),
            isp_count: 3,
            arrival_rate_per_min: 30.0,
            pareto_shape: shape,
            pareto_scale_min: scale,
            alpha: 0.2,
            gamma: 0.8,
            zeta: 10,
            workload_filter: WorkloadFilter::Utilization,
            workload_count_limit: 2,
            failure_ratio: 0.6,
            failure_region: "Beijing".to_string(),
            failure_start_s: 0.0,
            failure_end_s: None,
            content_size_kb: 1600.0,
            content_sizes_kb: DEFAULT_SIZES_KB.to_vec(),
            rng_seed: 42,
            strategy: Strategy::PathAware,
            sim_duration_s: 4.0 * 3600.0,
            latency_base_ms: 5.0,
            latency_slope_ms_per_km: 0.02,
            uplink_profile: crate::netsim::default_uplink_profile(),
            downlink_factor: 4.0,
            failed_attempt_timeout_s: 2.0,
            time_to_stay: TimeToStayModel::default(),
        }
    }
}

impl SimConfig {
    pub fn session_model(&self) -> SessionModel {
        SessionModel {
            lambda_per_min: self.arrival_rate_per_min,
            pareto_shape: self.pareto_shape,
            pareto_scale_min: self.pareto_scale_min,
        }
    }

    pub fn latency_model(&self) -> LatencyModel {
        LatencyModel { base_ms: self.latency_base_ms, slope_ms_per_km: self.latency_slope_ms_per_km }
    }

    pub fn failure_end(&self) -> f64 {
        self.failure_end_s.unwrap_or(self.sim_duration_s)
    }
}

/// One violated configuration constraint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub constraint: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

/// Checks every configuration constraint and reports all violations at once.
pub fn validate_config(cfg: SimConfig) -> Result<SimConfig> {
    let mut errs = Vec::new();
    let mut check = |ok: bool, field: &str, constraint: &str| {
        if !ok {
            errs.push(FieldError { field: field.to_string(), constraint: constraint.to_string() });
        }
    };
    let unit = |x: f64| (0.0..=1.0).contains(&x);
    let pos = |x: f64| x > 0.0 && x.is_finite();
    let nonneg = |x: f64| x >= 0.0 && x.is_finite();

    check(cfg.peer_count > 0, "peer_count", "must be > 0");
    check(!cfg.cities.is_empty(), "cities", "at least one city required");
    for (i, c) in cfg.cities.iter().enumerate() {
        check((-90.0..=90.0).contains(&c.lat), &format!("cities[{i}].lat"), "must be in [-90, 90]");
        check((-180.0..=180.0).contains(&c.lon), &format!("cities[{i}].lon"), "must be in [-180, 180]");
    }
    for (i, a) in cfg.cities.iter().enumerate() {
        if cfg.cities[..i].iter().any(|b| b.name == a.name) {
            check(false, &format!("cities[{i}].name"), "duplicate city name");
        }
    }
    check(cfg.isp_count > 0, "isp_count", "must be > 0");
    check(pos(cfg.arrival_rate_per_min), "arrival_rate_per_min", "must be > 0");
    check(pos(cfg.pareto_shape), "pareto_shape", "must be > 0");
    check(pos(cfg.pareto_scale_min), "pareto_scale_min", "must be > 0");
    check(unit(cfg.alpha), "alpha", "must satisfy 0 <= alpha <= 1");
    check(unit(cfg.gamma), "gamma", "must satisfy 0 <= gamma <= 1");
    check(cfg.zeta >= 1, "zeta", "must satisfy zeta >= 1");
    check(unit(cfg.failure_ratio), "failure_ratio", "must satisfy 0 <= failure_ratio <= 1");
    check(
        cfg.cities.iter().any(|c| c.name == cfg.failure_region),
        "failure_region",
        "must name a city in the city table",
    );
    check(nonneg(cfg.failure_start_s), "failure_start_s", "must be >= 0");
    check(cfg.failure_start_s < cfg.failure_end(), "failure_end_s", "must be > failure_start_s");
    check(pos(cfg.content_size_kb), "content_size_kb", "must be > 0");
    check(!cfg.content_sizes_kb.is_empty(), "content_sizes_kb", "must be non-empty");
    check(cfg.content_sizes_kb.iter().all(|&s| pos(s)), "content_sizes_kb", "every size must be > 0");
    check(pos(cfg.sim_duration_s), "sim_duration_s", "must be > 0");
    check(nonneg(cfg.latency_base_ms), "latency_base_ms", "must be >= 0");
    check(nonneg(cfg.latency_slope_ms_per_km), "latency_slope_ms_per_km", "must be >= 0");
    if let Err(e) = crate::netsim::BandwidthProfile::new(cfg.uplink_profile.clone(), cfg.downlink_factor) {
        check(false, "uplink_profile", &e.to_string());
    }
    check(pos(cfg.downlink_factor), "downlink_factor", "must be > 0");
    check(nonneg(cfg.failed_attempt_timeout_s), "failed_attempt_timeout_s", "must be >= 0");
    let tts = &cfg.time_to_stay;
    check(
        [tts.c0, tts.c1, tts.c2].iter().all(|c| c.is_finite()) && pos(tts.valid_elapse_max_min),
        "time_to_stay",
        "coefficients must be finite and valid_elapse_max_min > 0",
    );

    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fields(err: Error) -> Vec<String> {
        match err {
            Error::Config(v) => v.into_iter().map(|e| e.field).collect(),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn default_config_is_valid() {
        let cfg = SimConfig::default();
        assert_eq!((cfg.alpha, cfg.gamma, cfg.zeta, cfg.peer_count), (0.2, 0.8, 10, 5000));
        assert_eq!(validate_config(cfg.clone()).unwrap(), cfg);
    }

    #[test]
    fn boundary_values_are_valid() {
        let cfg = SimConfig { alpha: 0.0, zeta: 1, failure_ratio: 0.0, ..SimConfig::default() };
        assert!(validate_config(cfg).is_ok());
    }

    #[test]
    fn alpha_out_of_range_is_named() {
        let cfg = SimConfig { alpha: 1.5, ..SimConfig::default() };
        assert_eq!(fields(validate_config(cfg).unwrap_err()), vec!["alpha"]);
    }

    #[test]
    fn every_violation_is_reported() {
        let cfg = SimConfig {
            gamma: -0.1,
            zeta: 0,
            failure_ratio: 2.0,
            peer_count: 0,
            failure_region: "Atlantis".into(),
            ..SimConfig::default()
        };
        let got = fields(validate_config(cfg).unwrap_err());
        for f in ["gamma", "zeta", "failure_ratio", "peer_count", "failure_region"] {
            assert!(got.iter().any(|g| g == f), "missing {f} in {got:?}");
        }
    }

    #[test]
    fn online_interval_is_half_open() {
        let p = Peer::new(PeerId(0), CityId(0), IspId(1), 512.0, 2048.0, 10.0, 5.0);
        assert!(!p.is_online(9.999));
        assert!(p.is_online(10.0));
        assert!(p.is_online(14.999));
        assert!(!p.is_online(15.0));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert!("greedy".parse::<Strategy>().is_err());
    }

    #[test]
    fn content_size_must_be_positive() {
        assert!(ContentItem::new(0.0).is_err());
        assert_eq!(ContentItem::new(500.0).unwrap().size_kbit(), 4000.0);
    }
}
