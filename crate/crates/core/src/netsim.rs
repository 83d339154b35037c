//! Geography, link capacities, and the regional in-network failure model.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CityId, IspId, Peer, PeerId};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub name: String,
    /// Degrees north.
    pub lat: f64,
    /// Degrees east.
    pub lon: f64,
}

impl City {
    pub fn new(name: &str, lat: f64, lon: f64) -> Self {
        City { name: name.to_string(), lat, lon }
    }
}

pub fn default_cities() -> Vec<City> {
    vec![
        City::new("Beijing", 39.9042, 116.4074),
        City::new("Shanghai", 31.2304, 121.4737),
        City::new("Guangzhou", 23.1291, 113.2644),
        City::new("Chengdu", 30.5728, 104.0668),
        City::new("Wuhan", 30.5928, 114.3055),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct CityTable {
    cities: Vec<City>,
}

impl CityTable {
    pub fn new(cities: Vec<City>) -> Result<Self> {
        if cities.is_empty() {
            return Err(Error::Argument("city table is empty".into()));
        }
        for c in &cities {
            if !(-90.0..=90.0).contains(&c.lat) || !(-180.0..=180.0).contains(&c.lon) {
                return Err(Error::Argument(format!("city {} has out-of-range coordinates", c.name)));
            }
        }
        Ok(CityTable { cities })
    }

    /// Reads a `name,lat,lon` CSV with a header row.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut cities = Vec::new();
        for row in rdr.deserialize() {
            let city: City = row?;
            cities.push(city);
        }
        CityTable::new(cities).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn cities(&self) -> &[City] {
        &self.cities
    }

    pub fn get(&self, id: CityId) -> Result<&City> {
        self.cities.get(id.0 as usize).ok_or_else(|| Error::UnknownCity(format!("#{}", id.0)))
    }

    pub fn lookup(&self, name: &str) -> Result<CityId> {
        self.cities
            .iter()
            .position(|c| c.name == name)
            .map(|i| CityId(i as u16))
            .ok_or_else(|| Error::UnknownCity(name.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = CityId> {
        (0..self.cities.len() as u16).map(CityId)
    }

    /// Great-circle distance in km.
    pub fn distance_km(&self, a: CityId, b: CityId) -> Result<f64> {
        Ok(haversine_km(self.get(a)?, self.get(b)?))
    }

    /// All pairwise distances, row-major by city id.
    pub fn distance_matrix(&self) -> Vec<Vec<f64>> {
        self.cities.iter().map(|a| self.cities.iter().map(|b| haversine_km(a, b)).collect()).collect()
    }
}

pub fn haversine_km(a: &City, b: &City) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Affine distance-to-latency model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModel {
    pub base_ms: f64,
    pub slope_ms_per_km: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel { base_ms: 5.0, slope_ms_per_km: 0.02 }
    }
}

impl LatencyModel {
    pub fn latency_ms(&self, distance_km: f64) -> f64 {
        self.base_ms + self.slope_ms_per_km * distance_km.max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthBucket {
    pub kbps: f64,
    pub prob: f64,
}

pub fn default_uplink_profile() -> Vec<BandwidthBucket> {
    [(512.0, 0.2), (1024.0, 0.4), (3072.0, 0.25), (10240.0, 0.15)]
        .into_iter()
        .map(|(kbps, prob)| BandwidthBucket { kbps, prob })
        .collect()
}

/// Discrete uplink distribution; downlink is a fixed multiple of the uplink.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthProfile {
    buckets: Vec<BandwidthBucket>,
    downlink_factor: f64,
}

impl BandwidthProfile {
    pub fn new(buckets: Vec<BandwidthBucket>, downlink_factor: f64) -> Result<Self> {
        if buckets.is_empty() {
            return Err(Error::Argument("bandwidth profile has no buckets".into()));
        }
        if buckets.iter().any(|b| !(b.kbps.is_finite() && b.kbps > 0.0) || b.prob.is_nan() || b.prob < 0.0) {
            return Err(Error::Argument("bucket capacities must be > 0 and probabilities >= 0".into()));
        }
        let total: f64 = buckets.iter().map(|b| b.prob).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(format!("bucket probabilities sum to {total}, expected 1")));
        }
        if downlink_factor.is_nan() || downlink_factor <= 0.0 {
            return Err(Error::Argument("downlink factor must be > 0".into()));
        }
        Ok(BandwidthProfile { buckets, downlink_factor })
    }

    pub fn buckets(&self) -> &[BandwidthBucket] {
        &self.buckets
    }

    /// Draws `(uplink_kbps, downlink_kbps)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.buckets.last().expect("non-empty").kbps;
        for b in &self.buckets {
            acc += b.prob;
            if u < acc {
                pick = b.kbps;
                break;
            }
        }
        (pick, pick * self.downlink_factor)
    }
}

impl Default for BandwidthProfile {
    fn default() -> Self {
        BandwidthProfile::new(default_uplink_profile(), 4.0).expect("default profile is valid")
    }
}

pub fn assign_bandwidth<R: Rng + ?Sized>(profile: &BandwidthProfile, rng: &mut R) -> (f64, f64) {
    profile.sample(rng)
}

/// Uniform over `1..=isp_count`.
pub fn assign_isp<R: Rng + ?Sized>(rng: &mut R, isp_count: u16) -> IspId {
    assert!(isp_count >= 1, "isp_count must be >= 1");
    IspId(rng.random_range(1..=isp_count))
}

/// Uniform city placement.
pub fn assign_city<R: Rng + ?Sized>(rng: &mut R, table: &CityTable) -> CityId {
    CityId(rng.random_range(0..table.len() as u16))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Server,
    Peer(PeerId),
}

/// A regional failure: during `[start_time, end_time)` the affected peers
/// can reach neither the server nor each other.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureScenario {
    pub region: CityId,
    pub ratio: f64,
    pub start_time: f64,
    pub end_time: f64,
    pub affected_set: BTreeSet<PeerId>,
}

impl FailureScenario {
    pub fn new(region: CityId, ratio: f64, start_time: f64, end_time: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&ratio) {
            return Err(Error::Argument(format!("failure ratio {ratio} not in [0, 1]")));
        }
        if start_time.is_nan() || end_time.is_nan() || start_time >= end_time {
            return Err(Error::Argument(format!("failure window [{start_time}, {end_time}) is empty")));
        }
        Ok(FailureScenario { region, ratio, start_time, end_time, affected_set: BTreeSet::new() })
    }

    /// A scenario that never affects anyone.
    pub fn none() -> Self {
        FailureScenario {
            region: CityId(0),
            ratio: 0.0,
            start_time: 0.0,
            end_time: f64::MIN_POSITIVE,
            affected_set: BTreeSet::new(),
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        self.start_time <= t && t < self.end_time
    }

    pub fn is_affected(&self, peer: PeerId, t: f64) -> bool {
        self.is_active(t) && self.affected_set.contains(&peer)
    }

    fn endpoint_affected(&self, e: Endpoint, t: f64) -> bool {
        match e {
            Endpoint::Server => false,
            Endpoint::Peer(p) => self.is_affected(p, t),
        }
    }
}

/// `floor(ratio * n)` without losing exact products such as `0.6 * 100`.
pub fn affected_count(ratio: f64, n: usize) -> usize {
    ((ratio * n as f64) + 1e-9).floor().min(n as f64) as usize
}

/// Samples `floor(ratio * |region|)` region peers uniformly without
/// replacement into the affected set and flags them if the window is open
/// at `now`.
pub fn inject_failure<R: Rng + ?Sized>(
    mut scenario: FailureScenario,
    peers: &mut [Peer],
    now: f64,
    rng: &mut R,
) -> FailureScenario {
    let region: Vec<usize> =
        peers.iter().enumerate().filter(|(_, p)| p.city == scenario.region).map(|(i, _)| i).collect();
    let k = affected_count(scenario.ratio, region.len());
    let mut picked: Vec<usize> = index::sample(rng, region.len(), k).into_iter().map(|i| region[i]).collect();
    picked.sort_unstable();
    scenario.affected_set = picked.iter().map(|&i| peers[i].id).collect();
    let active = scenario.is_active(now);
    for &i in &picked {
        peers[i].in_failed_set = active;
    }
    scenario
}

/// Connectivity under the failure model. Symmetric in `x` and `y`.
pub fn can_connect(x: Endpoint, y: Endpoint, t: f64, scenario: &FailureScenario) -> bool {
    if !scenario.is_active(t) {
        return true;
    }
    let (ax, ay) = (scenario.endpoint_affected(x, t), scenario.endpoint_affected(y, t));
    match (x, y) {
        (Endpoint::Server, Endpoint::Server) => true,
        (Endpoint::Server, _) => !ay,
        (_, Endpoint::Server) => !ax,
        _ => !(ax && ay),
    }
}

/// Estimated relay-to-requester throughput in kbps.
pub fn available_throughput(relay: &Peer, requester: &Peer, t: f64, scenario: &FailureScenario) -> f64 {
    if !can_connect(Endpoint::Peer(relay.id), Endpoint::Peer(requester.id), t, scenario) {
        return 0.0;
    }
    relay.free_uplink_kbps().min(requester.downlink_kbps)
}
