//! The peer table and failure scenario a run is played over.

use crate::churn::SessionModel;
use crate::error::{Error, Result};
use crate::model::{CityId, Peer, PeerId, SimConfig, TraceRecord};
use crate::netsim::{self, BandwidthProfile, CityTable, FailureScenario};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone)]
pub struct World {
    pub cities: CityTable,
    /// Indexed by `PeerId`.
    pub peers: Vec<Peer>,
    pub scenario: FailureScenario,
    /// Events at or after this time are not processed.
    pub end_time: f64,
}

impl World {
    /// Poisson arrivals with Pareto sessions, uniform city placement, uniform
    /// ISPs, profile bandwidths, and a random failure set in the region.
    pub fn synthetic(cfg: &SimConfig) -> Result<World> {
        let cities = CityTable::new(cfg.cities.clone())?;
        let profile = BandwidthProfile::new(cfg.uplink_profile.clone(), cfg.downlink_factor)?;
        let model: SessionModel = cfg.session_model();
        let gaps = model.interarrival_sampler()?;
        let sessions = model.session_sampler()?;
        let mut rng = stream(cfg.rng_seed, Stream::World);

        let mut peers = Vec::with_capacity(cfg.peer_count);
        let mut t = 0.0;
        for i in 0..cfg.peer_count {
            t += gaps.sample(&mut rng);
            if t >= cfg.sim_duration_s {
                break;
            }
            let duration = sessions.sample(&mut rng);
            let city = netsim::assign_city(&mut rng, &cities);
            let isp = netsim::assign_isp(&mut rng, cfg.isp_count);
            let (up, down) = profile.sample(&mut rng);
            peers.push(Peer::new(PeerId(i as u32), city, isp, up, down, t, duration));
        }

        let region = cities.lookup(&cfg.failure_region)?;
        let scenario = FailureScenario::new(region, cfg.failure_ratio, cfg.failure_start_s, cfg.failure_end())?;
        let scenario =
            netsim::inject_failure(scenario, &mut peers, f64::NEG_INFINITY, &mut stream(cfg.rng_seed, Stream::Failure));
        Ok(World { cities, peers, scenario, end_time: cfg.sim_duration_s })
    }

    /// One peer per trace record. Timestamps are rebased so the earliest
    /// request is at time zero. Records flagged with a fetch failure are
    /// placed in the failure region and form the affected set; the others
    /// get a uniform city. ISP and bandwidth are drawn as in synthetic mode.
    pub fn from_trace(cfg: &SimConfig, records: &[TraceRecord]) -> Result<World> {
        let cities = CityTable::new(cfg.cities.clone())?;
        let profile = BandwidthProfile::new(cfg.uplink_profile.clone(), cfg.downlink_factor)?;
        let region = cities.lookup(&cfg.failure_region)?;
        let mut rng = stream(cfg.rng_seed, Stream::World);

        let schedule = crate::io::trace::replay_sessions(records);
        let origin = records.iter().map(|r| r.request_ts).fold(f64::INFINITY, f64::min);
        let mut peers = Vec::with_capacity(records.len());
        let mut affected = Vec::new();
        for (i, rec) in records.iter().enumerate() {
            if rec.leave_ts < rec.request_ts {
                return Err(Error::Argument(format!("record {i} leaves before it requests")));
            }
            let city = if rec.fetch_failure { region } else { netsim::assign_city(&mut rng, &cities) };
            let isp = netsim::assign_isp(&mut rng, cfg.isp_count);
            let (up, down) = profile.sample(&mut rng);
            let id = PeerId(i as u32);
            peers.push(Peer::new(id, city, isp, up, down, rec.request_ts - origin, rec.session_seconds()));
            if rec.fetch_failure {
                affected.push(id);
            }
        }
        let last = schedule.last().map_or(0.0, |e| e.time - origin);
        let end_time = cfg.sim_duration_s.max(last + 1.0);
        let failure_end = cfg.failure_end_s.unwrap_or(end_time);
        let mut scenario = FailureScenario::new(region, 1.0, cfg.failure_start_s, failure_end)?;
        scenario.affected_set.extend(affected);
        Ok(World { cities, peers, scenario, end_time })
    }

    pub fn region(&self) -> CityId {
        self.scenario.region
    }

    /// Requests whose direct path is blocked: affected peers that issue
    /// their request inside the failure window and before the end of the
    /// run. Requests are issued at join time.
    pub fn blocked_requests(&self) -> usize {
        self.scenario
            .affected_set
            .iter()
            .filter(|p| {
                let join = self.peers[p.index()].join_time;
                join < self.end_time && self.scenario.is_active(join)
            })
            .count()
    }

    pub fn requests(&self) -> usize {
        self.peers.iter().filter(|p| p.join_time < self.end_time).count()
    }
}
