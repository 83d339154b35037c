//! Sequential discrete-event loop.
//!
//! Every session issues one content request at join time. A request first
//! goes to the server. If the requester cannot reach it, the requester asks
//! its candidate relays one at a time, in list order:
//!
//! 1. Handshake with the relay: two one-way latencies.
//! 2. The attempt starts a transfer only if the relay is still online, can
//!    reach the server, can reach the requester, and has free uplink.
//!    Otherwise the requester waits `failed_attempt_timeout_s` and moves on.
//! 3. The transfer is cut-through at `min(free relay uplink, requester
//!    downlink, relay downlink / concurrent relay fetches)` and that rate is
//!    committed on the relay's uplink until it ends.
//! 4. If the relay leaves or loses connectivity mid-transfer, the attempt
//!    aborts and the next candidate is tried after the timeout.
//!
//! A request is unserved when the list runs out, the requester leaves
//! first, or the run ends.

mod metrics;
mod world;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use crate::error::{Error, Result};
use crate::model::{validate_config, ContentItem, Peer, PeerId, SimConfig, Strategy};
use crate::netsim::{available_throughput, can_connect, Endpoint, LatencyModel};
use crate::rng::{stream, SimRng, Stream};
use crate::selection::{candidate_list, RelayCandidateList, SelectionParams};

pub use metrics::{collect_metrics, MetricsReport, RequestOutcome, ServedBy, SweepPoint, Unserved};
pub use world::World;

/// Slack for floating-point drift in the uplink ledger.
const LEDGER_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    FailureEnd,
    FailureStart,
    PeerDeparture(PeerId),
    AttemptAbort { requester: PeerId, epoch: u32 },
    AttemptComplete { requester: PeerId, epoch: u32 },
    TransferComplete { requester: PeerId, epoch: u32 },
    PeerArrival(PeerId),
    RequestIssue(PeerId),
}

impl EventKind {
    /// Order among events at the same timestamp.
    fn priority(&self) -> u8 {
        match self {
            EventKind::FailureEnd => 0,
            EventKind::FailureStart => 1,
            EventKind::PeerDeparture(_) => 2,
            EventKind::AttemptAbort { .. } => 3,
            EventKind::AttemptComplete { .. } => 4,
            EventKind::TransferComplete { .. } => 5,
            EventKind::PeerArrival(_) => 6,
            EventKind::RequestIssue(_) => 7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    seq: u64,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.priority().cmp(&other.kind.priority()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

/// Reserves `kbps` of the relay's uplink.
pub fn commit_relay_capacity(relay: &mut Peer, kbps: f64) -> Result<()> {
    if kbps.is_nan() || kbps < 0.0 || relay.relayed_kbps_in_use + kbps > relay.uplink_kbps + LEDGER_EPS {
        return Err(Error::Invariant(format!(
            "over-commit on {}: {} + {} > {} kbps",
            relay.id, relay.relayed_kbps_in_use, kbps, relay.uplink_kbps
        )));
    }
    relay.relayed_kbps_in_use += kbps;
    Ok(())
}

pub fn release_relay_capacity(relay: &mut Peer, kbps: f64) -> Result<()> {
    let left = relay.relayed_kbps_in_use - kbps;
    if left < -LEDGER_EPS {
        return Err(Error::Invariant(format!("release of {kbps} kbps on {} exceeds its commitments", relay.id)));
    }
    relay.relayed_kbps_in_use = left.max(0.0);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Handshake { relay: PeerId },
    Transfer { relay: PeerId, kbps: f64 },
    Waiting,
}

#[derive(Debug, Clone)]
struct ActiveRequest {
    list: RelayCandidateList,
    next: usize,
    attempts: u32,
    epoch: u32,
    phase: Phase,
    start: f64,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub outcomes: Vec<RequestOutcome>,
    pub report: MetricsReport,
    pub world: World,
}

struct Simulation {
    world: World,
    strategy: Strategy,
    params: SelectionParams,
    content: ContentItem,
    latency_s: Vec<Vec<f64>>,
    timeout_s: f64,
    online: BTreeSet<PeerId>,
    active: Vec<Option<ActiveRequest>>,
    /// Requesters currently transferring through each relay.
    relaying: Vec<Vec<PeerId>>,
    outcomes: Vec<RequestOutcome>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    rng: SimRng,
    now: f64,
    #[cfg(test)]
    list_override: Option<Box<dyn Fn(PeerId) -> RelayCandidateList>>,
}

impl Simulation {
    fn new(cfg: &SimConfig, world: World, strategy: Strategy) -> Result<Self> {
        let latency = LatencyModel { base_ms: cfg.latency_base_ms, slope_ms_per_km: cfg.latency_slope_ms_per_km };
        let latency_s = world
            .cities
            .distance_matrix()
            .into_iter()
            .map(|row| row.into_iter().map(|d| latency.latency_ms(d) / 1000.0).collect())
            .collect();
        let n = world.peers.len();
        Ok(Simulation {
            strategy,
            params: SelectionParams::from(cfg),
            content: ContentItem::new(cfg.content_size_kb)?,
            latency_s,
            timeout_s: cfg.failed_attempt_timeout_s,
            online: BTreeSet::new(),
            active: vec![None; n],
            relaying: vec![Vec::new(); n],
            outcomes: Vec::with_capacity(n),
            queue: BinaryHeap::with_capacity(4 * n),
            seq: 0,
            rng: stream(cfg.rng_seed, Stream::Selection),
            now: 0.0,
            world,
            #[cfg(test)]
            list_override: None,
        })
    }

    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Reverse(Event { time, kind, seq: self.seq }));
    }

    fn peer(&self, id: PeerId) -> &Peer {
        &self.world.peers[id.index()]
    }

    fn peer_mut(&mut self, id: PeerId) -> &mut Peer {
        &mut self.world.peers[id.index()]
    }

    fn connected(&self, a: Endpoint, b: Endpoint) -> bool {
        can_connect(a, b, self.now, &self.world.scenario)
    }

    fn run(mut self) -> Result<SimOutput> {
        let end = self.world.end_time;
        let (start, stop) = (self.world.scenario.start_time, self.world.scenario.end_time);
        if start < end {
            self.schedule(start, EventKind::FailureStart);
        }
        if stop < end {
            self.schedule(stop, EventKind::FailureEnd);
        }
        for i in 0..self.world.peers.len() {
            let p = &self.world.peers[i];
            let (id, join, leave) = (p.id, p.join_time, p.leave_time());
            if join < end {
                self.schedule(join, EventKind::PeerArrival(id));
                if leave < end {
                    self.schedule(leave, EventKind::PeerDeparture(id));
                }
            }
        }

        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.time >= end {
                break;
            }
            self.now = ev.time;
            self.handle(ev.kind)?;
        }

        self.now = end;
        let pending: Vec<PeerId> =
            self.active.iter().enumerate().filter(|(_, a)| a.is_some()).map(|(i, _)| PeerId(i as u32)).collect();
        for q in pending {
            self.stop_current(q)?;
            self.finish(q, ServedBy::None, Some(Unserved::Timeout));
        }
        self.check_ledger()?;

        let mut outcomes = self.outcomes;
        outcomes.sort_by_key(|o| o.requester);
        let report = collect_metrics(&outcomes);
        Ok(SimOutput { outcomes, report, world: self.world })
    }

    fn handle(&mut self, kind: EventKind) -> Result<()> {
        match kind {
            EventKind::PeerArrival(p) => {
                if self.peer(p).is_online(self.now) {
                    self.online.insert(p);
                }
                self.schedule(self.now, EventKind::RequestIssue(p));
            }
            EventKind::RequestIssue(p) => self.issue_request(p)?,
            EventKind::PeerDeparture(p) => self.depart(p)?,
            EventKind::AttemptComplete { requester, epoch } => {
                if self.is_current(requester, epoch) {
                    self.complete_handshake(requester)?;
                }
            }
            EventKind::AttemptAbort { requester, epoch } => {
                if self.is_current(requester, epoch) {
                    self.next_attempt(requester);
                }
            }
            EventKind::TransferComplete { requester, epoch } => {
                if self.is_current(requester, epoch) {
                    let relay = match self.active[requester.index()].as_ref().map(|a| a.phase) {
                        Some(Phase::Transfer { relay, .. }) => relay,
                        other => return Err(Error::Invariant(format!("transfer completion in phase {other:?}"))),
                    };
                    self.stop_current(requester)?;
                    self.finish(requester, ServedBy::Relay(relay), None);
                }
            }
            EventKind::FailureStart => self.failure_start()?,
            EventKind::FailureEnd => {
                let affected: Vec<PeerId> = self.world.scenario.affected_set.iter().copied().collect();
                for p in affected {
                    self.peer_mut(p).in_failed_set = false;
                }
            }
        }
        Ok(())
    }

    fn is_current(&self, q: PeerId, epoch: u32) -> bool {
        self.active[q.index()].as_ref().is_some_and(|a| a.epoch == epoch)
    }

    fn issue_request(&mut self, q: PeerId) -> Result<()> {
        if self.connected(Endpoint::Peer(q), Endpoint::Server) {
            self.active[q.index()] = Some(ActiveRequest::new(RelayCandidateList::empty(), self.now));
            self.finish_direct(q);
            return Ok(());
        }
        self.peer_mut(q).fetch_failure_history = true;
        #[cfg(test)]
        let forced = self.list_override.as_ref().map(|f| f(q));
        #[cfg(not(test))]
        let forced: Option<RelayCandidateList> = None;
        let list = if let Some(list) = forced {
            list
        } else if self.online.contains(&q) {
            let online: Vec<&Peer> = self.online.iter().map(|id| &self.world.peers[id.index()]).collect();
            candidate_list(self.strategy, &self.world.peers[q.index()], &online, &self.params, self.now, &mut self.rng)
        } else {
            RelayCandidateList::empty()
        };
        self.active[q.index()] = Some(ActiveRequest::new(list, self.now));
        if !self.online.contains(&q) {
            self.finish(q, ServedBy::None, Some(Unserved::RequesterLeft));
        } else {
            self.next_attempt(q);
        }
        Ok(())
    }

    fn next_attempt(&mut self, q: PeerId) {
        let now = self.now;
        let req = self.active[q.index()].as_mut().expect("active request");
        let Some(&relay) = req.list.peers.get(req.next) else {
            self.finish(q, ServedBy::None, Some(Unserved::Exhausted));
            return;
        };
        req.next += 1;
        req.attempts += 1;
        req.epoch += 1;
        req.phase = Phase::Handshake { relay };
        let epoch = req.epoch;
        let (a, b) = (self.peer(q).city.0 as usize, self.peer(relay).city.0 as usize);
        let handshake = 2.0 * self.latency_s[a][b];
        self.schedule(now + handshake, EventKind::AttemptComplete { requester: q, epoch });
    }

    fn complete_handshake(&mut self, q: PeerId) -> Result<()> {
        let Some(Phase::Handshake { relay }) = self.active[q.index()].as_ref().map(|a| a.phase) else {
            return Err(Error::Invariant(format!("handshake completion for {q} outside handshake")));
        };
        let online = self.online.contains(&relay) && self.peer(relay).is_online(self.now);
        let reaches_server = self.connected(Endpoint::Peer(relay), Endpoint::Server);
        if online && !reaches_server {
            self.peer_mut(relay).fetch_failure_history = true;
        }
        let kbps = if online && reaches_server {
            let (r, req) = (self.peer(relay), self.peer(q));
            let fetch_share = r.downlink_kbps / (r.active_fetches + 1) as f64;
            available_throughput(r, req, self.now, &self.world.scenario).min(fetch_share)
        } else {
            0.0
        };
        if kbps <= 0.0 {
            self.fail_attempt(q);
            return Ok(());
        }

        let r = self.peer_mut(relay);
        commit_relay_capacity(r, kbps)?;
        r.workload += 1;
        r.active_fetches += 1;
        self.relaying[relay.index()].push(q);
        let done = self.now + self.content.size_kbit() / kbps;
        let req = self.active[q.index()].as_mut().expect("active request");
        req.phase = Phase::Transfer { relay, kbps };
        let epoch = req.epoch;
        self.schedule(done, EventKind::TransferComplete { requester: q, epoch });
        Ok(())
    }

    /// Gives up on the current attempt and retries after the timeout.
    fn fail_attempt(&mut self, q: PeerId) {
        let req = self.active[q.index()].as_mut().expect("active request");
        req.epoch += 1;
        req.phase = Phase::Waiting;
        let epoch = req.epoch;
        self.schedule(self.now + self.timeout_s, EventKind::AttemptAbort { requester: q, epoch });
    }

    /// Releases whatever the current attempt holds.
    fn stop_current(&mut self, q: PeerId) -> Result<()> {
        let Some(req) = self.active[q.index()].as_mut() else { return Ok(()) };
        if let Phase::Transfer { relay, kbps } = req.phase {
            req.phase = Phase::Waiting;
            let r = &mut self.world.peers[relay.index()];
            release_relay_capacity(r, kbps)?;
            r.workload -= 1;
            r.active_fetches -= 1;
            self.relaying[relay.index()].retain(|&x| x != q);
        }
        Ok(())
    }

    fn depart(&mut self, p: PeerId) -> Result<()> {
        self.online.remove(&p);
        if self.active[p.index()].is_some() {
            self.stop_current(p)?;
            self.finish(p, ServedBy::None, Some(Unserved::RequesterLeft));
        }
        for q in std::mem::take(&mut self.relaying[p.index()]) {
            self.stop_current(q)?;
            self.fail_attempt(q);
        }
        // failure history is per session
        self.peer_mut(p).fetch_failure_history = false;
        Ok(())
    }

    fn failure_start(&mut self) -> Result<()> {
        let affected: Vec<PeerId> = self.world.scenario.affected_set.iter().copied().collect();
        for p in affected {
            self.peer_mut(p).in_failed_set = true;
        }
        let transfers: Vec<(PeerId, PeerId)> = self
            .active
            .iter()
            .enumerate()
            .filter_map(|(i, a)| match a.as_ref()?.phase {
                Phase::Transfer { relay, .. } => Some((PeerId(i as u32), relay)),
                _ => None,
            })
            .collect();
        for (q, relay) in transfers {
            let to_server = self.connected(Endpoint::Peer(relay), Endpoint::Server);
            if !to_server {
                self.peer_mut(relay).fetch_failure_history = true;
            }
            if !to_server || !self.connected(Endpoint::Peer(relay), Endpoint::Peer(q)) {
                self.stop_current(q)?;
                self.fail_attempt(q);
            }
        }
        Ok(())
    }

    fn finish_direct(&mut self, q: PeerId) {
        self.finish(q, ServedBy::Server, None);
    }

    fn finish(&mut self, q: PeerId, served_by: ServedBy, unserved: Option<Unserved>) {
        let req = self.active[q.index()].take().expect("finishing an active request");
        let peer = &self.world.peers[q.index()];
        let attempts = match served_by {
            ServedBy::Server => 0,
            _ => req.attempts,
        };
        self.outcomes.push(RequestOutcome {
            requester: q,
            city: peer.city,
            isp: peer.isp,
            served_by,
            attempts,
            primary_success: matches!(served_by, ServedBy::Relay(_)) && attempts == 1,
            direct_blocked: served_by != ServedBy::Server,
            in_failure_region: peer.city == self.world.scenario.region,
            candidates: req.list.len() as u32,
            unserved,
            size_kb: self.content.size_kb,
            start: req.start,
            end: self.now,
        });
    }

    fn check_ledger(&self) -> Result<()> {
        for p in &self.world.peers {
            if p.relayed_kbps_in_use > LEDGER_EPS || p.workload != 0 || p.active_fetches != 0 {
                return Err(Error::Invariant(format!("{} still holds relay state after the run", p.id)));
            }
        }
        Ok(())
    }
}

impl ActiveRequest {
    fn new(list: RelayCandidateList, start: f64) -> Self {
        ActiveRequest { list, next: 0, attempts: 0, epoch: 0, phase: Phase::Waiting, start }
    }
}

/// Plays `world` under `strategy` and returns per-request outcomes.
pub fn simulate_world(cfg: &SimConfig, world: World, strategy: Strategy) -> Result<SimOutput> {
    let cfg = validate_config(cfg.clone())?;
    let mut out = Simulation::new(&cfg, world, strategy)?.run()?;
    out.report.point =
        Some(SweepPoint { strategy, content_size_kb: cfg.content_size_kb, failure_ratio: cfg.failure_ratio });
    Ok(out)
}

/// Synthetic run: generates the world from `cfg.rng_seed` and plays it.
pub fn simulate(cfg: &SimConfig, strategy: Strategy) -> Result<SimOutput> {
    let cfg = validate_config(cfg.clone())?;
    let world = World::synthetic(&cfg)?;
    simulate_world(&cfg, world, strategy)
}

pub fn run(cfg: &SimConfig, strategy: Strategy) -> Result<MetricsReport> {
    Ok(simulate(cfg, strategy)?.report)
}

#[cfg(test)]
mod tests;
