//! Relay candidate list strategies.
//!
//! The path-aware list takes a share `alpha` of `zeta` slots from peers in
//! the requester's own city and ISP and fills the rest uniformly at random
//! from the online set. Both parts then drop peers that have already seen a
//! fetch failure or that are over the workload threshold, and each part is
//! ordered by descending estimated time-to-stay.

pub mod solver;

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::churn::TimeToStayModel;
use crate::model::{Peer, PeerId, SimConfig, Strategy, WorkloadFilter};

pub use solver::{solve_exact, solve_greedy, Assignment, BandwidthMatrix, GreedyOutcome, SelectionMatrix, SolveError};

/// Candidate relays in trial order. The first `careful_len` entries are the
/// same-city, same-ISP part; the rest are the random part.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelayCandidateList {
    pub peers: Vec<PeerId>,
    pub careful_len: usize,
}

impl RelayCandidateList {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.peers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peers.is_empty()
    }

    pub fn primary(&self) -> Option<PeerId> {
        self.peers.first().copied()
    }

    pub fn careful(&self) -> &[PeerId] {
        &self.peers[..self.careful_len]
    }

    pub fn random_part(&self) -> &[PeerId] {
        &self.peers[self.careful_len..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionParams {
    pub alpha: f64,
    pub gamma: f64,
    pub zeta: usize,
    pub workload_filter: WorkloadFilter,
    pub workload_count_limit: u32,
    pub time_to_stay: TimeToStayModel,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams::from(&SimConfig::default())
    }
}

impl From<&SimConfig> for SelectionParams {
    fn from(cfg: &SimConfig) -> Self {
        SelectionParams {
            alpha: cfg.alpha,
            gamma: cfg.gamma,
            zeta: cfg.zeta,
            workload_filter: cfg.workload_filter,
            workload_count_limit: cfg.workload_count_limit,
            time_to_stay: cfg.time_to_stay,
        }
    }
}

impl SelectionParams {
    /// Slots reserved for the same-city, same-ISP part: `ceil(zeta * alpha)`.
    pub fn careful_slots(&self) -> usize {
        ((self.zeta as f64 * self.alpha - 1e-9).ceil().max(0.0) as usize).min(self.zeta)
    }

    pub fn overloaded(&self, peer: &Peer) -> bool {
        match self.workload_filter {
            WorkloadFilter::Utilization => peer.uplink_utilization() > self.gamma,
            WorkloadFilter::Count => peer.workload > self.workload_count_limit,
        }
    }

    /// Estimated remaining stay in minutes.
    pub fn time_to_stay(&self, peer: &Peer, t: f64) -> f64 {
        self.time_to_stay.estimate(peer.elapse(t) / 60.0)
    }
}

fn sample_from<'a, R: Rng + ?Sized>(pool: &[&'a Peer], k: usize, rng: &mut R) -> Vec<&'a Peer> {
    let k = k.min(pool.len());
    let mut idx = index::sample(rng, pool.len(), k).into_vec();
    idx.shuffle(rng);
    idx.into_iter().map(|i| pool[i]).collect()
}

/// Path-aware candidate list for `requester` at time `t`.
///
/// `online` must be in a deterministic order (the engine passes it sorted by
/// id) for the draw to be reproducible. The requester itself is skipped if
/// present.
pub fn generate_relay_list<R: Rng + ?Sized>(
    requester: &Peer,
    online: &[&Peer],
    params: &SelectionParams,
    t: f64,
    rng: &mut R,
) -> RelayCandidateList {
    let careful_slots = params.careful_slots();
    let same: Vec<&Peer> = online
        .iter()
        .copied()
        .filter(|p| p.id != requester.id && p.city == requester.city && p.isp == requester.isp)
        .collect();
    let mut careful = sample_from(&same, careful_slots, rng);

    let rest: Vec<&Peer> =
        online.iter().copied().filter(|p| p.id != requester.id && !careful.iter().any(|c| c.id == p.id)).collect();
    let mut random = sample_from(&rest, params.zeta - careful_slots, rng);

    let keep = |p: &&Peer| !p.fetch_failure_history && !params.overloaded(p);
    careful.retain(keep);
    random.retain(keep);

    let by_stay =
        |a: &&Peer, b: &&Peer| params.time_to_stay(b, t).total_cmp(&params.time_to_stay(a, t)).then(a.id.cmp(&b.id));
    careful.sort_by(by_stay);
    random.sort_by(by_stay);

    let careful_len = careful.len();
    RelayCandidateList { peers: careful.iter().chain(random.iter()).map(|p| p.id).collect(), careful_len }
}

/// Up to `zeta` distinct online peers in random order, unfiltered.
pub fn random_relay_list<R: Rng + ?Sized>(
    requester: &Peer,
    online: &[&Peer],
    zeta: usize,
    rng: &mut R,
) -> RelayCandidateList {
    let pool: Vec<&Peer> = online.iter().copied().filter(|p| p.id != requester.id).collect();
    RelayCandidateList { peers: sample_from(&pool, zeta, rng).into_iter().map(|p| p.id).collect(), careful_len: 0 }
}

pub fn no_relay_list() -> RelayCandidateList {
    RelayCandidateList::empty()
}

/// Dispatches on the configured strategy.
pub fn candidate_list<R: Rng + ?Sized>(
    strategy: Strategy,
    requester: &Peer,
    online: &[&Peer],
    params: &SelectionParams,
    t: f64,
    rng: &mut R,
) -> RelayCandidateList {
    match strategy {
        Strategy::NoRelay => no_relay_list(),
        Strategy::Random => random_relay_list(requester, online, params.zeta, rng),
        Strategy::PathAware => generate_relay_list(requester, online, params, t, rng),
    }
}
