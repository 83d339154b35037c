use super::*;
use crate::model::{CityId, IspId};
use crate::netsim::{CityTable, FailureScenario};
use approx::assert_abs_diff_eq;

fn peer(id: u32, city: u16, join: f64, duration: f64) -> Peer {
    Peer::new(PeerId(id), CityId(city), IspId(1), 1024.0, 4096.0, join, duration)
}

fn world(peers: Vec<Peer>, affected: &[u32]) -> World {
    let mut scenario = FailureScenario::new(CityId(0), 1.0, 0.0, 1000.0).unwrap();
    scenario.affected_set.extend(affected.iter().map(|&i| PeerId(i)));
    World { cities: CityTable::new(crate::netsim::default_cities()).unwrap(), peers, scenario, end_time: 1000.0 }
}

fn cfg() -> SimConfig {
    SimConfig { content_size_kb: 500.0, ..SimConfig::default() }
}

fn play(world: World, lists: Vec<(u32, Vec<u32>)>) -> SimOutput {
    let mut sim = Simulation::new(&cfg(), world, Strategy::PathAware).unwrap();
    sim.list_override = Some(Box::new(move |q: PeerId| {
        lists
            .iter()
            .find(|(r, _)| *r == q.0)
            .map(|(_, l)| RelayCandidateList { peers: l.iter().map(|&i| PeerId(i)).collect(), careful_len: 0 })
            .unwrap_or_default()
    }));
    sim.run().unwrap()
}

fn outcome(out: &SimOutput, id: u32) -> &RequestOutcome {
    out.outcomes.iter().find(|o| o.requester == PeerId(id)).unwrap()
}

#[test]
fn unaffected_requester_is_served_by_server() {
    let out = play(world(vec![peer(0, 1, 1.0, 100.0)], &[]), vec![]);
    let o = outcome(&out, 0);
    assert_eq!(o.served_by, ServedBy::Server);
    assert_eq!(o.attempts, 0);
    assert!(!o.direct_blocked);
}

#[test]
fn primary_peer_serves_affected_requester() {
    let out = play(world(vec![peer(0, 1, 0.0, 500.0), peer(1, 0, 10.0, 500.0)], &[1]), vec![(1, vec![0])]);
    let o = outcome(&out, 1);
    assert_eq!(o.served_by, ServedBy::Relay(PeerId(0)));
    assert_eq!(o.attempts, 1);
    assert!(o.primary_success);
}

#[test]
fn affected_candidate_is_skipped_for_the_next_one() {
    let peers = vec![peer(0, 0, 0.0, 500.0), peer(1, 1, 0.0, 500.0), peer(2, 0, 10.0, 500.0)];
    let out = play(world(peers, &[0, 2]), vec![(2, vec![0, 1])]);
    let o = outcome(&out, 2);
    assert_eq!(o.served_by, ServedBy::Relay(PeerId(1)));
    assert_eq!(o.attempts, 2);
    assert!(!o.primary_success);
    // handshake to a same-city peer, timeout, handshake to Shanghai, 4000 kbit at 1024 kbps
    let shanghai_rtt = 2.0
        * (5.0
            + 0.02
                * crate::netsim::haversine_km(
                    &crate::netsim::default_cities()[0],
                    &crate::netsim::default_cities()[1],
                ))
        / 1000.0;
    assert_abs_diff_eq!(o.end, 10.0 + 0.010 + 2.0 + shanghai_rtt + 4000.0 / 1024.0, epsilon = 1e-9);
}

#[test]
fn relay_departure_aborts_and_moves_on() {
    // relay 0 leaves 1 s into a ~3.9 s transfer
    let peers = vec![peer(0, 1, 0.0, 11.0), peer(1, 1, 0.0, 500.0), peer(2, 0, 10.0, 500.0)];
    let out = play(world(peers, &[2]), vec![(2, vec![0, 1])]);
    let o = outcome(&out, 2);
    assert_eq!(o.served_by, ServedBy::Relay(PeerId(1)));
    assert_eq!(o.attempts, 2);
}

#[test]
fn requester_departure_leaves_request_unserved() {
    let peers = vec![peer(0, 1, 0.0, 500.0), peer(1, 0, 10.0, 2.0)];
    let out = play(world(peers, &[1]), vec![(1, vec![0])]);
    let o = outcome(&out, 1);
    assert_eq!(o.served_by, ServedBy::None);
    assert_eq!(o.unserved, Some(Unserved::RequesterLeft));
    assert_eq!(o.end, 12.0);
}

#[test]
fn exhausted_list_is_unserved() {
    let out = play(world(vec![peer(0, 0, 0.0, 500.0), peer(1, 0, 10.0, 500.0)], &[0, 1]), vec![(1, vec![0])]);
    let o = outcome(&out, 1);
    assert_eq!(o.served_by, ServedBy::None);
    assert_eq!(o.unserved, Some(Unserved::Exhausted));
    assert_eq!(o.attempts, 1);
}

#[test]
fn saturated_relay_rejects_second_requester() {
    let peers = vec![peer(0, 1, 0.0, 500.0), peer(1, 0, 10.0, 500.0), peer(2, 0, 10.5, 500.0)];
    let out = play(world(peers, &[1, 2]), vec![(1, vec![0]), (2, vec![0])]);
    assert_eq!(outcome(&out, 1).served_by, ServedBy::Relay(PeerId(0)));
    assert_eq!(outcome(&out, 2).served_by, ServedBy::None);
}

#[test]
fn failure_start_cuts_running_transfer() {
    let peers = vec![peer(0, 0, 0.0, 500.0), peer(1, 1, 0.0, 500.0), peer(2, 0, 1.0, 500.0)];
    let mut w = world(peers, &[0, 2]);
    // peer 2 is blocked only from t = 0.5; its relay 0 becomes affected at that point too
    w.scenario.start_time = 0.5;
    let out = play(w, vec![(2, vec![1])]);
    assert_eq!(outcome(&out, 2).served_by, ServedBy::Relay(PeerId(1)));
    assert_eq!(outcome(&out, 0).served_by, ServedBy::Server);
}

#[test]
fn pending_requests_time_out_at_end() {
    let mut w = world(vec![peer(0, 1, 0.0, 5000.0), peer(1, 0, 999.0, 5000.0)], &[1]);
    w.end_time = 1000.0;
    let out = play(w, vec![(1, vec![0])]);
    assert_eq!(outcome(&out, 1).unserved, Some(Unserved::Timeout));
}

#[test]
fn capacity_ledger_commit_and_release() {
    let mut p = peer(0, 0, 0.0, 10.0);
    commit_relay_capacity(&mut p, 500.0).unwrap();
    assert_eq!(p.relayed_kbps_in_use, 500.0);
    release_relay_capacity(&mut p, 500.0).unwrap();
    assert_eq!(p.relayed_kbps_in_use, 0.0);
    commit_relay_capacity(&mut p, 600.0).unwrap();
    assert!(matches!(commit_relay_capacity(&mut p, 600.0), Err(Error::Invariant(_))));
    assert!(release_relay_capacity(&mut p, 700.0).is_err());
}

#[test]
fn event_order_breaks_ties_by_kind_then_sequence() {
    let ev = |time, kind, seq| Event { time, kind, seq };
    let dep = ev(5.0, EventKind::PeerDeparture(PeerId(1)), 9);
    let arr = ev(5.0, EventKind::PeerArrival(PeerId(2)), 1);
    let req = ev(5.0, EventKind::RequestIssue(PeerId(2)), 0);
    let early = ev(4.0, EventKind::RequestIssue(PeerId(3)), 10);
    let mut v = [req, arr, dep, early];
    v.sort();
    assert_eq!(v.iter().map(|e| e.seq).collect::<Vec<_>>(), vec![10, 9, 1, 0]);
}

fn small(strategy: Strategy, ratio: f64, seed: u64) -> SimConfig {
    SimConfig {
        peer_count: 300,
        failure_ratio: ratio,
        rng_seed: seed,
        strategy,
        content_size_kb: 2000.0,
        ..SimConfig::default()
    }
}

#[test]
fn no_failures_means_everyone_is_served() {
    let r = run(&small(Strategy::NoRelay, 0.0, 1), Strategy::NoRelay).unwrap();
    assert_eq!(r.successful_relay_ratio, Some(1.0));
    assert_eq!(r.relay_phase, 0);
}

#[test]
fn no_relay_matches_closed_form_accounting() {
    for seed in 0..5 {
        let cfg = small(Strategy::NoRelay, 1.0, seed);
        let out = simulate(&cfg, Strategy::NoRelay).unwrap();
        let w = &out.world;
        let region = w.cities.lookup(&cfg.failure_region).unwrap();
        let total = w.peers.iter().filter(|p| p.join_time < cfg.sim_duration_s).count();
        let blocked = w
            .peers
            .iter()
            .filter(|p| p.city == region && p.join_time >= cfg.failure_start_s && p.join_time < cfg.failure_end())
            .count();
        assert_eq!(out.report.requests, total);
        assert_eq!(out.report.successful_relay_ratio, Some((total - blocked) as f64 / total as f64));
        assert_eq!(out.report.region_success_ratio, Some(0.0));
        assert_eq!(w.blocked_requests(), blocked);
    }
}

#[test]
fn runs_are_deterministic() {
    for s in Strategy::ALL {
        let a = simulate(&small(s, 0.6, 3), s).unwrap();
        let b = simulate(&small(s, 0.6, 3), s).unwrap();
        assert_eq!(a.outcomes, b.outcomes);
        assert_eq!(a.report, b.report);
    }
}

#[test]
fn every_request_ends_exactly_once() {
    for s in Strategy::ALL {
        let out = simulate(&small(s, 0.6, 4), s).unwrap();
        assert_eq!(out.outcomes.len(), out.world.requests());
        let mut ids: Vec<_> = out.outcomes.iter().map(|o| o.requester).collect();
        ids.dedup();
        assert_eq!(ids.len(), out.outcomes.len());
        for o in &out.outcomes {
            assert!(o.attempts <= o.candidates);
            assert!(!o.primary_success || o.attempts == 1);
            if o.served_by == ServedBy::Server {
                assert_eq!(o.attempts, 0);
            }
            assert_eq!(o.served_by == ServedBy::None, o.unserved.is_some());
        }
        if s == Strategy::NoRelay {
            assert!(out.outcomes.iter().all(|o| o.attempts == 0));
        }
    }
}

#[test]
fn invalid_config_is_rejected() {
    let cfg = SimConfig { alpha: 2.0, ..small(Strategy::Random, 0.5, 0) };
    assert!(matches!(run(&cfg, Strategy::Random), Err(Error::Config(_))));
}
