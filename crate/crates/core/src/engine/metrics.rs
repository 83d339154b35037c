use serde::{Deserialize, Serialize};

use crate::model::{CityId, IspId, PeerId, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServedBy {
    Server,
    Relay(PeerId),
    None,
}

impl ServedBy {
    pub fn label(&self) -> &'static str {
        match self {
            ServedBy::Server => "server",
            ServedBy::Relay(_) => "relay",
            ServedBy::None => "none",
        }
    }
}

/// Why a request went unserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unserved {
    /// Every candidate was tried (or the list was empty).
    Exhausted,
    RequesterLeft,
    /// Still in progress when the run ended.
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub requester: PeerId,
    pub city: CityId,
    pub isp: IspId,
    pub served_by: ServedBy,
    /// Relay requests issued.
    pub attempts: u32,
    pub primary_success: bool,
    /// The direct server download failed and the relay phase was entered.
    pub direct_blocked: bool,
    pub in_failure_region: bool,
    /// Length of the candidate list handed to the requester.
    pub candidates: u32,
    pub unserved: Option<Unserved>,
    pub size_kb: f64,
    pub start: f64,
    pub end: f64,
}

/// Aggregate ratios over one run. Ratios with an empty denominator are
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point: Option<SweepPoint>,
    pub requests: usize,
    pub server_served: usize,
    pub relay_served: usize,
    pub unserved: usize,
    pub relay_phase: usize,
    /// Served by server or relay, over all requests.
    pub successful_relay_ratio: Option<f64>,
    /// First candidate succeeded, over requests that entered the relay phase.
    pub primary_success_ratio: Option<f64>,
    /// Mean relay attempts over relay-served requests.
    pub avg_repeated_requests: Option<f64>,
    /// Requests issued from the failure region.
    pub region_requests: usize,
    /// Served ratio over requests issued from the failure region.
    pub region_success_ratio: Option<f64>,
}

impl MetricsReport {
    pub fn is_empty(&self) -> bool {
        self.requests == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub strategy: Strategy,
    pub content_size_kb: f64,
    pub failure_ratio: f64,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn collect_metrics(outcomes: &[RequestOutcome]) -> MetricsReport {
    let served = |o: &RequestOutcome| o.served_by != ServedBy::None;
    let relayed: Vec<&RequestOutcome> = outcomes.iter().filter(|o| matches!(o.served_by, ServedBy::Relay(_))).collect();
    let phase: Vec<&RequestOutcome> = outcomes.iter().filter(|o| o.direct_blocked).collect();
    let region: Vec<&RequestOutcome> = outcomes.iter().filter(|o| o.in_failure_region).collect();
    let served_count = outcomes.iter().filter(|o| served(o)).count();
    let attempts: u64 = relayed.iter().map(|o| o.attempts as u64).sum();

    MetricsReport {
        point: None,
        requests: outcomes.len(),
        server_served: outcomes.iter().filter(|o| o.served_by == ServedBy::Server).count(),
        relay_served: relayed.len(),
        unserved: outcomes.len() - served_count,
        relay_phase: phase.len(),
        successful_relay_ratio: ratio(served_count, outcomes.len()),
        primary_success_ratio: ratio(phase.iter().filter(|o| o.primary_success).count(), phase.len()),
        avg_repeated_requests: (!relayed.is_empty()).then(|| attempts as f64 / relayed.len() as f64),
        region_requests: region.len(),
        region_success_ratio: ratio(region.iter().filter(|o| served(o)).count(), region.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(served_by: ServedBy, attempts: u32) -> RequestOutcome {
        let relay = matches!(served_by, ServedBy::Relay(_));
        RequestOutcome {
            requester: PeerId(0),
            city: CityId(0),
            isp: IspId(1),
            served_by,
            attempts,
            primary_success: relay && attempts == 1,
            direct_blocked: served_by != ServedBy::Server,
            in_failure_region: served_by != ServedBy::Server,
            candidates: 10,
            unserved: (served_by == ServedBy::None).then_some(Unserved::Exhausted),
            size_kb: 500.0,
            start: 0.0,
            end: 0.0,
        }
    }

    #[test]
    fn success_ratio_arithmetic() {
        let mut v = vec![outcome(ServedBy::Server, 0); 3];
        v.push(outcome(ServedBy::None, 10));
        let r = collect_metrics(&v);
        assert_eq!(r.successful_relay_ratio, Some(0.75));
        assert_eq!(r.primary_success_ratio, Some(0.0));
        assert_eq!(r.avg_repeated_requests, None);
        assert_eq!(r.region_success_ratio, Some(0.0));
    }

    #[test]
    fn average_attempts_over_relay_served() {
        let v: Vec<_> = [1, 2, 3].into_iter().map(|a| outcome(ServedBy::Relay(PeerId(9)), a)).collect();
        let r = collect_metrics(&v);
        assert_eq!(r.avg_repeated_requests, Some(2.0));
        assert_eq!(r.primary_success_ratio, Some(1.0 / 3.0));
        assert_eq!(r.successful_relay_ratio, Some(1.0));
    }

    #[test]
    fn no_relay_phase_means_no_primary_ratio() {
        let r = collect_metrics(&[outcome(ServedBy::Server, 0)]);
        assert_eq!(r.primary_success_ratio, None);
        assert_eq!(r.region_success_ratio, None);
    }

    #[test]
    fn empty_report() {
        let r = collect_metrics(&[]);
        assert!(r.is_empty());
        assert_eq!(r.successful_relay_ratio, None);
    }
}
