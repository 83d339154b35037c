//! Discrete-event simulator for joint CDN + browser-peer content delivery.
//!
//! Browser peers that stay on a page can fetch content from the origin on
//! behalf of users whose own path to the CDN is broken by a regional
//! in-network failure. The crate models peer churn, geography and ISP
//! placement, the failure itself, several relay selection strategies, and an
//! event loop that replays the relay attempt protocol and reports success
//! ratios and retry counts.
//!
//! Module map:
//! - [`model`]: shared domain types and validated configuration.
//! - [`churn`]: arrivals, session lengths, time-to-stay estimation.
//! - [`netsim`]: cities, latency, bandwidth, failure injection, connectivity.
//! - [`selection`]: candidate list strategies and the assignment solvers.
//! - [`engine`]: the event loop and metric collection.
//! - [`io`]: traces, config files, sweeps and result files.

pub mod churn;
pub mod engine;
pub mod error;
pub mod io;
pub mod model;
pub mod netsim;
pub mod rng;
pub mod selection;

pub use churn::{calibrate_pareto, SessionModel, TimeToStayModel};
pub use engine::{collect_metrics, run, MetricsReport, RequestOutcome, ServedBy};
pub use error::{Error, Result};
pub use model::{validate_config, ContentItem, Peer, PeerId, SimConfig, Strategy, TraceRecord};
pub use netsim::{CityTable, Endpoint, FailureScenario};
pub use selection::{RelayCandidateList, SelectionParams};
