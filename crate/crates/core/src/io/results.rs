//! Per-request outcome logs (CSV) and run reports (JSON).

use std::io::Write;

use crate::engine::{MetricsReport, RequestOutcome, ServedBy};
use crate::error::{Error, Result};

pub const OUTCOME_HEADER: [&str; 13] = [
    "requester",
    "city",
    "isp",
    "served_by",
    "relay",
    "attempts",
    "candidates",
    "primary_success",
    "direct_blocked",
    "in_failure_region",
    "size_kb",
    "start_s",
    "end_s",
];

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_outcomes<W: Write>(outcomes: &[RequestOutcome], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(OUTCOME_HEADER)?;
    for o in outcomes {
        let relay = match o.served_by {
            ServedBy::Relay(p) => p.0.to_string(),
            _ => String::new(),
        };
        w.write_record([
            o.requester.0.to_string(),
            o.city.0.to_string(),
            o.isp.0.to_string(),
            o.served_by.label().to_string(),
            relay,
            o.attempts.to_string(),
            o.candidates.to_string(),
            u8::from(o.primary_success).to_string(),
            u8::from(o.direct_blocked).to_string(),
            u8::from(o.in_failure_region).to_string(),
            o.size_kb.to_string(),
            o.start.to_string(),
            o.end.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<outcomes>", e))?;
    Ok(())
}

pub fn write_report<W: Write>(report: &MetricsReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    writeln!(out).map_err(|e| Error::io("<report>", e))?;
    Ok(())
}
