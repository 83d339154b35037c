//! Session traces: `user_id,request_ts,leave_ts,fetch_failure`.
//!
//! Timestamps are epoch seconds (integer or fractional) or ISO-8601
//! date-times; values without an offset are read as UTC. `fetch_failure`
//! is `0` or `1`.

use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::engine::World;
use crate::error::{Error, Result};
use crate::model::{SimConfig, TraceRecord};

pub const TRACE_HEADER: [&str; 4] = ["user_id", "request_ts", "leave_ts", "fetch_failure"];

/// A rejected trace row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceParse {
    pub records: Vec<TraceRecord>,
    pub rejected: Vec<RowError>,
}

pub fn parse_timestamp(s: &str) -> Option<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let from_utc = |dt: DateTime<chrono::Utc>| dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9;
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(from_utc(dt.to_utc()));
    }
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|naive| from_utc(naive.and_utc()))
}

fn parse_row(fields: &csv::StringRecord) -> std::result::Result<TraceRecord, String> {
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    let user_id = fields[0].trim();
    if user_id.is_empty() {
        return Err("empty user_id".into());
    }
    let ts =
        |i: usize| parse_timestamp(fields[i].trim()).ok_or_else(|| format!("bad {} `{}`", TRACE_HEADER[i], &fields[i]));
    let (request_ts, leave_ts) = (ts(1)?, ts(2)?);
    let fetch_failure = match fields[3].trim() {
        "0" => false,
        "1" => true,
        other => return Err(format!("fetch_failure must be 0 or 1, found `{other}`")),
    };
    if leave_ts < request_ts {
        return Err(format!("leave_ts {leave_ts} is before request_ts {request_ts}"));
    }
    Ok(TraceRecord { user_id: user_id.to_string(), request_ts, leave_ts, fetch_failure })
}

/// Parses trace text. Malformed rows are skipped and reported with their
/// line number; more than half malformed is a hard error.
pub fn parse_trace_str(text: &str, origin: &Path) -> Result<TraceParse> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != TRACE_HEADER {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            message: format!("header must be `{}`, found `{}`", TRACE_HEADER.join(","), header.join(",")),
        });
    }
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for row in rdr.records() {
        match row {
            Ok(fields) => {
                let line = fields.position().map_or(0, |p| p.line());
                match parse_row(&fields) {
                    Ok(r) => records.push(r),
                    Err(message) => rejected.push(RowError { line, message }),
                }
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                rejected.push(RowError { line, message: e.to_string() });
            }
        }
    }
    let total = records.len() + rejected.len();
    if rejected.len() * 2 > total {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            message: format!(
                "{} of {total} rows are malformed (first: line {}: {})",
                rejected.len(),
                rejected[0].line,
                rejected[0].message
            ),
        });
    }
    Ok(TraceParse { records, rejected })
}

pub fn parse_trace(path: impl AsRef<Path>) -> Result<TraceParse> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_str(&text, path)
}

pub fn write_trace<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for r in records {
        w.write_record([
            r.user_id.clone(),
            r.request_ts.to_string(),
            r.leave_ts.to_string(),
            if r.fetch_failure { "1" } else { "0" }.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEventKind {
    Arrival,
    Departure,
}

/// A session boundary taken from a trace, in the trace's own clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionEvent {
    pub time: f64,
    pub kind: SessionEventKind,
    /// Index of the record in the input slice.
    pub record: usize,
}

/// One arrival and one departure per record, in time order. At equal
/// times departures come first, then record order.
pub fn replay_sessions(records: &[TraceRecord]) -> Vec<SessionEvent> {
    let mut events: Vec<SessionEvent> = records
        .iter()
        .enumerate()
        .flat_map(|(i, r)| {
            [
                SessionEvent { time: r.request_ts, kind: SessionEventKind::Arrival, record: i },
                SessionEvent { time: r.leave_ts, kind: SessionEventKind::Departure, record: i },
            ]
        })
        .collect();
    let rank = |k: SessionEventKind| match k {
        SessionEventKind::Departure => 0,
        SessionEventKind::Arrival => 1,
    };
    events
        .sort_by(|a, b| a.time.total_cmp(&b.time).then(rank(a.kind).cmp(&rank(b.kind))).then(a.record.cmp(&b.record)));
    events
}

/// A synthetic trace from the churn model: one record per generated
/// session, flagged when its request falls inside the failure.
pub fn synthesize_trace(cfg: &SimConfig) -> Result<Vec<TraceRecord>> {
    let cfg = crate::model::validate_config(cfg.clone())?;
    let world = World::synthetic(&cfg)?;
    Ok(world
        .peers
        .iter()
        .map(|p| TraceRecord {
            user_id: format!("u{}", p.id.0),
            request_ts: p.join_time,
            leave_ts: p.leave_time(),
            fetch_failure: world.scenario.is_affected(p.id, p.join_time),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TraceParse> {
        parse_trace_str(text, Path::new("test.csv"))
    }

    #[test]
    fn maps_fields() {
        let t = parse("user_id,request_ts,leave_ts,fetch_failure\nu1,100,160,0\n").unwrap();
        assert_eq!(
            t.records,
            vec![TraceRecord { user_id: "u1".into(), request_ts: 100.0, leave_ts: 160.0, fetch_failure: false }]
        );
        assert_eq!(t.records[0].session_seconds(), 60.0);
    }

    #[test]
    fn rejects_backwards_rows_with_line_numbers() {
        let t = parse("user_id,request_ts,leave_ts,fetch_failure\nu1,100,160,0\nu2,200,150,1\nu3,1,2,1\n").unwrap();
        assert_eq!(t.records.len(), 2);
        assert_eq!(t.rejected.len(), 1);
        assert_eq!(t.rejected[0].line, 3);
        assert!(t.rejected[0].message.contains("before"));
    }

    #[test]
    fn mostly_malformed_is_fatal() {
        let err = parse("user_id,request_ts,leave_ts,fetch_failure\nu1,1,2,0\nu2,x,2,0\nu3,1,2,7\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(parse("a,b\n1,2\n").is_err());
    }

    #[test]
    fn iso_timestamps() {
        let t = parse("user_id,request_ts,leave_ts,fetch_failure\nu1,2014-08-01T00:00:00Z,2014-08-01T00:01:30.5+00:00,1\nu2,2014-08-01 08:00:00,2014-08-01T08:00:10,0\n").unwrap();
        assert_eq!(t.records[0].request_ts, 1_406_851_200.0);
        assert_eq!(t.records[0].session_seconds(), 90.5);
        assert!(t.records[0].fetch_failure);
        assert_eq!(t.records[1].session_seconds(), 10.0);
    }

    #[test]
    fn replay_schedule() {
        assert!(replay_sessions(&[]).is_empty());
        let recs = vec![
            TraceRecord { user_id: "a".into(), request_ts: 5.0, leave_ts: 9.0, fetch_failure: false },
            TraceRecord { user_id: "b".into(), request_ts: 1.0, leave_ts: 5.0, fetch_failure: true },
        ];
        let s = replay_sessions(&recs);
        assert_eq!(s.len(), 4);
        assert!(s.windows(2).all(|w| w[0].time <= w[1].time));
        let kinds: Vec<_> = s.iter().map(|e| (e.record, e.kind)).collect();
        assert_eq!(
            kinds,
            vec![
                (1, SessionEventKind::Arrival),
                (1, SessionEventKind::Departure),
                (0, SessionEventKind::Arrival),
                (0, SessionEventKind::Departure)
            ]
        );
    }

    #[test]
    fn synthetic_trace_round_trips() {
        let cfg = SimConfig { peer_count: 200, ..SimConfig::default() };
        let recs = synthesize_trace(&cfg).unwrap();
        assert_eq!(recs.len(), 200);
        assert!(recs.iter().any(|r| r.fetch_failure));
        let mut buf = Vec::new();
        write_trace(&recs, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert!(back.rejected.is_empty());
        assert_eq!(back.records, recs);
    }

    proptest::proptest! {
        #[test]
        fn schedule_is_twice_the_records(spans in proptest::collection::vec((0.0f64..1e6, 0.0f64..1e4, proptest::bool::ANY), 0..40)) {
            let recs: Vec<TraceRecord> = spans
                .iter()
                .enumerate()
                .map(|(i, &(start, len, f))| TraceRecord { user_id: format!("u{i}"), request_ts: start, leave_ts: start + len, fetch_failure: f })
                .collect();
            let s = replay_sessions(&recs);
            proptest::prop_assert_eq!(s.len(), 2 * recs.len());
            proptest::prop_assert!(s.windows(2).all(|w| w[0].time <= w[1].time));
        }
    }
}
