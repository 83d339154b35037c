//! Global relay assignment: maximize the total relay-to-requester throughput
//! with exactly one relay per requester and no relay over its uplink.
//!
//! `b[q][r]` is the throughput relay `r` can give requester `q`. A relay's
//! load is the sum of `b[q][r]` over the requesters assigned to it.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};

/// Enumeration bound for [`solve_exact`] on both dimensions.
pub const EXACT_MAX_DIM: usize = 8;

const CAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("instance {requesters}x{relays} exceeds the exact solver bound of {EXACT_MAX_DIM}")]
    TooLarge { requesters: usize, relays: usize },
    #[error("no assignment respects every relay capacity")]
    Infeasible,
    #[error("malformed instance: {0}")]
    Shape(String),
}

/// Rows are requesters, columns are candidate relays.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthMatrix {
    rows: Vec<Vec<f64>>,
    relays: usize,
}

impl BandwidthMatrix {
    pub fn new(rows: Vec<Vec<f64>>, relays: usize) -> Result<Self, SolveError> {
        if let Some(bad) = rows.iter().position(|r| r.len() != relays) {
            return Err(SolveError::Shape(format!("row {bad} has {} entries, expected {relays}", rows[bad].len())));
        }
        if rows.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(SolveError::Shape("entries must be finite and >= 0".into()));
        }
        Ok(BandwidthMatrix { rows, relays })
    }

    /// Builds from rows, taking the relay count from the first row.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, SolveError> {
        let relays = rows.first().map_or(0, Vec::len);
        Self::new(rows, relays)
    }

    pub fn requesters(&self) -> usize {
        self.rows.len()
    }

    pub fn relays(&self) -> usize {
        self.relays
    }

    pub fn get(&self, requester: usize, relay: usize) -> f64 {
        self.rows[requester][relay]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn scaled(&self, k: f64) -> Self {
        BandwidthMatrix {
            rows: self.rows.iter().map(|r| r.iter().map(|v| v * k).collect()).collect(),
            relays: self.relays,
        }
    }
}

/// Binary relay-by-requester matrix: `p[r][q] == 1` iff relay `r` serves `q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMatrix {
    pub p: Vec<Vec<u8>>,
}

impl SelectionMatrix {
    pub fn column_sums(&self) -> Vec<u32> {
        let n = self.p.first().map_or(0, Vec::len);
        (0..n).map(|q| self.p.iter().map(|row| row[q] as u32).sum()).collect()
    }
}

/// A (possibly partial) one-relay-per-requester assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub relay_of: Vec<Option<usize>>,
    pub objective: f64,
}

impl Assignment {
    pub fn is_complete(&self) -> bool {
        self.relay_of.iter().all(Option::is_some)
    }

    pub fn loads(&self, b: &BandwidthMatrix) -> Vec<f64> {
        let mut load = vec![0.0; b.relays()];
        for (q, r) in self.relay_of.iter().enumerate() {
            if let Some(r) = *r {
                load[r] += b.get(q, r);
            }
        }
        load
    }

    /// True when no relay carries more than its capacity.
    pub fn respects_capacity(&self, b: &BandwidthMatrix, caps: &[f64]) -> bool {
        self.loads(b).iter().zip(caps).all(|(l, c)| *l <= c + CAP_EPS)
    }

    pub fn selection_matrix(&self, relays: usize) -> SelectionMatrix {
        let n = self.relay_of.len();
        let mut p = vec![vec![0u8; n]; relays];
        for (q, r) in self.relay_of.iter().enumerate() {
            if let Some(r) = *r {
                p[r][q] = 1;
            }
        }
        SelectionMatrix { p }
    }
}

fn check_caps(b: &BandwidthMatrix, caps: &[f64]) -> Result<(), SolveError> {
    if caps.len() != b.relays() {
        return Err(SolveError::Shape(format!("{} capacities for {} relays", caps.len(), b.relays())));
    }
    if caps.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(SolveError::Shape("capacities must be finite and >= 0".into()));
    }
    Ok(())
}

/// Exhaustive search over all `m^n` assignments, pruning prefixes that
/// already overload a relay. Ties keep the lexicographically first
/// assignment.
pub fn solve_exact(b: &BandwidthMatrix, caps: &[f64]) -> Result<Assignment, SolveError> {
    check_caps(b, caps)?;
    let (n, m) = (b.requesters(), b.relays());
    if n > EXACT_MAX_DIM || m > EXACT_MAX_DIM {
        return Err(SolveError::TooLarge { requesters: n, relays: m });
    }
    if n == 0 {
        return Ok(Assignment { relay_of: Vec::new(), objective: 0.0 });
    }

    struct Search<'a> {
        b: &'a BandwidthMatrix,
        caps: &'a [f64],
        load: Vec<f64>,
        current: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    impl Search<'_> {
        fn descend(&mut self, q: usize, value: f64) {
            if q == self.b.requesters() {
                if self.best.as_ref().is_none_or(|(v, _)| value > *v) {
                    self.best = Some((value, self.current.clone()));
                }
                return;
            }
            for r in 0..self.b.relays() {
                let bw = self.b.get(q, r);
                if self.load[r] + bw > self.caps[r] + CAP_EPS {
                    continue;
                }
                self.load[r] += bw;
                self.current.push(r);
                self.descend(q + 1, value + bw);
                self.current.pop();
                self.load[r] -= bw;
            }
        }
    }

    let mut s = Search { b, caps, load: vec![0.0; m], current: Vec::with_capacity(n), best: None };
    s.descend(0, 0.0);
    let (objective, picks) = s.best.ok_or(SolveError::Infeasible)?;
    Ok(Assignment { relay_of: picks.into_iter().map(Some).collect(), objective })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub assignment: Assignment,
    /// Requesters left without a relay.
    pub unmatched: Vec<usize>,
}

/// Scans `(requester, relay)` pairs by descending throughput and gives each
/// unassigned requester the first relay that still has room for it.
pub fn solve_greedy(b: &BandwidthMatrix, caps: &[f64]) -> Result<GreedyOutcome, SolveError> {
    check_caps(b, caps)?;
    let (n, m) = (b.requesters(), b.relays());
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|q| (0..m).map(move |r| (q, r))).collect();
    pairs.sort_by(|&(q1, r1), &(q2, r2)| b.get(q2, r2).total_cmp(&b.get(q1, r1)).then((q1, r1).cmp(&(q2, r2))));

    let mut remaining = caps.to_vec();
    let mut relay_of = vec![None; n];
    let mut objective = 0.0;
    for (q, r) in pairs {
        let bw = b.get(q, r);
        if relay_of[q].is_none() && bw <= remaining[r] + CAP_EPS {
            relay_of[q] = Some(r);
            remaining[r] -= bw;
            objective += bw;
        }
    }
    let unmatched = relay_of.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(q, _)| q).collect();
    Ok(GreedyOutcome { assignment: Assignment { relay_of, objective }, unmatched })
}

/// Writes an instance as CSV: a header row, one row per requester, and a
/// final `cap` row.
///
/// ```text
/// requester,r0,r1
/// q0,10,8
/// q1,9,1
/// cap,10,8
/// ```
pub fn matrix_to_csv(b: &BandwidthMatrix, caps: &[f64]) -> String {
    let mut out = String::from("requester");
    for r in 0..b.relays() {
        let _ = write!(out, ",r{r}");
    }
    out.push('\n');
    for (q, row) in b.rows().iter().enumerate() {
        let _ = write!(out, "q{q}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out.push_str("cap");
    for c in caps {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    out
}

pub fn matrix_from_csv(text: &str) -> Result<(BandwidthMatrix, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let relays = rdr.headers()?.len().saturating_sub(1);
    let mut rows = Vec::new();
    let mut caps = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>().map_err(|_| Error::Argument(format!("line {line}: bad number `{s}`"))))
            .collect::<Result<Vec<f64>>>()?;
        if caps.is_some() {
            return Err(Error::Argument(format!("line {line}: rows after the `cap` row")));
        }
        if rec.get(0) == Some("cap") {
            caps = Some(values);
        } else {
            rows.push(values);
        }
    }
    let caps = caps.ok_or_else(|| Error::Argument("missing `cap` row".into()))?;
    let b = BandwidthMatrix::new(rows, relays)?;
    check_caps(&b, &caps)?;
    Ok((b, caps))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<(BandwidthMatrix, Vec<f64>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    matrix_from_csv(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })
}
