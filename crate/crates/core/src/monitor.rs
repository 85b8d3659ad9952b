//! The running curtailed trial.
//!
//! Observations arrive one at a time (or in batches, which are only an I/O
//! convenience). The trial stops and rejects the moment the `(k*+1)`-th side
//! effect is seen, and completes without rejection after `N*` observations
//! otherwise.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::TestDesign;
use crate::error::{domain, Error, Result};

pub const SNAPSHOT_FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    StoppedRejected,
    CompletedNotRejected,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    RejectH0,
    NotRejectH0,
    Continue,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::RejectH0 => "RejectH0",
            Decision::NotRejectH0 => "NotRejectH0",
            Decision::Continue => "Continue",
        })
    }
}

/// One record of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    pub seq: u64,
    pub subject: String,
    #[serde(with = "outcome_bit")]
    pub outcome: bool,
    /// RFC 3339 timestamp; kept as metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ts: Option<String>,
}

impl Observation {
    pub fn new(seq: u64, subject: impl Into<String>, outcome: bool) -> Self {
        Self { seq, subject: subject.into(), outcome, ts: None }
    }
}

mod outcome_bit {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!("outcome must be 0 or 1, got {other}"))),
        }
    }
}

/// What one `observe` call did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserveReport {
    /// Batch items applied to the state.
    pub consumed: usize,
    /// Items left unprocessed because the trial stopped.
    pub unprocessed: usize,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorState {
    pub design: TestDesign,
    pub n: u64,
    pub s_n: u64,
    pub status: Status,
    pub m_star: Option<u64>,
}

impl MonitorState {
    pub fn new(design: TestDesign) -> Result<Self> {
        design.validate()?;
        Ok(Self { design, n: 0, s_n: 0, status: Status::Running, m_star: None })
    }

    /// Apply a batch in sequence order.
    ///
    /// Either the whole prefix up to the stop is applied or, on any error,
    /// nothing is.
    pub fn observe(&mut self, batch: &[Observation]) -> Result<ObserveReport> {
        self.ensure_running()?;
        let mut next = self.clone();
        let mut consumed = 0;
        for obs in batch {
            if next.status.is_terminal() {
                break;
            }
            let expected = next.n + 1;
            if obs.seq < expected {
                return Err(Error::Duplicate { got: obs.seq, last: next.n });
            }
            if obs.seq > expected {
                return Err(Error::SequenceGap { expected, got: obs.seq });
            }
            next.step(obs.outcome);
            consumed += 1;
        }
        *self = next;
        Ok(ObserveReport { consumed, unprocessed: batch.len() - consumed, decision: self.decision() })
    }

    /// Unchecked single-outcome update for callers that own the sequence.
    pub fn record(&mut self, outcome: bool) -> Result<Status> {
        self.ensure_running()?;
        self.step(outcome);
        Ok(self.status)
    }

    fn ensure_running(&self) -> Result<()> {
        match self.status {
            Status::Running => Ok(()),
            Status::StoppedRejected => Err(Error::TerminalState("stopped and rejected")),
            Status::CompletedNotRejected => Err(Error::TerminalState("completed without rejection")),
        }
    }

    fn step(&mut self, outcome: bool) {
        self.n += 1;
        self.s_n += u64::from(outcome);
        if self.s_n == self.design.stop_count() {
            self.status = Status::StoppedRejected;
            self.m_star = Some(self.n);
        } else if self.n == self.design.n_star {
            self.status = Status::CompletedNotRejected;
            self.m_star = Some(self.n);
        }
    }

    pub fn decision(&self) -> Decision {
        match self.status {
            Status::Running => Decision::Continue,
            Status::StoppedRejected => Decision::RejectH0,
            Status::CompletedNotRejected => Decision::NotRejectH0,
        }
    }

    /// Check the counter and status invariants.
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        let (n_star, k_star) = (self.design.n_star, self.design.k_star);
        let ok = self.s_n <= self.n
            && self.n <= n_star
            && self.s_n <= k_star + 1
            && match self.status {
                Status::StoppedRejected => self.s_n == k_star + 1 && self.m_star == Some(self.n),
                Status::CompletedNotRejected => {
                    self.n == n_star && self.s_n <= k_star && self.m_star == Some(n_star)
                }
                Status::Running => self.n < n_star && self.s_n <= k_star && self.m_star.is_none(),
            };
        if ok {
            Ok(())
        } else {
            Err(domain(format!(
                "inconsistent monitor state: n={}, s_n={}, status={:?}, m_star={:?}",
                self.n, self.s_n, self.status, self.m_star
            )))
        }
    }

    /// Versioned, checksummed JSON snapshot.
    pub fn persist(&self) -> Result<Vec<u8>> {
        let state = serde_json::to_value(self)?;
        let checksum = state_checksum(&state)?;
        let envelope = serde_json::json!({
            "format_version": SNAPSHOT_FORMAT_VERSION,
            "state": state,
            "checksum": checksum,
        });
        let mut bytes = serde_json::to_vec(&envelope)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let corrupt = |e: &dyn std::fmt::Display| Error::CorruptSnapshot(e.to_string());
        let envelope: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| corrupt(&e))?;
        let version = envelope
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| corrupt(&"missing format_version"))?;
        if version != SNAPSHOT_FORMAT_VERSION {
            return Err(Error::SnapshotVersion(version));
        }
        let state = envelope.get("state").ok_or_else(|| corrupt(&"missing state"))?;
        let stored = envelope
            .get("checksum")
            .and_then(serde_json::Value::as_str)
            .ok_or_else(|| corrupt(&"missing checksum"))?;
        if state_checksum(state)? != stored {
            return Err(corrupt(&"checksum mismatch"));
        }
        let restored: MonitorState = serde_json::from_value(state.clone()).map_err(|e| corrupt(&e))?;
        restored.validate().map_err(|e| corrupt(&e))?;
        Ok(restored)
    }
}

fn state_checksum(state: &serde_json::Value) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(state)?)))
}

/// Parse a newline-delimited JSON event log. Blank lines are skipped.
pub fn read_events<R: BufRead>(reader: R) -> Result<Vec<Observation>> {
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(parse_event(&line, i + 1)?);
    }
    Ok(events)
}

fn parse_event(line: &str, lineno: usize) -> Result<Observation> {
    let invalid = |reason: String| Error::InvalidEvent { line: lineno, reason };
    let obs: Observation = serde_json::from_str(line).map_err(|e| invalid(e.to_string()))?;
    if obs.seq == 0 {
        return Err(invalid("seq is 1-based".into()));
    }
    if let Some(ts) = &obs.ts {
        chrono::DateTime::parse_from_rfc3339(ts).map_err(|e| invalid(format!("ts {ts:?}: {e}")))?;
    }
    Ok(obs)
}

pub fn write_events<W: Write>(mut writer: W, events: &[Observation]) -> Result<()> {
    for obs in events {
        serde_json::to_writer(&mut writer, obs)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Run a whole log through a fresh monitor.
pub fn replay(design: TestDesign, events: &[Observation]) -> Result<(MonitorState, ObserveReport)> {
    let mut state = MonitorState::new(design)?;
    let report = state.observe(events)?;
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DesignMode, DesignParams};

    fn design(n: u64, k: u64) -> TestDesign {
        let params = DesignParams::new(0.05, 0.1, 0.002, 0.003).unwrap();
        TestDesign::from_counts(n, k, params, DesignMode::Approximate).unwrap()
    }

    fn stream(outcomes: &[bool]) -> Vec<Observation> {
        outcomes
            .iter()
            .enumerate()
            .map(|(i, &o)| Observation::new(i as u64 + 1, format!("s{}", i + 1), o))
            .collect()
    }

    /// `total` observations with side effects at the given 1-based positions.
    fn sparse_stream(total: u64, events: &[u64]) -> Vec<Observation> {
        (1..=total)
            .map(|seq| Observation::new(seq, format!("subj-{seq}"), events.contains(&seq)))
            .collect()
    }

    #[test]
    fn fresh_state() {
        let s = MonitorState::new(design(19821, 115)).unwrap();
        assert_eq!((s.n, s.s_n, s.status, s.m_star), (0, 0, Status::Running, None));
        assert_eq!(s.decision(), Decision::Continue);
        s.validate().unwrap();
    }

    #[test]
    fn earliest_stop_truncates_batch() {
        let mut s = MonitorState::new(design(3, 0)).unwrap();
        let report = s.observe(&stream(&[true, false, false])).unwrap();
        assert_eq!(s.status, Status::StoppedRejected);
        assert_eq!((s.n, s.m_star), (1, Some(1)));
        assert_eq!(report, ObserveReport { consumed: 1, unprocessed: 2, decision: Decision::RejectH0 });
        assert!(matches!(s.observe(&stream(&[false])), Err(Error::TerminalState(_))));
    }

    #[test]
    fn surveillance_streams() {
        // 53 side effects, the last one at position 19821
        let mut positions: Vec<u64> = (1..=52).map(|i| i * 300).collect();
        positions.push(19821);

        let (s, _) = replay(design(20934, 52), &sparse_stream(19821, &positions)).unwrap();
        assert_eq!((s.status, s.m_star, s.s_n), (Status::StoppedRejected, Some(19821), 53));
        assert_eq!(s.decision(), Decision::RejectH0);

        let (s, report) = replay(design(19821, 115), &sparse_stream(19821, &positions)).unwrap();
        assert_eq!((s.status, s.m_star, s.s_n), (Status::CompletedNotRejected, Some(19821), 53));
        assert_eq!(report.decision, Decision::NotRejectH0);
    }

    #[test]
    fn sequence_errors_leave_state_untouched() {
        let mut s = MonitorState::new(design(10, 2)).unwrap();
        s.observe(&stream(&[false, true])).unwrap();
        let before = s.clone();

        let mut gap = stream(&[false, false, false, false]);
        gap.drain(..2);
        gap[1].seq = 5;
        assert!(matches!(s.observe(&gap), Err(Error::SequenceGap { expected: 4, got: 5 })));
        assert_eq!(s, before);

        let dup = vec![Observation::new(3, "a", false), Observation::new(3, "b", true)];
        assert!(matches!(s.observe(&dup), Err(Error::Duplicate { got: 3, last: 3 })));
        assert_eq!(s, before);

        let old = vec![Observation::new(1, "a", false)];
        assert!(matches!(s.observe(&old), Err(Error::Duplicate { got: 1, last: 2 })));
    }

    #[test]
    fn completion_at_n_star() {
        let mut s = MonitorState::new(design(4, 1)).unwrap();
        assert_eq!(s.record(true).unwrap(), Status::Running);
        for _ in 0..2 {
            assert_eq!(s.record(false).unwrap(), Status::Running);
        }
        assert_eq!(s.record(false).unwrap(), Status::CompletedNotRejected);
        assert_eq!((s.m_star, s.s_n), (Some(4), 1));
        assert!(s.record(false).is_err());
        s.validate().unwrap();
    }

    #[test]
    fn snapshot_round_trip_is_byte_stable() {
        let mut s = MonitorState::new(design(10, 2)).unwrap();
        s.observe(&stream(&[false, true, false])).unwrap();
        let bytes = s.persist().unwrap();
        let back = MonitorState::restore(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.persist().unwrap(), bytes);

        s.observe(&stream(&[false, true, false, true, true]).split_off(3)).unwrap();
        assert_eq!(s.status, Status::StoppedRejected);
        let bytes = s.persist().unwrap();
        assert_eq!(MonitorState::restore(&bytes).unwrap(), s);
    }

    #[test]
    fn snapshot_damage_is_detected() {
        let s = MonitorState::new(design(10, 2)).unwrap();
        let bytes = s.persist().unwrap();
        assert!(matches!(MonitorState::restore(&bytes[..bytes.len() / 2]), Err(Error::CorruptSnapshot(_))));

        let text = String::from_utf8(bytes.clone()).unwrap();
        let tampered = text.replace("\"s_n\":0", "\"s_n\":1");
        assert_ne!(tampered, text);
        assert!(matches!(MonitorState::restore(tampered.as_bytes()), Err(Error::CorruptSnapshot(_))));

        let future = text.replace("\"format_version\":1", "\"format_version\":2");
        assert!(matches!(MonitorState::restore(future.as_bytes()), Err(Error::SnapshotVersion(2))));
    }

    #[test]
    fn event_log_parsing() {
        let log = concat!(
            "{\"seq\":1,\"subject\":\"a\",\"outcome\":0,\"ts\":\"2021-01-04T10:00:00Z\"}\n",
            "\n",
            "{\"seq\":2,\"subject\":\"b\",\"outcome\":1}\n",
        );
        let events = read_events(log.as_bytes()).unwrap();
        assert_eq!(events.len(), 2);
        assert!(events[1].outcome);
        let mut out = Vec::new();
        write_events(&mut out, &events).unwrap();
        assert_eq!(read_events(out.as_slice()).unwrap(), events);

        for (bad, line) in [
            ("{\"seq\":1,\"subject\":\"a\",\"outcome\":2}", 1),
            ("{\"seq\":1,\"subject\":\"a\",\"outcome\":0,\"ts\":\"yesterday\"}", 1),
            ("{\"seq\":0,\"subject\":\"a\",\"outcome\":0}", 1),
            ("{\"seq\":1,\"subject\":\"a\",\"outcome\":0,\"extra\":true}", 1),
            ("not json", 1),
        ] {
            match read_events(bad.as_bytes()) {
                Err(Error::InvalidEvent { line: l, .. }) => assert_eq!(l, line),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }
}
