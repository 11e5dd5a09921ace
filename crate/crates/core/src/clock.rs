//! Time sources and the fixed wire format for timestamps.

use chrono::{DateTime, SecondsFormat, SubsecRound, TimeDelta, Utc};
use std::sync::atomic::{AtomicU64, Ordering};

pub type Timestamp = DateTime<Utc>;

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    /// Wall time truncated to the microsecond precision of the wire format.
    fn now(&self) -> Timestamp {
        Utc::now().trunc_subsecs(6)
    }
}

/// Deterministic clock: the n-th reading is `start + n * step`.
///
/// Used for reproducible transcripts (simulation, equivalence checks).
#[derive(Debug)]
pub struct SteppingClock {
    start: Timestamp,
    step: TimeDelta,
    readings: AtomicU64,
}

impl SteppingClock {
    pub fn new(start: Timestamp) -> Self {
        Self::with_step(start, TimeDelta::seconds(1))
    }

    pub fn with_step(start: Timestamp, step: TimeDelta) -> Self {
        Self { start, step, readings: AtomicU64::new(0) }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> Timestamp {
        let n = self.readings.fetch_add(1, Ordering::SeqCst);
        self.start + self.step * n as i32
    }
}

/// Formats a timestamp as ISO-8601 UTC with microsecond precision.
pub fn format_timestamp(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Parses a timestamp, accepting only the exact canonical rendering.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let parsed = DateTime::parse_from_rfc3339(s).ok()?.with_timezone(&Utc);
    (format_timestamp(&parsed) == s).then_some(parsed)
}

/// Serde adapter for [`Timestamp`] using the canonical format.
pub mod canonical {
    use super::{format_timestamp, parse_timestamp, Timestamp};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Timestamp, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_timestamp(ts))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Timestamp, D::Error> {
        let raw = String::deserialize(d)?;
        parse_timestamp(&raw).ok_or_else(|| D::Error::custom(format!("non-canonical timestamp {raw:?}")))
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(ts: &Option<Timestamp>, s: S) -> Result<S::Ok, S::Error> {
            match ts {
                Some(ts) => s.serialize_some(&format_timestamp(ts)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Timestamp>, D::Error> {
            match Option::<String>::deserialize(d)? {
                None => Ok(None),
                Some(raw) => parse_timestamp(&raw)
                    .map(Some)
                    .ok_or_else(|| D::Error::custom(format!("non-canonical timestamp {raw:?}"))),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn system_readings_survive_the_wire_format() {
        let now = SystemClock.now();
        assert_eq!(parse_timestamp(&format_timestamp(&now)), Some(now));
    }

    #[test]
    fn stepping_clock_advances_one_step_per_reading() {
        let start = parse_timestamp("2025-06-01T09:00:00.000000Z").unwrap();
        let clock = SteppingClock::new(start);
        assert_eq!(clock.now(), start);
        assert_eq!(format_timestamp(&clock.now()), "2025-06-01T09:00:01.000000Z");
    }

    #[test]
    fn only_canonical_renderings_parse() {
        assert!(parse_timestamp("2025-06-01T09:00:00.000000Z").is_some());
        assert!(parse_timestamp("2025-06-01T09:00:00Z").is_none());
        assert!(parse_timestamp("2025-06-01T09:00:00.000000z").is_none());
        assert!(parse_timestamp("2025-06-01T09:00:00.000000+00:00").is_none());
    }
}
