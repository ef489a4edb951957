//! Simulation clock.
//!
//! Time is kept as integer nanoseconds so that event ordering is exact and
//! trace files round-trip without floating point drift.

use std::fmt;
use std::ops::{Add, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const NANOS_PER_SEC: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond. Negative or non-finite input saturates.
    pub fn from_secs_f64(secs: f64) -> Self {
        if !secs.is_finite() || secs <= 0.0 {
            return if secs == f64::INFINITY { SimTime::MAX } else { SimTime::ZERO };
        }
        let ns = (secs * NANOS_PER_SEC as f64).round();
        if ns >= u64::MAX as f64 {
            SimTime::MAX
        } else {
            SimTime(ns as u64)
        }
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SEC as f64
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    /// Time to push `bits` through a link of `bps`, rounded up to the next nanosecond.
    pub fn transmission(bits: u64, bps: u64) -> SimTime {
        assert!(bps > 0, "zero-rate link");
        let ns = (bits as u128 * NANOS_PER_SEC as u128).div_ceil(bps as u128);
        SimTime(ns.min(u64::MAX as u128) as u64)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

/// Always nine decimals: exact at nanosecond resolution.
impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:09}", self.0 / NANOS_PER_SEC, self.0 % NANOS_PER_SEC)
    }
}

impl FromStr for SimTime {
    type Err = String;

    /// Parses a non-negative decimal number of seconds without going through `f64`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (int, frac) = match s.split_once('.') {
            Some((i, f)) => (i, f),
            None => (s, ""),
        };
        let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
        if !digits(int) || !(frac.is_empty() || digits(frac)) {
            return Err(format!("not a non-negative decimal time: {s:?}"));
        }
        if frac.len() > 9 {
            return Err(format!("more than nanosecond precision: {s:?}"));
        }
        let secs: u64 = int.parse().map_err(|e| format!("{s:?}: {e}"))?;
        let mut nanos = 0u64;
        if !frac.is_empty() {
            nanos = frac.parse::<u64>().map_err(|e| format!("{s:?}: {e}"))? * 10u64.pow(9 - frac.len() as u32);
        }
        secs.checked_mul(NANOS_PER_SEC)
            .and_then(|v| v.checked_add(nanos))
            .map(SimTime)
            .ok_or_else(|| format!("time overflows: {s:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_parse_roundtrip() {
        for ns in [0, 1, 999_999_999, 1_000_000_000, 12_345_678_901_234] {
            let t = SimTime(ns);
            assert_eq!(t.to_string().parse::<SimTime>().unwrap(), t);
        }
        assert_eq!("10".parse::<SimTime>().unwrap(), SimTime(10 * NANOS_PER_SEC));
        assert_eq!("0.5".parse::<SimTime>().unwrap(), SimTime(500_000_000));
        assert!("-1.0".parse::<SimTime>().is_err());
        assert!("1.0000000001".parse::<SimTime>().is_err());
    }

    #[test]
    fn transmission_rounds_up() {
        // 1500 B at 1.5 Mb/s is exactly 8 ms
        assert_eq!(SimTime::transmission(12_000, 1_500_000), SimTime(8_000_000));
        assert_eq!(SimTime::transmission(1, 3), SimTime(333_333_334));
    }
}
