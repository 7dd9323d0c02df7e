use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, DurationRound, TimeDelta, Utc};
use croner::Cron;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid schedule `{expr}`: {reason}")]
pub struct ScheduleError {
    pub expr: String,
    pub reason: String,
}

/// A classic five-field cron schedule (minute hour day-of-month month
/// day-of-week), evaluated in UTC at minute granularity.
#[derive(Clone)]
pub struct Schedule {
    expr: String,
    cron: Cron,
}

impl Schedule {
    pub fn parse(expr: &str) -> Result<Self, ScheduleError> {
        let expr = expr.trim();
        let err = |reason: String| ScheduleError {
            expr: expr.to_string(),
            reason,
        };
        let fields = expr.split_whitespace().count();
        if fields != 5 {
            return Err(err(format!("expected 5 fields, found {fields}")));
        }
        let cron = Cron::new(expr).parse().map_err(|e| err(e.to_string()))?;
        Ok(Self {
            expr: expr.split_whitespace().collect::<Vec<_>>().join(" "),
            cron,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.expr
    }

    /// Whether the minute containing `t` is scheduled.
    pub fn matches(&self, t: DateTime<Utc>) -> bool {
        self.cron
            .is_time_matching(&minute_of(t))
            .unwrap_or(false)
    }

    /// First scheduled minute strictly after the minute containing `t`.
    pub fn next_after(&self, t: DateTime<Utc>) -> Option<DateTime<Utc>> {
        self.cron
            .find_next_occurrence(&minute_of(t), false)
            .ok()
    }
}

pub fn minute_of(t: DateTime<Utc>) -> DateTime<Utc> {
    t.duration_trunc(TimeDelta::minutes(1)).expect("minute truncation")
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Schedule({:?})", self.expr)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.expr)
    }
}

impl PartialEq for Schedule {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl Eq for Schedule {}

impl FromStr for Schedule {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}
