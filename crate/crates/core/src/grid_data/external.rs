use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};
use crate::io::read_to_string;

/// Set of dates flagged as holidays.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HolidayCalendar {
    dates: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn new(dates: impl IntoIterator<Item = NaiveDate>) -> Self {
        HolidayCalendar {
            dates: dates.into_iter().collect(),
        }
    }

    /// One ISO-8601 date per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut dates = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let date = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("invalid date {line:?}: {e}"),
            })?;
            dates.insert(date);
        }
        Ok(HolidayCalendar { dates })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.dates.contains(&date)
    }
}

fn slots_per_day(interval_minutes: u32) -> Result<usize> {
    match interval_minutes {
        60 => Ok(24),
        30 => Ok(48),
        other => Err(Error::InvalidArgument(format!(
            "external features support 30 or 60 minute intervals, got {other}"
        ))),
    }
}

/// Length of the calendar feature vector for an interval.
pub fn external_feature_dim(interval_minutes: u32) -> Result<usize> {
    Ok(slots_per_day(interval_minutes)? + 7 + 1)
}

/// `[time-of-day one-hot | day-of-week one-hot (Monday first) | holiday flag]`.
pub fn external_features(
    timestamp: NaiveDateTime,
    interval_minutes: u32,
    holidays: &HolidayCalendar,
) -> Result<Vec<f64>> {
    let slots = slots_per_day(interval_minutes)?;
    let mut v = vec![0.0; slots + 8];
    let minute_of_day = timestamp.hour() * 60 + timestamp.minute();
    v[(minute_of_day / interval_minutes) as usize] = 1.0;
    v[slots + timestamp.weekday().num_days_from_monday() as usize] = 1.0;
    if holidays.contains(timestamp.date()) {
        v[slots + 7] = 1.0;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M").unwrap()
    }

    #[test]
    fn monday_midnight_hourly() {
        // 2024-01-01 is a Monday.
        let v = external_features(ts("2024-01-01T00:00"), 60, &HolidayCalendar::default()).unwrap();
        assert_eq!(v.len(), 32);
        let hot: Vec<usize> = (0..v.len()).filter(|&i| v[i] == 1.0).collect();
        assert_eq!(hot, vec![0, 24]);
    }

    #[test]
    fn sunday_late_half_hourly() {
        let v = external_features(ts("2024-01-07T23:30"), 30, &HolidayCalendar::default()).unwrap();
        assert_eq!(v.len(), 56);
        assert_eq!(v[47], 1.0);
        assert_eq!(v[48 + 6], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn holiday_flag_and_calendar_parsing() {
        let cal = HolidayCalendar::parse("# national\n2024-01-01\n\n2024-12-25 # xmas\n").unwrap();
        let v = external_features(ts("2024-01-01T13:00"), 60, &cal).unwrap();
        assert_eq!(v[31], 1.0);
        let v = external_features(ts("2024-01-02T13:00"), 60, &cal).unwrap();
        assert_eq!(v[31], 0.0);
        assert!(HolidayCalendar::parse("2024-13-01\n").is_err());
    }

    #[test]
    fn unsupported_interval() {
        assert!(
            external_features(ts("2024-01-01T00:00"), 15, &HolidayCalendar::default()).is_err()
        );
    }
}
