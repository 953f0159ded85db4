//! Pedestrian-counter ingestion: loading the 4-column count table, temporal
//! filtering, per-counter means, and synthesis of the mock entry-node
//! observations consumed as the observed summary.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, NaiveTime, Weekday};

use crate::error::{AbcError, Result};
use crate::summaries::SummaryVector;

/// One row of the counter table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountRecord {
    pub count: u64,
    pub location_direction: String,
    pub day: NaiveDate,
    pub time: NaiveTime,
}

const HEADER: [&str; 4] = ["Count", "Location.Direction", "Day", "Time"];

/// Load a counter table: header `Count, Location.Direction, Day, Time`, then
/// comma-separated rows with nonnegative counts, ISO dates, and HH:MM:SS
/// times. Row order is preserved; malformed rows report their line number.
pub fn load_counts(path: impl AsRef<Path>) -> Result<Vec<CountRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| AbcError::io(path.display().to_string(), e))?;
    parse_counts(&text)
}

/// Parse counter-table text (see [`load_counts`]).
pub fn parse_counts(text: &str) -> Result<Vec<CountRecord>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(AbcError::Parse {
        line: 1,
        msg: "empty file; expected a header row".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != HEADER {
        return Err(AbcError::Parse {
            line: 1,
            msg: format!("expected header `{}`, got `{header}`", HEADER.join(", ")),
        });
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(AbcError::Parse {
                line,
                msg: format!("expected 4 comma-separated fields, got {}", fields.len()),
            });
        }
        let count: u64 = fields[0].parse().map_err(|_| AbcError::Parse {
            line,
            msg: format!("count `{}` is not a nonnegative integer", fields[0]),
        })?;
        let day = NaiveDate::parse_from_str(fields[2], "%Y-%m-%d").map_err(|_| {
            AbcError::Parse {
                line,
                msg: format!("day `{}` is not an ISO date", fields[2]),
            }
        })?;
        let time = NaiveTime::parse_from_str(fields[3], "%H:%M:%S").map_err(|_| {
            AbcError::Parse {
                line,
                msg: format!("time `{}` is not HH:MM:SS", fields[3]),
            }
        })?;
        records.push(CountRecord {
            count,
            location_direction: fields[1].to_string(),
            day,
            time,
        });
    }
    Ok(records)
}

/// Serialize records back to the counter-table format (inverse of
/// [`load_counts`] on well-formed data).
pub fn write_counts(path: impl AsRef<Path>, records: &[CountRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("Count,Location.Direction,Day,Time\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.count,
            r.location_direction,
            r.day.format("%Y-%m-%d"),
            r.time.format("%H:%M:%S")
        ));
    }
    std::fs::write(path, out).map_err(|e| AbcError::io(path.display().to_string(), e))
}

/// Keep records on Monday–Friday (when `weekdays_only`) whose time falls in
/// the half-open hour [hour:00, hour+1:00).
pub fn filter_counts(
    records: &[CountRecord],
    weekdays_only: bool,
    hour: u32,
) -> Result<Vec<CountRecord>> {
    if hour > 23 {
        return Err(AbcError::Domain(format!("hour {hour} outside 0..=23")));
    }
    Ok(records
        .iter()
        .filter(|r| {
            let weekday_ok = !weekdays_only
                || !matches!(r.day.weekday(), Weekday::Sat | Weekday::Sun);
            use chrono::Timelike;
            weekday_ok && r.time.hour() == hour
        })
        .cloned()
        .collect())
}

/// Mean count per location (insertion-independent: keyed by name).
pub fn mean_by_location(records: &[CountRecord]) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.location_direction.clone()).or_insert((0.0, 0));
        e.0 += r.count as f64;
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s / n as f64))
        .collect()
}

fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

fn base_value(base: &BTreeMap<String, f64>, name: &str) -> Result<f64> {
    base.get(name)
        .copied()
        .ok_or_else(|| AbcError::UnknownName(format!("missing base counter `{name}`")))
}

/// Build the mock entry-node observations from per-counter means:
/// AW (node 5) = C_AW × 2.2, TR (node 2) = C_TR + C_CC,
/// TA (node 0) = C_TA × 1.8, CPS (node 1) = `node1_value` (a best-guess
/// constant). Values round half-up to integers.
pub fn synthesize_mock_counters(
    base: &BTreeMap<String, f64>,
    node1_value: f64,
) -> Result<SummaryVector> {
    let c_aw = base_value(base, "C_AW")?;
    let c_tr = base_value(base, "C_TR")?;
    let c_cc = base_value(base, "C_CC")?;
    let c_ta = base_value(base, "C_TA")?;
    SummaryVector::new(
        vec!["AW".into(), "TR".into(), "TA".into(), "CPS".into()],
        vec![
            round_half_up(c_aw * 2.2),
            round_half_up(c_tr + c_cc),
            round_half_up(c_ta * 1.8),
            round_half_up(node1_value),
        ],
    )
}

/// Write an observed-summary file: `name = value` lines with `#` comments.
pub fn write_observed_summary(path: impl AsRef<Path>, summary: &SummaryVector) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("# observed summary: counter = value\n");
    for (name, value) in summary.names.iter().zip(&summary.values) {
        out.push_str(&format!("{name} = {value}\n"));
    }
    std::fs::write(path, out).map_err(|e| AbcError::io(path.display().to_string(), e))
}

/// Read an observed-summary file written by [`write_observed_summary`].
pub fn read_observed_summary(path: impl AsRef<Path>) -> Result<SummaryVector> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| AbcError::io(path.display().to_string(), e))?;
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (name, value) = body.split_once('=').ok_or(AbcError::Parse {
            line,
            msg: format!("expected `name = value`, got `{body}`"),
        })?;
        let v: f64 = value.trim().parse().map_err(|_| AbcError::Parse {
            line,
            msg: format!("`{}` is not a number", value.trim()),
        })?;
        names.push(name.trim().to_string());
        values.push(v);
    }
    SummaryVector::new(names, values)
}
