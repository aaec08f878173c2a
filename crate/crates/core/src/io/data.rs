//! Incidence series from `date,count` or `t,count` CSV files.

use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TimeIndex {
    Date(NaiveDate),
    Index(i64),
}

impl TimeIndex {
    fn parse(s: &str) -> Option<Self> {
        if let Ok(i) = s.parse::<i64>() {
            return Some(TimeIndex::Index(i));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().map(TimeIndex::Date)
    }

    /// Whole days or index steps from `self` to `next`.
    fn gap_to(self, next: TimeIndex) -> Option<i64> {
        match (self, next) {
            (TimeIndex::Date(a), TimeIndex::Date(b)) => Some((b - a).num_days()),
            (TimeIndex::Index(a), TimeIndex::Index(b)) => Some(b - a),
            _ => None,
        }
    }
}

impl std::fmt::Display for TimeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TimeIndex::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
            TimeIndex::Index(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceSeries {
    pub times: Vec<TimeIndex>,
    pub counts: Vec<f64>,
}

impl IncidenceSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.times.truncate(n);
        self.counts.truncate(n);
    }
}

const MISSING: [&str; 4] = ["", "NA", "na", "NaN"];

/// Parses CSV text. The header line is optional; rows must be consecutive
/// days or consecutive integer indices.
pub fn parse_incidence(text: &str, origin: &str) -> Result<IncidenceSeries> {
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut times: Vec<TimeIndex> = Vec::new();
    let mut counts = Vec::new();
    let mut last_line = 0;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let row = raw.trim();
        if row.is_empty() || row.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(err(line, format!("expected 2 fields, found {}", fields.len())));
        }
        let Some(time) = TimeIndex::parse(fields[0]) else {
            if times.is_empty() && last_line == 0 && fields[1].eq_ignore_ascii_case("count") {
                last_line = line;
                continue;
            }
            return Err(err(line, format!("cannot parse time '{}'", fields[0])));
        };
        last_line = line;
        if MISSING.contains(&fields[1]) {
            return Err(err(line, format!("missing count at {time}")));
        }
        let count: f64 = fields[1]
            .parse::<i64>()
            .map_err(|_| err(line, format!("count '{}' is not an integer", fields[1])))?
            as f64;
        if count < 0.0 {
            return Err(err(line, format!("negative count {count} at {time}")));
        }
        if let Some(&prev) = times.last() {
            match prev.gap_to(time) {
                None => return Err(err(line, "dates and integer indices are mixed".into())),
                Some(g) if g <= 0 => {
                    return Err(err(line, format!("time {time} does not increase after {prev}")))
                }
                Some(1) => {}
                Some(g) => {
                    return Err(err(line, format!("gap of {} intervals between {prev} and {time}", g - 1)))
                }
            }
        }
        times.push(time);
        counts.push(count);
    }
    if counts.is_empty() {
        return Err(err(last_line.max(1), "no observations".into()));
    }
    Ok(IncidenceSeries { times, counts })
}

pub fn load_incidence(path: &Path) -> Result<IncidenceSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_incidence(&text, &path.display().to_string())
}

/// Sums consecutive windows of `width` intervals, labelled by their first
/// time. A trailing partial window is dropped; the second value is the number
/// of dropped intervals.
pub fn aggregate(series: &IncidenceSeries, width: usize) -> Result<(IncidenceSeries, usize)> {
    if width == 0 {
        return Err(Error::Domain("aggregation width must be at least 1".into()));
    }
    let full = series.len() / width;
    if full == 0 {
        return Err(Error::Domain(format!(
            "{} observations do not fill one window of {width}",
            series.len()
        )));
    }
    let times = (0..full).map(|k| series.times[k * width]).collect();
    let counts = (0..full)
        .map(|k| series.counts[k * width..(k + 1) * width].iter().sum())
        .collect();
    Ok((IncidenceSeries { times, counts }, series.len() - full * width))
}
