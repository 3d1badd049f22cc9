//! Minute-bar price series: the canonical in-memory model plus CSV loading.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

/// Fewest bars a loaded series may have: one window at the default embedding dimension.
pub const DEFAULT_MIN_BARS: usize = 3;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("symbol `{0}` not present in input")]
    UnknownSymbol(String),
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(DateTime<Utc>),
    #[error("non-positive close at line {line}")]
    NonPositivePrice { line: u64 },
    #[error("series has {len} bars, need at least {required}")]
    SeriesTooShort { len: usize, required: usize },
}

/// One minute bar. Only the closing price is modelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: DateTime<Utc>,
    pub close: Money,
}

/// Time-ordered closes for a single symbol.
///
/// Timestamps are strictly increasing and minute-aligned; every close is positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PriceSeries {
    symbol: String,
    bars: Vec<Bar>,
}

impl PriceSeries {
    /// Validates already-ordered bars. Seconds are truncated to the minute.
    pub fn new(symbol: impl Into<String>, bars: Vec<Bar>) -> Result<Self, SeriesError> {
        Self::build(symbol.into(), bars, false, 1)
    }

    /// Sorts bars by timestamp before validating.
    pub fn from_unsorted(
        symbol: impl Into<String>,
        bars: Vec<Bar>,
        min_bars: usize,
    ) -> Result<Self, SeriesError> {
        Self::build(symbol.into(), bars, true, min_bars)
    }

    /// Bars one minute apart starting at `start`.
    pub fn from_closes(
        symbol: impl Into<String>,
        start: DateTime<Utc>,
        closes: &[Money],
    ) -> Result<Self, SeriesError> {
        let bars = closes
            .iter()
            .enumerate()
            .map(|(i, &close)| Bar {
                timestamp: start + Duration::minutes(i as i64),
                close,
            })
            .collect();
        Self::new(symbol, bars)
    }

    fn build(
        symbol: String,
        mut bars: Vec<Bar>,
        sort: bool,
        min_bars: usize,
    ) -> Result<Self, SeriesError> {
        for (i, bar) in bars.iter_mut().enumerate() {
            if !bar.close.is_positive() {
                return Err(SeriesError::NonPositivePrice { line: i as u64 + 1 });
            }
            bar.timestamp = truncate_to_minute(bar.timestamp);
        }
        if sort {
            bars.sort_by_key(|b| b.timestamp);
        }
        for pair in bars.windows(2) {
            if pair[0].timestamp == pair[1].timestamp {
                return Err(SeriesError::DuplicateTimestamp(pair[1].timestamp));
            }
            if pair[0].timestamp > pair[1].timestamp {
                return Err(SeriesError::MalformedRow {
                    line: 0,
                    reason: format!(
                        "bars out of order at {} -> {}",
                        pair[0].timestamp, pair[1].timestamp
                    ),
                });
            }
        }
        if bars.len() < min_bars {
            return Err(SeriesError::SeriesTooShort {
                len: bars.len(),
                required: min_bars,
            });
        }
        Ok(PriceSeries { symbol, bars })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    pub fn closes(&self) -> Vec<Money> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn first_close(&self) -> Option<Money> {
        self.bars.first().map(|b| b.close)
    }
}

fn truncate_to_minute(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.with_second(0)
        .and_then(|t| t.with_nanosecond(0))
        .unwrap_or(ts)
}

/// Which on-disk layout a file uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One file per symbol with header `timestamp,close`.
    #[default]
    Canonical,
    /// Multi-symbol intraday dump: first header row holds symbols, second
    /// holds field names (`open,high,low,close,volume` per symbol).
    Kaggle,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" | "csv" => Ok(InputFormat::Canonical),
            "kaggle" => Ok(InputFormat::Kaggle),
            other => Err(format!("unknown input format `{other}`")),
        }
    }
}

/// Bookkeeping from a load, for the audit trail.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub rows: usize,
    /// Columns present in the file that the loader did not use.
    pub ignored_columns: usize,
    /// Rows dropped because the symbol had no close at that timestamp (Kaggle layout only).
    pub skipped_rows: usize,
    /// Whether input rows had to be reordered.
    pub reordered: bool,
}

pub fn load_series(
    path: impl AsRef<Path>,
    symbol: &str,
    format: InputFormat,
) -> Result<PriceSeries, SeriesError> {
    load_series_detailed(path, symbol, format, DEFAULT_MIN_BARS).map(|(s, _)| s)
}

pub fn load_series_detailed(
    path: impl AsRef<Path>,
    symbol: &str,
    format: InputFormat,
    min_bars: usize,
) -> Result<(PriceSeries, LoadSummary), SeriesError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => SeriesError::FileNotFound(path.to_path_buf()),
        _ => SeriesError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    parse_series(file, symbol, format, min_bars)
}

/// Parses a series from any reader. `min_bars` is normally the embedding dimension.
pub fn parse_series<R: Read>(
    reader: R,
    symbol: &str,
    format: InputFormat,
    min_bars: usize,
) -> Result<(PriceSeries, LoadSummary), SeriesError> {
    let (bars, mut summary) = match format {
        InputFormat::Canonical => read_canonical(reader)?,
        InputFormat::Kaggle => read_kaggle(reader, symbol)?,
    };
    summary.reordered = bars.windows(2).any(|w| w[0].timestamp > w[1].timestamp);
    let series = PriceSeries::from_unsorted(symbol, bars, min_bars)?;
    Ok((series, summary))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn malformed(line: u64, reason: impl Into<String>) -> SeriesError {
    SeriesError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_error(err: csv::Error) -> SeriesError {
    let line = err.position().map_or(0, |p| p.line());
    malformed(line, err.to_string())
}

fn parse_close(raw: &str, line: u64) -> Result<Money, SeriesError> {
    let close: Money = raw
        .parse()
        .map_err(|e| malformed(line, format!("close: {e}")))?;
    if !close.is_positive() {
        return Err(SeriesError::NonPositivePrice { line });
    }
    Ok(close)
}

fn read_canonical<R: Read>(reader: R) -> Result<(Vec<Bar>, LoadSummary), SeriesError> {
    let mut rdr = csv_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Ok((Vec::new(), LoadSummary::default())),
        Some(r) => r.map_err(csv_error)?,
    };
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| SeriesError::MissingColumn(name.to_string()))
    };
    let ts_col = find("timestamp")?;
    let close_col = find("close")?;
    let mut summary = LoadSummary {
        ignored_columns: header.len().saturating_sub(2),
        ..LoadSummary::default()
    };
    let mut bars = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let ts_raw = record
            .get(ts_col)
            .ok_or_else(|| malformed(line, "missing timestamp field"))?;
        let close_raw = record
            .get(close_col)
            .ok_or_else(|| malformed(line, "missing close field"))?;
        let timestamp = parse_timestamp(ts_raw).map_err(|r| malformed(line, r))?;
        let close = parse_close(close_raw, line)?;
        bars.push(Bar { timestamp, close });
    }
    summary.rows = bars.len();
    Ok((bars, summary))
}

fn read_kaggle<R: Read>(reader: R, symbol: &str) -> Result<(Vec<Bar>, LoadSummary), SeriesError> {
    let mut rdr = csv_reader(reader);
    let mut records = rdr.records();
    let symbols_row = match records.next() {
        None => return Ok((Vec::new(), LoadSummary::default())),
        Some(r) => r.map_err(csv_error)?,
    };
    let fields_row = match records.next() {
        None => return Err(SeriesError::MissingColumn("field header row".into())),
        Some(r) => r.map_err(csv_error)?,
    };
    let close_col = (1..symbols_row.len())
        .find(|&i| {
            symbols_row.get(i) == Some(symbol)
                && fields_row
                    .get(i)
                    .is_some_and(|f| f.eq_ignore_ascii_case("close"))
        })
        .ok_or_else(|| SeriesError::UnknownSymbol(symbol.to_string()))?;
    let mut summary = LoadSummary {
        ignored_columns: symbols_row.len().saturating_sub(2),
        ..LoadSummary::default()
    };
    let mut bars = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let line = record_line(&record);
        let ts_raw = record.get(0).unwrap_or("");
        if ts_raw.is_empty() {
            continue;
        }
        let close_raw = record.get(close_col).unwrap_or("");
        if close_raw.is_empty() || close_raw.eq_ignore_ascii_case("nan") {
            summary.skipped_rows += 1;
            continue;
        }
        let timestamp = parse_timestamp(ts_raw).map_err(|r| malformed(line, r))?;
        // The dump stores floats; keep four decimals.
        let close = match close_raw.parse::<Money>() {
            Ok(m) => m,
            Err(_) => {
                let v: f64 = close_raw
                    .parse()
                    .map_err(|_| malformed(line, format!("close `{close_raw}`")))?;
                Money::from_f64_rounded(v)
            }
        };
        if !close.is_positive() {
            return Err(SeriesError::NonPositivePrice { line });
        }
        bars.push(Bar { timestamp, close });
    }
    summary.rows = bars.len();
    Ok((bars, summary))
}

/// Accepts RFC 3339, `YYYY-MM-DD HH:MM[:SS][offset]` (naive values are UTC), or epoch seconds.
pub fn parse_timestamp(raw: &str) -> Result<DateTime<Utc>, String> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Utc
            .timestamp_opt(secs, 0)
            .single()
            .ok_or_else(|| format!("epoch out of range `{raw}`"));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%:z", "%Y-%m-%d %H:%M:%S%z", "%Y-%m-%d %H:%M%:z"] {
        if let Ok(t) = DateTime::parse_from_str(raw, fmt) {
            return Ok(t.with_timezone(&Utc));
        }
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Ok(t.and_utc());
        }
    }
    Err(format!("unrecognised timestamp `{raw}`"))
}

/// Writes the canonical `timestamp,close` layout.
pub fn write_canonical<W: Write>(series: &PriceSeries, writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["timestamp", "close"])?;
    for bar in series.bars() {
        wtr.write_record([
            bar.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            bar.close.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Consecutive bar pairs more than one minute apart. Gaps are reported, never filled.
pub fn gaps_report(series: &PriceSeries) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
    series
        .bars()
        .windows(2)
        .filter(|w| w[1].timestamp - w[0].timestamp > Duration::minutes(1))
        .map(|w| (w[0].timestamp, w[1].timestamp))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(s: &str) -> DateTime<Utc> {
        parse_timestamp(s).unwrap()
    }

    fn parse(text: &str) -> Result<PriceSeries, SeriesError> {
        parse_series(text.as_bytes(), "TEST", InputFormat::Canonical, 3).map(|(s, _)| s)
    }

    #[test]
    fn loads_worked_series_prefix() {
        let s = parse(
            "timestamp,close\n\
             2017-09-11T09:30:00Z,34.0000\n\
             2017-09-11T09:31:00Z,3.0000\n\
             2017-09-11T09:32:00Z,5.0000\n",
        )
        .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(
            s.closes(),
            vec![Money::from_whole(34), Money::from_whole(3), Money::from_whole(5)]
        );
    }

    #[test]
    fn empty_input_is_too_short() {
        assert!(matches!(
            parse(""),
            Err(SeriesError::SeriesTooShort { len: 0, required: 3 })
        ));
        assert!(matches!(
            parse("timestamp,close\n"),
            Err(SeriesError::SeriesTooShort { len: 0, .. })
        ));
    }

    #[test]
    fn reverse_order_matches_sorted() {
        let sorted = parse("timestamp,close\n0,1\n60,2\n120,3\n").unwrap();
        let (reversed, summary) = parse_series(
            "timestamp,close\n120,3\n60,2\n0,1\n".as_bytes(),
            "TEST",
            InputFormat::Canonical,
            3,
        )
        .unwrap();
        assert_eq!(sorted, reversed);
        assert!(summary.reordered);
    }

    #[test]
    fn rejects_duplicates_and_bad_prices() {
        assert!(matches!(
            parse("timestamp,close\n0,1\n60,2\n60,3\n"),
            Err(SeriesError::DuplicateTimestamp(_))
        ));
        assert!(matches!(
            parse("timestamp,close\n0,1\n60,0\n120,3\n"),
            Err(SeriesError::NonPositivePrice { line: 3 })
        ));
        assert!(matches!(
            parse("timestamp,close\n0,1\nnope,2\n120,3\n"),
            Err(SeriesError::MalformedRow { line: 3, .. })
        ));
        assert!(matches!(
            parse("time,close\n0,1\n"),
            Err(SeriesError::MissingColumn(_))
        ));
    }

    #[test]
    fn seconds_are_truncated_and_can_collide() {
        let s = parse("timestamp,close\n0,1\n75,2\n120,3\n").unwrap();
        assert_eq!(s.bars()[1].timestamp, ts("60"));
        assert!(matches!(
            parse("timestamp,close\n0,1\n60,2\n90,3\n"),
            Err(SeriesError::DuplicateTimestamp(_))
        ));
    }

    #[test]
    fn extra_columns_are_counted() {
        let (_, summary) = parse_series(
            "timestamp,open,close,volume\n0,1,1,5\n60,1,2,5\n120,2,3,5\n".as_bytes(),
            "X",
            InputFormat::Canonical,
            3,
        )
        .unwrap();
        assert_eq!(summary.ignored_columns, 2);
        assert_eq!(summary.rows, 3);
    }

    #[test]
    fn timestamp_formats() {
        let expect = ts("2017-09-11T09:30:00Z");
        assert_eq!(ts("2017-09-11 09:30:00"), expect);
        assert_eq!(ts("2017-09-11 05:30:00-04:00"), expect);
        assert_eq!(ts("1505122200"), expect);
        assert!(parse_timestamp("yesterday").is_err());
    }

    #[test]
    fn kaggle_layout() {
        let text = "\
,AAA,AAA,AAA,AAA,AAA,BBB,BBB,BBB,BBB,BBB
,open,high,low,close,volume,open,high,low,close,volume
2017-09-11 09:30:00,1,1,1,10.5,100,2,2,2,20.25,5
2017-09-11 09:31:00,1,1,1,,100,2,2,2,20.5,5
2017-09-11 09:32:00,1,1,1,10.75,100,2,2,2,20.125,5
2017-09-11 09:33:00,1,1,1,10.1,100,2,2,2,20.0,5
";
        let (aaa, summary) = parse_series(text.as_bytes(), "AAA", InputFormat::Kaggle, 3).unwrap();
        assert_eq!(aaa.len(), 3);
        assert_eq!(summary.skipped_rows, 1);
        assert_eq!(aaa.bars()[0].close, "10.5".parse().unwrap());
        let (bbb, _) = parse_series(text.as_bytes(), "BBB", InputFormat::Kaggle, 3).unwrap();
        assert_eq!(bbb.len(), 4);
        assert!(matches!(
            parse_series(text.as_bytes(), "CCC", InputFormat::Kaggle, 3),
            Err(SeriesError::UnknownSymbol(_))
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            load_series("/definitely/not/here.csv", "X", InputFormat::Canonical),
            Err(SeriesError::FileNotFound(_))
        ));
    }

    #[test]
    fn gaps() {
        let mk = |mins: &[i64]| {
            let start = ts("2017-09-11T09:30:00Z");
            let bars = mins
                .iter()
                .map(|&m| Bar {
                    timestamp: start + Duration::minutes(m),
                    close: Money::from_whole(1),
                })
                .collect();
            PriceSeries::new("G", bars).unwrap()
        };
        assert!(gaps_report(&mk(&[0, 1, 2])).is_empty());
        let one = gaps_report(&mk(&[0, 5]));
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].1 - one[0].0, Duration::minutes(5));
        assert_eq!(gaps_report(&mk(&[0, 2, 10])).len(), 2);
    }

    #[test]
    fn canonical_round_trip() {
        let s = parse("timestamp,close\n0,11.23\n60,2.0001\n180,3\n").unwrap();
        let mut buf = Vec::new();
        write_canonical(&s, &mut buf).unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), s);
    }
}
