//! CSV layouts for ledgers and bankroll trajectories.

use std::io::{Read, Write};

use thiserror::Error;

use super::{LedgerEvent, TradeLedger};
use crate::money::Money;
use crate::series::parse_timestamp;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad ledger row {line}: {reason}")]
    BadRow { line: u64, reason: String },
}

pub const LEDGER_HEADER: [&str; 6] = ["index", "timestamp", "action", "units", "price", "bankroll_after"];
pub const TRAJECTORY_HEADER: [&str; 3] = ["checkpoint", "bar_index", "bankroll"];

pub fn write_ledger_csv<W: Write>(ledger: &TradeLedger, writer: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(LEDGER_HEADER)?;
    for e in &ledger.events {
        wtr.write_record([
            e.index.to_string(),
            e.timestamp.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
            e.action.as_str().to_string(),
            e.units.to_string(),
            e.price.to_string(),
            e.bankroll_after.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_ledger_csv<R: Read>(reader: R) -> Result<Vec<LedgerEvent>, IoError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |reason: String| IoError::BadRow { line, reason };
        let field = |i: usize| record.get(i).ok_or_else(|| bad(format!("missing column {i}")));
        out.push(LedgerEvent {
            index: field(0)?.parse().map_err(|e| bad(format!("index: {e}")))?,
            timestamp: parse_timestamp(field(1)?).map_err(bad)?,
            action: field(2)?.parse().map_err(bad)?,
            units: field(3)?.parse().map_err(|e| bad(format!("units: {e}")))?,
            price: field(4)?.parse::<Money>().map_err(|e| bad(e.to_string()))?,
            bankroll_after: field(5)?.parse::<Money>().map_err(|e| bad(e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn write_trajectory_csv<W: Write>(points: &[(usize, Money)], writer: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(TRAJECTORY_HEADER)?;
    for (k, (bar, bankroll)) in points.iter().enumerate() {
        wtr.write_record([(k + 1).to_string(), bar.to_string(), bankroll.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Cash after the last sell or liquidation, or `initial` if nothing ever closed.
pub fn final_bankroll_from_rows(rows: &[LedgerEvent], initial: Money) -> Money {
    rows.last().map_or(initial, |e| e.bankroll_after)
}
