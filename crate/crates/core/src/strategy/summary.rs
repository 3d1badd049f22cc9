use serde::Serialize;

use super::TradeLedger;
use crate::money::Money;
use crate::series::PriceSeries;

/// Headline numbers for one backtest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub initial: Money,
    pub final_bankroll: Money,
    pub gain: Money,
    pub gain_pct: f64,
    pub round_trips: usize,
    pub forced_pnl: Money,
}

pub fn summarize(ledger: &TradeLedger) -> Summary {
    let gain = ledger.final_bankroll - ledger.initial_bankroll;
    Summary {
        initial: ledger.initial_bankroll,
        final_bankroll: ledger.final_bankroll,
        gain,
        gain_pct: 100.0 * gain.units() as f64 / ledger.initial_bankroll.units() as f64,
        round_trips: ledger.round_trips(),
        forced_pnl: ledger.forced_pnl,
    }
}

/// `count` bar indices spread evenly over `len` bars; the last is always `len - 1`.
pub fn checkpoint_indices(len: usize, count: usize) -> Vec<usize> {
    if len == 0 {
        return Vec::new();
    }
    (1..=count).map(|j| (j * len).div_ceil(count) - 1).collect()
}

/// Cash bankroll after the last fill at or before each checkpoint bar.
pub fn trajectory(ledger: &TradeLedger, series: &PriceSeries, checkpoints: usize) -> Vec<(usize, Money)> {
    let mut events = ledger.events.iter().peekable();
    let mut cash = ledger.initial_bankroll;
    checkpoint_indices(series.len(), checkpoints)
        .into_iter()
        .map(|bar| {
            while let Some(e) = events.next_if(|e| e.index <= bar) {
                cash = e.bankroll_after;
            }
            (bar, cash)
        })
        .collect()
}
