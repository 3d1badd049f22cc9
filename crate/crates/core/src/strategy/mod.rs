//! Buy-after-decline backtests: configuration, ledger, and the simulation loop.

mod engine;
mod io;
mod summary;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;
use crate::sizing::KellyParams;

pub use engine::run_backtest;
pub use io::{
    final_bankroll_from_rows, read_ledger_csv, write_ledger_csv, write_trajectory_csv, IoError,
};
pub use summary::{checkpoint_indices, summarize, trajectory, Summary};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StrategyError {
    #[error("series has {len} bars, need at least 2")]
    SeriesTooShort { len: usize },
    #[error("bankroll {available} cannot cover mandated buy of {needed} at bar {index}")]
    InsufficientBankroll {
        index: usize,
        needed: Money,
        available: Money,
    },
    #[error("invalid strategy configuration: {0}")]
    Config(String),
}

/// What to do when the price keeps falling after a buy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Hold until a close above the purchase price.
    Freeze,
    /// Sell on the next decline.
    Flight,
    /// Double down within a Kelly-capped budget, sell on the first rise.
    Fight,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Freeze, Variant::Flight, Variant::Fight];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Freeze => "freeze",
            Variant::Flight => "flight",
            Variant::Fight => "fight",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "freeze" => Ok(Variant::Freeze),
            "flight" => Ok(Variant::Flight),
            "fight" => Ok(Variant::Fight),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// How many units an entry buys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizingMode {
    /// `martingale_base` units per entry.
    #[serde(alias = "single_unit")]
    Single,
    /// Fractional-Kelly share of the current bankroll, recomputed per entry.
    #[serde(alias = "kelly_sized")]
    Kelly,
}

impl SizingMode {
    pub const ALL: [SizingMode; 2] = [SizingMode::Single, SizingMode::Kelly];

    pub fn as_str(self) -> &'static str {
        match self {
            SizingMode::Single => "single",
            SizingMode::Kelly => "kelly",
        }
    }
}

impl fmt::Display for SizingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "single" | "single_unit" | "singleunit" => Ok(SizingMode::Single),
            "kelly" | "kelly_sized" | "kellysized" => Ok(SizingMode::Kelly),
            other => Err(format!("unknown sizing mode `{other}`")),
        }
    }
}

/// Treatment of an unchanged close.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Neither a rise nor a fall.
    #[default]
    NoSignal,
    /// Counts as a rise when deciding to sell. Never triggers a buy.
    NonDecreaseIsRise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub variant: Variant,
    pub mode: SizingMode,
    pub initial_bankroll: Money,
    /// Needed for `Kelly` sizing and for the fight budget.
    pub kelly: Option<KellyParams>,
    /// Units bought at entry in single-unit mode; first rung is twice this.
    pub martingale_base: u64,
    pub ties: TieRule,
    /// Charged on every fill. Zero reproduces the frictionless model.
    pub fee_per_fill: Money,
}

impl StrategyConfig {
    pub fn new(variant: Variant, mode: SizingMode, initial_bankroll: Money) -> Self {
        StrategyConfig {
            variant,
            mode,
            initial_bankroll,
            kelly: None,
            martingale_base: 1,
            ties: TieRule::NoSignal,
            fee_per_fill: Money::ZERO,
        }
    }

    pub fn with_kelly(mut self, kelly: KellyParams) -> Self {
        self.kelly = Some(kelly);
        self
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if !self.initial_bankroll.is_positive() {
            return Err(StrategyError::Config("initial bankroll must be positive".into()));
        }
        if self.martingale_base == 0 {
            return Err(StrategyError::Config("martingale base must be at least 1".into()));
        }
        if self.fee_per_fill.is_negative() {
            return Err(StrategyError::Config("fees cannot be negative".into()));
        }
        let needs_kelly = self.variant == Variant::Fight || self.mode == SizingMode::Kelly;
        match &self.kelly {
            None if needs_kelly => Err(StrategyError::Config(format!(
                "{} / {} needs Kelly parameters",
                self.variant, self.mode
            ))),
            Some(k) => k
                .validate()
                .map_err(|e| StrategyError::Config(e.to_string())),
            None => Ok(()),
        }
    }
}

/// An open long position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Position {
    pub units: u64,
    /// Units bought at entry; rung k buys `base_units * 2^k`.
    pub base_units: u64,
    pub cost_basis: Money,
    pub entry_index: usize,
    pub entry_price: Money,
    /// Doubling rungs bought so far.
    pub martingale_step: u32,
    pub martingale_budget: Money,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Buy,
    Sell,
    ForcedLiquidation,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Buy => "buy",
            Action::Sell => "sell",
            Action::ForcedLiquidation => "forced_liquidation",
        }
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "buy" => Ok(Action::Buy),
            "sell" => Ok(Action::Sell),
            "forced_liquidation" => Ok(Action::ForcedLiquidation),
            other => Err(format!("unknown action `{other}`")),
        }
    }
}

/// One fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LedgerEvent {
    pub index: usize,
    pub timestamp: DateTime<Utc>,
    pub action: Action,
    pub units: u64,
    pub price: Money,
    pub bankroll_after: Money,
}

/// Budget and spend of one fight sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MartingaleRecord {
    pub entry_index: usize,
    pub budget: Money,
    /// Total paid for doubling rungs (the entry buy is not part of the budget).
    pub committed: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TradeLedger {
    pub initial_bankroll: Money,
    pub events: Vec<LedgerEvent>,
    pub final_bankroll: Money,
    /// Variant actually simulated; fight falls back to flight when declines
    /// tend to persist.
    pub effective_variant: Variant,
    /// P&L of positions closed by end-of-series liquidation.
    pub forced_pnl: Money,
    pub fees_paid: Money,
    pub martingales: Vec<MartingaleRecord>,
}

impl TradeLedger {
    pub fn buys(&self) -> impl Iterator<Item = &LedgerEvent> {
        self.events.iter().filter(|e| e.action == Action::Buy)
    }

    /// Sum of sell proceeds minus buy costs (fees excluded).
    pub fn gross_pnl(&self) -> Money {
        self.events
            .iter()
            .map(|e| match e.action {
                Action::Buy => -e.price.times(e.units),
                Action::Sell | Action::ForcedLiquidation => e.price.times(e.units),
            })
            .sum()
    }

    /// Closed round trips, including forced ones.
    pub fn round_trips(&self) -> usize {
        self.events.iter().filter(|e| e.action != Action::Buy).count()
    }
}
