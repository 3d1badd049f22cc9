use std::cmp::Ordering;

use super::{
    Action, LedgerEvent, MartingaleRecord, Position, SizingMode, StrategyConfig, StrategyError,
    TieRule, TradeLedger, Variant,
};
use crate::money::Money;
use crate::ordinal::decline_persistence;
use crate::series::PriceSeries;
use crate::sizing::{kelly_budget, position_size};

/// Fight is only worth it when a decline is more likely to end than to continue.
const FIGHT_GATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Move {
    Rise,
    Fall,
    Flat,
}

struct Sim<'a> {
    series: &'a PriceSeries,
    config: &'a StrategyConfig,
    cash: Money,
    position: Option<Position>,
    ledger: TradeLedger,
}

/// Replays `series` bar by bar under `config`.
///
/// While flat, a close below the previous close triggers an entry at that
/// close. While long, a rise sells everything; a fall is handled per variant.
/// A sell at bar `s` makes bar `s + 1` the next possible entry. Any position
/// still open after the last bar is liquidated at the final close.
///
/// # Panics
///
/// If cash or a position value leaves the `i64` range of [`Money`]
/// (about 9.2e14 in whole currency units).
pub fn run_backtest(series: &PriceSeries, config: &StrategyConfig) -> Result<TradeLedger, StrategyError> {
    config.validate()?;
    if series.len() < 2 {
        return Err(StrategyError::SeriesTooShort { len: series.len() });
    }
    let closes = series.closes();
    let effective_variant = match config.variant {
        Variant::Fight => match decline_persistence(&closes) {
            Some(p) if p < FIGHT_GATE => Variant::Fight,
            _ => Variant::Flight,
        },
        v => v,
    };
    let mut sim = Sim {
        series,
        config,
        cash: config.initial_bankroll,
        position: None,
        ledger: TradeLedger {
            initial_bankroll: config.initial_bankroll,
            events: Vec::new(),
            final_bankroll: config.initial_bankroll,
            effective_variant,
            forced_pnl: Money::ZERO,
            fees_paid: Money::ZERO,
            martingales: Vec::new(),
        },
    };

    for i in 1..closes.len() {
        let mv = match closes[i].cmp(&closes[i - 1]) {
            Ordering::Less => Move::Fall,
            Ordering::Greater => Move::Rise,
            Ordering::Equal => match config.ties {
                TieRule::NoSignal => Move::Flat,
                TieRule::NonDecreaseIsRise => Move::Rise,
            },
        };
        match sim.position.as_ref() {
            None => {
                if mv == Move::Fall {
                    sim.enter(i, effective_variant)?;
                }
            }
            Some(pos) => match effective_variant {
                Variant::Freeze => {
                    let recovered = match config.ties {
                        TieRule::NoSignal => closes[i] > pos.entry_price,
                        TieRule::NonDecreaseIsRise => closes[i] >= pos.entry_price,
                    };
                    if recovered {
                        sim.exit(i, Action::Sell);
                    }
                }
                Variant::Flight => {
                    if mv != Move::Flat {
                        sim.exit(i, Action::Sell);
                    }
                }
                Variant::Fight => match mv {
                    Move::Rise => sim.exit(i, Action::Sell),
                    Move::Fall => {
                        if !sim.add_rung(i) {
                            sim.exit(i, Action::Sell);
                        }
                    }
                    Move::Flat => {}
                },
            },
        }
    }
    if sim.position.is_some() {
        sim.exit(closes.len() - 1, Action::ForcedLiquidation);
    }
    sim.ledger.final_bankroll = sim.cash;
    Ok(sim.ledger)
}

impl Sim<'_> {
    fn price(&self, i: usize) -> Money {
        self.series.bars()[i].close
    }

    fn record(&mut self, i: usize, action: Action, units: u64, price: Money) {
        self.ledger.events.push(LedgerEvent {
            index: i,
            timestamp: self.series.bars()[i].timestamp,
            action,
            units,
            price,
            bankroll_after: self.cash,
        });
    }

    fn enter(&mut self, i: usize, variant: Variant) -> Result<(), StrategyError> {
        let price = self.price(i);
        let fee = self.config.fee_per_fill;
        let units = match self.config.mode {
            SizingMode::Single => {
                let units = self.config.martingale_base;
                let needed = price.times(units) + fee;
                // The exit fee is reserved up front so cash never goes negative.
                if needed + fee > self.cash {
                    return Err(StrategyError::InsufficientBankroll {
                        index: i,
                        needed,
                        available: self.cash,
                    });
                }
                units
            }
            SizingMode::Kelly => {
                let kelly = self.config.kelly.as_ref().expect("validated");
                let mut units = position_size(self.cash, price, kelly);
                while units > 0 && price.times(units) + fee + fee > self.cash {
                    units -= 1;
                }
                if units == 0 {
                    return Ok(());
                }
                units
            }
        };
        let budget = match (variant, self.config.kelly.as_ref()) {
            (Variant::Fight, Some(k)) => kelly_budget(self.cash, k),
            _ => Money::ZERO,
        };
        let cost = price.times(units);
        self.cash -= cost + fee;
        self.ledger.fees_paid += fee;
        self.position = Some(Position {
            units,
            base_units: units,
            cost_basis: cost,
            entry_index: i,
            entry_price: price,
            martingale_step: 0,
            martingale_budget: budget,
        });
        if variant == Variant::Fight {
            self.ledger.martingales.push(MartingaleRecord {
                entry_index: i,
                budget,
                committed: Money::ZERO,
            });
        }
        self.record(i, Action::Buy, units, price);
        Ok(())
    }

    /// Buys the next doubling rung if both the remaining budget and cash cover it.
    fn add_rung(&mut self, i: usize) -> bool {
        let price = self.price(i);
        let fee = self.config.fee_per_fill;
        let pos = self.position.as_ref().expect("long");
        let Some(units) = 1u64
            .checked_shl(pos.martingale_step + 1)
            .and_then(|m| pos.base_units.checked_mul(m))
        else {
            return false;
        };
        let Some(cost) = price.checked_times(units) else {
            return false;
        };
        let outlay = cost + fee;
        if outlay > pos.martingale_budget || outlay + fee > self.cash {
            return false;
        }
        self.cash -= outlay;
        self.ledger.fees_paid += fee;
        let pos = self.position.as_mut().expect("long");
        pos.units += units;
        pos.cost_basis += cost;
        pos.martingale_step += 1;
        pos.martingale_budget -= outlay;
        if let Some(rec) = self.ledger.martingales.last_mut() {
            rec.committed += outlay;
        }
        self.record(i, Action::Buy, units, price);
        true
    }

    fn exit(&mut self, i: usize, action: Action) {
        let pos = self.position.take().expect("long");
        let price = self.price(i);
        let fee = self.config.fee_per_fill;
        let proceeds = price.times(pos.units);
        self.cash += proceeds - fee;
        self.ledger.fees_paid += fee;
        if action == Action::ForcedLiquidation {
            self.ledger.forced_pnl += proceeds - pos.cost_basis;
        }
        self.record(i, action, pos.units, price);
    }
}
