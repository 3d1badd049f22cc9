//! Reference simulator and generators shared by the integration tests.
//!
//! The oracle works on raw `i64` price units and walks the series in
//! segments: find an entry, scan forward to that position's exit, resume.
//! It never touches the engine's types except to build comparable output.
#![allow(dead_code)]

use ordinal_blsh::strategy::{Action, SizingMode, StrategyConfig, TieRule, Variant};
use ordinal_blsh::{Money, PriceSeries};
use rand::Rng;

/// One fill as `(bar, action, units, price, cash after)`.
pub type Fill = (usize, Action, u64, i64, i64);

#[derive(Debug, PartialEq, Eq)]
pub enum OracleOutcome {
    Ledger {
        fills: Vec<Fill>,
        final_cash: i64,
        ran_as: Variant,
    },
    /// SingleUnit could not pay for a mandated buy at this bar.
    Broke { bar: usize },
}

pub struct OracleSetup {
    pub variant: Variant,
    pub mode: SizingMode,
    pub cash: i64,
    pub p: f64,
    pub b: f64,
    pub fraction: f64,
    pub base: u64,
    pub ties_rise: bool,
}

impl OracleSetup {
    pub fn config(&self) -> StrategyConfig {
        let mut c = StrategyConfig::new(self.variant, self.mode, Money::from_units(self.cash))
            .with_kelly(ordinal_blsh::sizing::KellyParams {
                p: self.p,
                b: self.b,
                fraction: self.fraction,
            });
        c.martingale_base = self.base;
        if self.ties_rise {
            c.ties = TieRule::NonDecreaseIsRise;
        }
        c
    }
}

/// Fraction of the bankroll staked per entry, as parts per billion.
fn stake_billionths(s: &OracleSetup) -> i128 {
    let q = 1.0 - s.p;
    let edge = (s.b * s.p - q) / s.b;
    if edge <= 0.0 {
        0
    } else {
        (s.fraction * edge * 1e9).round() as i128
    }
}

/// Share of strictly falling triples that are followed by another fall.
pub fn fall_after_two_falls(c: &[i64]) -> Option<f64> {
    let mut falls2 = 0u32;
    let mut falls3 = 0u32;
    for j in 0..c.len().saturating_sub(3) {
        if c[j] > c[j + 1] && c[j + 1] > c[j + 2] {
            falls2 += 1;
            if c[j + 2] > c[j + 3] {
                falls3 += 1;
            }
        }
    }
    (falls2 > 0).then(|| falls3 as f64 / falls2 as f64)
}

#[allow(clippy::needless_range_loop)]
pub fn oracle(c: &[i64], s: &OracleSetup) -> OracleOutcome {
    let n = c.len();
    let ran_as = match s.variant {
        Variant::Fight if fall_after_two_falls(c).is_some_and(|p| p < 0.5) => Variant::Fight,
        Variant::Fight => Variant::Flight,
        v => v,
    };
    let up = |k: usize| c[k] > c[k - 1] || (s.ties_rise && c[k] == c[k - 1]);
    let down = |k: usize| c[k] < c[k - 1];
    let ppb = stake_billionths(s);

    let mut cash = s.cash;
    let mut fills = Vec::new();
    // Focal bar: the next bar that may trigger an entry.
    let mut focal = 1;
    while focal < n {
        if !down(focal) {
            focal += 1;
            continue;
        }
        let entry = focal;
        let price = c[entry];
        let units = match s.mode {
            SizingMode::Single => {
                if price * s.base as i64 > cash {
                    return OracleOutcome::Broke { bar: entry };
                }
                s.base
            }
            SizingMode::Kelly => {
                let u = (cash as i128 * ppb / (price as i128 * 1_000_000_000)) as u64;
                if u == 0 {
                    focal += 1;
                    continue;
                }
                u
            }
        };
        let budget = (cash as i128 * ppb / 1_000_000_000) as i64;
        cash -= price * units as i64;
        fills.push((entry, Action::Buy, units, price, cash));
        let mut held = units;
        let mut spent = 0i64;
        let mut rung = units;

        // Scan for the exit bar.
        let mut exit = None;
        for k in entry + 1..n {
            let sell = match ran_as {
                Variant::Freeze => c[k] > price || (s.ties_rise && c[k] == price),
                Variant::Flight => up(k) || down(k),
                Variant::Fight => {
                    if up(k) {
                        true
                    } else if down(k) {
                        let next = rung * 2;
                        let cost = c[k] * next as i64;
                        if spent + cost <= budget && cost <= cash {
                            cash -= cost;
                            spent += cost;
                            held += next;
                            rung = next;
                            fills.push((k, Action::Buy, next, c[k], cash));
                            false
                        } else {
                            true
                        }
                    } else {
                        false
                    }
                }
            };
            if sell {
                exit = Some(k);
                break;
            }
        }
        match exit {
            Some(k) => {
                cash += c[k] * held as i64;
                fills.push((k, Action::Sell, held, c[k], cash));
                focal = k + 1;
            }
            None => {
                cash += c[n - 1] * held as i64;
                fills.push((n - 1, Action::ForcedLiquidation, held, c[n - 1], cash));
                focal = n;
            }
        }
    }
    OracleOutcome::Ledger {
        fills,
        final_cash: cash,
        ran_as,
    }
}

/// Engine result in the oracle's shape.
pub fn engine(c: &[i64], s: &OracleSetup) -> OracleOutcome {
    use ordinal_blsh::strategy::{run_backtest, StrategyError};
    let series = series_from_units(c);
    match run_backtest(&series, &s.config()) {
        Ok(l) => OracleOutcome::Ledger {
            fills: l
                .events
                .iter()
                .map(|e| (e.index, e.action, e.units, e.price.units(), e.bankroll_after.units()))
                .collect(),
            final_cash: l.final_bankroll.units(),
            ran_as: l.effective_variant,
        },
        Err(StrategyError::InsufficientBankroll { index, .. }) => OracleOutcome::Broke { bar: index },
        Err(e) => panic!("unexpected engine error: {e}"),
    }
}

pub fn series_from_units(c: &[i64]) -> PriceSeries {
    let closes: Vec<Money> = c.iter().map(|&u| Money::from_units(u)).collect();
    PriceSeries::from_closes("T", "2017-09-11T13:30:00Z".parse().unwrap(), &closes).unwrap()
}

/// Series over a small alphabet so ties and repeats are common.
pub fn alphabet_series<R: Rng>(rng: &mut R, alphabet: &[i64], max_len: usize) -> Vec<i64> {
    let len = rng.gen_range(2..=max_len);
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

/// Random walk in price units with a one-cent tick and a floor. `p_fall_again` is the chance a fall
/// follows a fall, which steers the Fight gate.
pub fn random_walk<R: Rng>(rng: &mut R, len: usize, start: i64, p_fall_again: f64) -> Vec<i64> {
    let tick = 100;
    let mut price = start;
    let mut last_fall = false;
    (0..len)
        .map(|i| {
            if i > 0 {
                let r: f64 = rng.gen();
                let p_fall = if last_fall { p_fall_again } else { 0.45 };
                if r < p_fall && price > tick {
                    price -= tick;
                    last_fall = true;
                } else if r < p_fall + 0.1 {
                    last_fall = false;
                } else {
                    price += tick;
                    last_fall = false;
                }
            }
            price
        })
        .collect()
}
