//! Candidate ranking, expected value of the buy-after-decline play, and Kelly sizing.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;
use crate::ordinal::{mep_passes, PatternStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SizingError {
    #[error("odds ratio must be positive, got {0}")]
    NonPositiveOdds(f64),
    #[error("fractional Kelly percentage must be positive, got {0}; stand aside")]
    NonPositiveKelly(f64),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("Kelly multiplier {0} outside (0, 1]")]
    InvalidMultiplier(f64),
}

/// Inputs to the Kelly criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KellyParams {
    /// Win probability.
    pub p: f64,
    /// Gain per unit staked over loss per unit staked.
    #[serde(default = "default_odds")]
    pub b: f64,
    /// Multiplier applied to the full Kelly stake.
    #[serde(default = "default_multiplier")]
    pub fraction: f64,
}

fn default_odds() -> f64 {
    1.0
}

fn default_multiplier() -> f64 {
    1.0 / 3.0
}

impl KellyParams {
    /// Even odds and a one-third Kelly multiplier.
    pub fn with_probability(p: f64) -> Self {
        KellyParams {
            p,
            b: default_odds(),
            fraction: default_multiplier(),
        }
    }

    pub fn validate(&self) -> Result<(), SizingError> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(SizingError::InvalidProbability(self.p));
        }
        if self.b.is_nan() || self.b <= 0.0 {
            return Err(SizingError::NonPositiveOdds(self.b));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(SizingError::InvalidMultiplier(self.fraction));
        }
        Ok(())
    }

    /// Share of bankroll to commit: `fraction * f*`, or zero for a losing play.
    pub fn stake_fraction(&self) -> f64 {
        match kelly_fraction(self) {
            Ok(f) if f > 0.0 => self.fraction * f,
            _ => 0.0,
        }
    }

    /// [`stake_fraction`](Self::stake_fraction) in parts per billion, rounded.
    /// All money arithmetic on the stake goes through this integer.
    pub fn stake_ppb(&self) -> i128 {
        (self.stake_fraction() * PPB as f64).round() as i128
    }
}

const PPB: i128 = 1_000_000_000;

/// `f* = (b p - q) / b`. Negative values mean the play loses on average.
pub fn kelly_fraction(params: &KellyParams) -> Result<f64, SizingError> {
    if params.b.is_nan() || params.b <= 0.0 {
        return Err(SizingError::NonPositiveOdds(params.b));
    }
    let q = 1.0 - params.p;
    Ok((params.b * params.p - q) / params.b)
}

/// Smallest bankroll (to 0.0001) whose `fractional_kelly_pct` share covers one unit at `price`.
pub fn min_bankroll(price: Money, fractional_kelly_pct: f64) -> Result<Money, SizingError> {
    if fractional_kelly_pct.is_nan() || fractional_kelly_pct <= 0.0 {
        return Err(SizingError::NonPositiveKelly(fractional_kelly_pct));
    }
    // Percentage in millionths so the division stays in integers.
    let pct_micro = (fractional_kelly_pct * 1e6).round() as i128;
    if pct_micro == 0 {
        return Err(SizingError::NonPositiveKelly(fractional_kelly_pct));
    }
    let numer = 100 * i128::from(price.units()) * 1_000_000;
    let units = (numer + pct_micro - 1).div_euclid(pct_micro);
    Ok(Money::from_units(units as i64))
}

/// Whole units affordable with the Kelly stake of `bankroll`; zero means stand aside.
pub fn position_size(bankroll: Money, price: Money, params: &KellyParams) -> u64 {
    if !price.is_positive() || !bankroll.is_positive() {
        return 0;
    }
    let stake = params.stake_ppb();
    if stake <= 0 {
        return 0;
    }
    let n = i128::from(bankroll.units()) * stake / (i128::from(price.units()) * PPB);
    n.max(0) as u64
}

/// Kelly stake of `bankroll`, rounded down to 0.0001.
pub fn kelly_budget(bankroll: Money, params: &KellyParams) -> Money {
    let stake = params.stake_ppb();
    if stake <= 0 || !bankroll.is_positive() {
        return Money::ZERO;
    }
    Money::from_units((i128::from(bankroll.units()) * stake / PPB) as i64)
}

/// Payoff model for one decline-triggered buy, in units of the average step `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvModel {
    /// Share of `{1,0,2}` among decline windows (pays 1.5 delta).
    pub p3: f64,
    /// Share of `{2,0,1}` (pays 0.5 delta).
    pub p5: f64,
    /// Share of `{2,1,0}` (loses delta).
    pub p6: f64,
    pub delta: f64,
}

impl EvModel {
    pub fn from_stats(stats: &PatternStats, delta: f64) -> Option<EvModel> {
        let (n3, n5, n6) = stats.decision_counts();
        let total = (n3 + n5 + n6) as f64;
        (total > 0.0).then(|| EvModel {
            p3: n3 as f64 / total,
            p5: n5 as f64 / total,
            p6: n6 as f64 / total,
            delta,
        })
    }
}

pub fn expected_value(model: &EvModel) -> f64 {
    model.p3 * 1.5 * model.delta + model.p5 * 0.5 * model.delta - model.p6 * model.delta
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCandidate {
    pub symbol: String,
    pub stats: PatternStats,
    pub ci_low: f64,
}

/// Top `k` symbols passing the entry-point gate, by lower band edge, then
/// estimate (both descending), then symbol.
pub fn rank_candidates(all_stats: &BTreeMap<String, PatternStats>, k: usize) -> Vec<RankedCandidate> {
    let mut eligible: Vec<RankedCandidate> = all_stats
        .iter()
        .filter(|(_, s)| mep_passes(s))
        .map(|(symbol, s)| RankedCandidate {
            symbol: symbol.clone(),
            stats: s.clone(),
            ci_low: s.mep_ci_low,
        })
        .collect();
    eligible.sort_by(compare_candidates);
    eligible.truncate(k);
    eligible
}

fn compare_candidates(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    b.ci_low
        .total_cmp(&a.ci_low)
        .then_with(|| b.stats.mep.total_cmp(&a.stats.mep))
        .then_with(|| a.symbol.cmp(&b.symbol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordinal::{compute_stats, CiConfig, EncodingParams};
    use crate::series::PriceSeries;
    use proptest::prelude::*;

    fn money(s: &str) -> Money {
        s.parse().unwrap()
    }

    fn kelly(p: f64, b: f64) -> KellyParams {
        KellyParams { p, b, fraction: 1.0 }
    }

    #[test]
    fn kelly_examples() {
        assert_eq!(kelly_fraction(&kelly(0.5, 1.0)).unwrap(), 0.0);
        assert_eq!(kelly_fraction(&kelly(1.0, 1.0)).unwrap(), 1.0);
        assert!((kelly_fraction(&kelly(0.63, 1.0)).unwrap() - 0.26).abs() < 1e-12);
        assert_eq!(
            kelly_fraction(&kelly(0.6, 0.0)),
            Err(SizingError::NonPositiveOdds(0.0))
        );
        assert!((kelly_fraction(&kelly(0.6, 2.0)).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(KellyParams::with_probability(0.7).validate().is_ok());
        assert!(KellyParams::with_probability(1.2).validate().is_err());
        assert!(KellyParams { fraction: 0.0, ..KellyParams::with_probability(0.7) }
            .validate()
            .is_err());
    }

    #[test]
    fn min_bankroll_examples() {
        let br = min_bankroll(money("11.23"), 17.0).unwrap();
        assert_eq!(br.format_with(2), "66.06");
        assert!((br.to_f64() - 66.0).abs() < 0.10);
        assert_eq!(min_bankroll(money("1.00"), 100.0).unwrap(), money("1"));
        assert_eq!(min_bankroll(money("20.00"), 10.0).unwrap(), money("200"));
        assert_eq!(
            min_bankroll(money("20.00"), 0.0),
            Err(SizingError::NonPositiveKelly(0.0))
        );
        assert!(min_bankroll(money("20.00"), -3.0).is_err());
    }

    #[test]
    fn position_size_examples() {
        let params = KellyParams { p: 0.585, b: 1.0, fraction: 1.0 };
        assert!((params.stake_fraction() - 0.17).abs() < 1e-12);
        assert_eq!(position_size(money("1345"), money("13.45"), &params), 17);
        assert_eq!(position_size(money("1345"), money("13.45"), &kelly(0.4, 1.0)), 0);
        assert_eq!(position_size(money("9"), money("10"), &kelly(1.0, 1.0)), 0);
        assert_eq!(position_size(money("10"), money("10"), &kelly(1.0, 1.0)), 1);
    }

    #[test]
    fn budget_rounds_down() {
        let params = KellyParams { p: 1.0, b: 1.0, fraction: 1.0 / 3.0 };
        assert_eq!(kelly_budget(money("100"), &params), money("33.3333"));
        assert_eq!(kelly_budget(money("100"), &kelly(0.3, 1.0)), Money::ZERO);
    }

    #[test]
    fn ev_examples() {
        let ev = |p3, p5, p6| expected_value(&EvModel { p3, p5, p6, delta: 1.0 });
        assert_eq!(ev(0.0, 1.0, 0.0), 0.5);
        assert_eq!(ev(0.0, 0.0, 1.0), -1.0);
        assert!((ev(0.2, 0.5, 0.3) - 0.25).abs() < 1e-12);
        // Passing the 51% gate does not guarantee a positive expectation.
        assert!((ev(0.0, 0.51, 0.49) + 0.235).abs() < 1e-12);
    }

    fn stats_with(mep: f64, ci_low: f64) -> PatternStats {
        let closes: Vec<Money> = [5, 4, 3].iter().map(|&c| Money::from_whole(c)).collect();
        let series =
            PriceSeries::from_closes("S", "2017-09-11T13:30:00Z".parse().unwrap(), &closes).unwrap();
        let mut stats = compute_stats(&series, &EncodingParams::default(), &CiConfig::default()).unwrap();
        stats.mep = mep;
        stats.mep_ci_low = ci_low;
        stats.mep_ci_high = mep + (mep - ci_low);
        stats
    }

    #[test]
    fn ranking_table() {
        let rows = [
            ("WU", 70.90, 69.63),
            ("F", 72.14, 70.97),
            ("NWS", 87.80, 86.78),
            ("CHK", 73.71, 72.75),
            ("HPE", 71.56, 70.16),
            ("AES", 76.01, 74.80),
            ("NWSA", 74.54, 73.23),
            ("LOW", 50.5, 49.0),
        ];
        let all: BTreeMap<String, PatternStats> = rows
            .iter()
            .map(|&(s, m, l)| (s.to_string(), stats_with(m, l)))
            .collect();
        let ranked: Vec<String> = rank_candidates(&all, 7).into_iter().map(|c| c.symbol).collect();
        assert_eq!(ranked, ["NWS", "AES", "NWSA", "CHK", "F", "HPE", "WU"]);
        assert_eq!(rank_candidates(&all, 1)[0].symbol, "NWS");
    }

    #[test]
    fn ranking_underfull_and_ties() {
        let mut all = BTreeMap::new();
        all.insert("ONLY".to_string(), stats_with(60.0, 55.0));
        all.insert("FAIL".to_string(), stats_with(40.0, 35.0));
        assert_eq!(rank_candidates(&all, 7).len(), 1);

        let mut tied = BTreeMap::new();
        tied.insert("BBB".to_string(), stats_with(60.0, 55.0));
        tied.insert("AAA".to_string(), stats_with(60.0, 55.0));
        tied.insert("CCC".to_string(), stats_with(61.0, 55.0));
        let order: Vec<String> = rank_candidates(&tied, 3).into_iter().map(|c| c.symbol).collect();
        assert_eq!(order, ["CCC", "AAA", "BBB"]);
    }

    proptest! {
        #[test]
        fn even_odds_kelly_is_two_p_minus_one(p in 0.0f64..=1.0) {
            let f = kelly_fraction(&kelly(p, 1.0)).unwrap();
            prop_assert!((f - (2.0 * p - 1.0)).abs() < 1e-15);
        }

        #[test]
        fn ev_linear_in_delta(p3 in 0.0f64..1.0, split in 0.0f64..1.0, delta in 0.0f64..10.0) {
            let p5 = (1.0 - p3) * split;
            let p6 = 1.0 - p3 - p5;
            let unit = expected_value(&EvModel { p3, p5, p6, delta: 1.0 });
            let scaled = expected_value(&EvModel { p3, p5, p6, delta });
            prop_assert!((scaled - unit * delta).abs() < 1e-9);
            prop_assert_eq!(unit > 1e-12, 1.5 * p3 + 0.5 * p5 > p6 + 1e-12);
        }

        #[test]
        fn min_bankroll_is_smallest_sufficient(units in 1i64..10_000_000, pct in 0.5f64..100.0) {
            let price = Money::from_units(units);
            let br = min_bankroll(price, pct).unwrap();
            let pct_micro = (pct * 1e6).round() as i128;
            let covers = |m: Money| i128::from(m.units()) * pct_micro >= 100 * 1_000_000 * i128::from(units);
            prop_assert!(covers(br));
            prop_assert!(!covers(Money::from_units(br.units() - 1)));
        }

        #[test]
        fn position_size_monotone(
            bankroll in 0i64..100_000_000,
            extra in 0i64..10_000_000,
            price in 1i64..1_000_000,
            p in 0.0f64..=1.0,
            p_extra in 0.0f64..0.5,
        ) {
            let params = KellyParams::with_probability(p);
            let richer = KellyParams::with_probability((p + p_extra).min(1.0));
            let base = position_size(Money::from_units(bankroll), Money::from_units(price), &params);
            prop_assert!(position_size(Money::from_units(bankroll + extra), Money::from_units(price), &params) >= base);
            prop_assert!(position_size(Money::from_units(bankroll), Money::from_units(price), &richer) >= base);
            prop_assert!(position_size(Money::from_units(bankroll), Money::from_units(price + extra), &params) <= base);
            // Never spends more than the stake.
            let stake = Money::from_units(price).times(base);
            prop_assert!(stake <= kelly_budget(Money::from_units(bankroll), &params));
        }
    }
}
