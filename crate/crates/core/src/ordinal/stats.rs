use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

use super::pattern::{encode_values, EncodingParams, Pattern};
use super::OrdinalError;
use crate::money::Money;
use crate::series::PriceSeries;

/// Minimum entry-point percentage for a symbol to be traded.
pub const MEP_THRESHOLD: f64 = 51.0;

/// How the confidence band around the entry-point percentage is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CiMethod {
    /// One block per UTC calendar day of the window's last bar.
    TradingDays,
    /// Consecutive runs of `size` windows.
    FixedBlocks { size: usize },
    /// Binomial normal approximation on the pooled counts.
    Wald,
}

impl FromStr for CiMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "days" | "trading_days" | "block" | "blocks" => Ok(CiMethod::TradingDays),
            "wald" => Ok(CiMethod::Wald),
            _ => {
                let size = lower
                    .strip_prefix("fixed:")
                    .or_else(|| lower.strip_prefix("fixed_blocks:"))
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n > 0)
                    .ok_or_else(|| format!("unknown CI method `{s}`"))?;
                Ok(CiMethod::FixedBlocks { size })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiConfig {
    pub method: CiMethod,
    /// Normal quantile; 1.96 for a 95% band.
    pub z: f64,
}

impl Default for CiConfig {
    fn default() -> Self {
        CiConfig {
            method: CiMethod::TradingDays,
            z: 1.96,
        }
    }
}

impl CiConfig {
    pub fn with_method(method: CiMethod) -> Self {
        CiConfig {
            method,
            ..CiConfig::default()
        }
    }
}

/// Counts of consecutive pattern pairs. Rows without observations have no
/// defined probabilities and are reported as `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMatrix {
    counts: Vec<Vec<u64>>,
}

impl TransitionMatrix {
    pub fn from_sequence(patterns: &[Pattern], pattern_count: usize) -> Self {
        let mut counts = vec![vec![0u64; pattern_count]; pattern_count];
        for pair in patterns.windows(2) {
            counts[pair[0].index()][pair[1].index()] += 1;
        }
        TransitionMatrix { counts }
    }

    pub fn count(&self, from: Pattern, to: Pattern) -> u64 {
        self.counts[from.index()][to.index()]
    }

    pub fn row_total(&self, from: Pattern) -> u64 {
        self.counts[from.index()].iter().sum()
    }

    pub fn probability(&self, from: Pattern, to: Pattern) -> Option<f64> {
        let total = self.row_total(from);
        (total > 0).then(|| self.count(from, to) as f64 / total as f64)
    }

    pub fn row(&self, from: Pattern) -> Option<Vec<f64>> {
        let total = self.row_total(from);
        (total > 0).then(|| {
            self.counts[from.index()]
                .iter()
                .map(|&c| c as f64 / total as f64)
                .collect()
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    fn rows(&self) -> Vec<Option<Vec<f64>>> {
        (0..self.counts.len())
            .map(|i| {
                let total: u64 = self.counts[i].iter().sum();
                (total > 0).then(|| {
                    self.counts[i]
                        .iter()
                        .map(|&c| c as f64 / total as f64)
                        .collect()
                })
            })
            .collect()
    }
}

impl Serialize for TransitionMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

/// Pattern statistics for one series.
///
/// `mep` is the share (in percent) of decline windows that a buy-then-sell
/// round trip would close at a profit: windows `{1,0,2}` and `{2,0,1}` win,
/// `{2,1,0}` loses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternStats {
    /// Occurrences per pattern, in pattern-index order.
    pub counts: Vec<u64>,
    pub total_windows: usize,
    pub mep: f64,
    #[serde(rename = "sd")]
    pub mep_sd: f64,
    #[serde(rename = "ci_low")]
    pub mep_ci_low: f64,
    #[serde(rename = "ci_high")]
    pub mep_ci_high: f64,
    /// Number of blocks (or observations, for Wald) behind the band.
    pub ci_samples: usize,
    /// Mean of |close[t+1] - close[t]| / close[t], as a fraction.
    pub avg_delta_pct: f64,
    #[serde(rename = "transition_matrix")]
    pub transitions: TransitionMatrix,
}

impl PatternStats {
    pub fn count(&self, p: Pattern) -> u64 {
        self.counts[p.index()]
    }

    /// Counts of `{1,0,2}`, `{2,0,1}` and `{2,1,0}`.
    pub fn decision_counts(&self) -> (u64, u64, u64) {
        (
            self.count(Pattern::FALL_RISE_ABOVE),
            self.count(Pattern::FALL_RISE_BELOW),
            self.count(Pattern::FALL_FALL),
        )
    }

    /// Empirical probability that a buy after a decline is sold higher.
    pub fn win_probability(&self) -> f64 {
        self.mep / 100.0
    }

    /// P(`{2,1,0}` followed by `{2,1,0}`), if `{2,1,0}` was ever followed by anything.
    pub fn decline_persistence(&self) -> Option<f64> {
        self.transitions
            .probability(Pattern::FALL_FALL, Pattern::FALL_FALL)
    }
}

pub fn mep_passes(stats: &PatternStats) -> bool {
    stats.mep >= MEP_THRESHOLD
}

/// Probability of `k` consecutive decline-to-decline transitions in a
/// first-order chain with self-transition probability `p`.
pub fn chain_power(p: f64, k: u32) -> f64 {
    p.powi(k as i32)
}

pub fn pattern_counts(patterns: &[Pattern], pattern_count: usize) -> Vec<u64> {
    let mut counts = vec![0u64; pattern_count];
    for p in patterns {
        counts[p.index()] += 1;
    }
    counts
}

/// P(`{2,1,0}` to `{2,1,0}`) for raw values at `dim = 3, tau = 1`.
pub fn decline_persistence<T: PartialOrd>(values: &[T]) -> Option<f64> {
    let patterns = encode_values(values, &EncodingParams::default()).ok()?;
    TransitionMatrix::from_sequence(&patterns, 6).probability(Pattern::FALL_FALL, Pattern::FALL_FALL)
}

fn is_win(p: Pattern) -> bool {
    p == Pattern::FALL_RISE_ABOVE || p == Pattern::FALL_RISE_BELOW
}

fn is_decision(p: Pattern) -> bool {
    is_win(p) || p == Pattern::FALL_FALL
}

pub fn compute_stats(
    series: &PriceSeries,
    params: &EncodingParams,
    ci: &CiConfig,
) -> Result<PatternStats, OrdinalError> {
    params.validate()?;
    if params.dim != 3 {
        return Err(OrdinalError::UnsupportedDimension(params.dim));
    }
    let closes = series.closes();
    let patterns = encode_values(&closes, params)?;
    let counts = pattern_counts(&patterns, params.pattern_count());
    let transitions = TransitionMatrix::from_sequence(&patterns, params.pattern_count());

    let wins = counts[Pattern::FALL_RISE_ABOVE.index()] + counts[Pattern::FALL_RISE_BELOW.index()];
    let decisions = wins + counts[Pattern::FALL_FALL.index()];
    if decisions == 0 {
        return Err(OrdinalError::NoDecisionPatterns);
    }
    let mep = 100.0 * wins as f64 / decisions as f64;

    let (sd, samples) = match ci.method {
        CiMethod::Wald => {
            let p = mep / 100.0;
            (100.0 * (p * (1.0 - p)).sqrt(), decisions as usize)
        }
        CiMethod::TradingDays => {
            let last = params.span() - 1;
            let bars = series.bars();
            block_dispersion(&patterns, |k| {
                bars[k + last].timestamp.date_naive().to_string()
            })
        }
        CiMethod::FixedBlocks { size } => {
            let size = size.max(1);
            block_dispersion(&patterns, |k| (k / size).to_string())
        }
    };
    let half = if samples > 0 {
        ci.z * sd / (samples as f64).sqrt()
    } else {
        0.0
    };

    Ok(PatternStats {
        counts,
        total_windows: patterns.len(),
        mep,
        mep_sd: sd,
        mep_ci_low: (mep - half).clamp(0.0, 100.0),
        mep_ci_high: (mep + half).clamp(0.0, 100.0),
        ci_samples: samples,
        avg_delta_pct: average_relative_change(&closes),
        transitions,
    })
}

/// Sample standard deviation of per-block entry-point percentages. Blocks
/// without a decline window are skipped. Fewer than two blocks gives zero.
fn block_dispersion<K: PartialEq>(patterns: &[Pattern], key: impl Fn(usize) -> K) -> (f64, usize) {
    let mut block_meps = Vec::new();
    let mut current: Option<K> = None;
    let (mut wins, mut total) = (0u64, 0u64);
    for (k, &p) in patterns.iter().enumerate() {
        let this = key(k);
        if current.as_ref() != Some(&this) {
            if total > 0 {
                block_meps.push(100.0 * wins as f64 / total as f64);
            }
            current = Some(this);
            wins = 0;
            total = 0;
        }
        if is_decision(p) {
            total += 1;
            if is_win(p) {
                wins += 1;
            }
        }
    }
    if total > 0 {
        block_meps.push(100.0 * wins as f64 / total as f64);
    }
    let n = block_meps.len();
    if n < 2 {
        return (0.0, n);
    }
    let mean = block_meps.iter().sum::<f64>() / n as f64;
    let var = block_meps.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var.sqrt(), n)
}

fn average_relative_change(closes: &[Money]) -> f64 {
    if closes.len() < 2 {
        return 0.0;
    }
    let sum: f64 = closes
        .windows(2)
        .map(|w| (w[1].units() - w[0].units()).abs() as f64 / w[0].units() as f64)
        .sum();
    sum / (closes.len() - 1) as f64
}
