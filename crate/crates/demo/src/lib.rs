//! wasm-bindgen bindings for the browser page in `www/`.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic
//! so native tests can call them without a JS host.

use ordinal_blsh::ordinal::{compute_stats, encode, mep_passes, CiConfig, EncodingParams, Pattern};
use ordinal_blsh::sizing::{expected_value, kelly_fraction, min_bankroll, EvModel, KellyParams};
use ordinal_blsh::strategy::{run_backtest, trajectory, SizingMode, StrategyConfig, Variant};
use ordinal_blsh::{Money, PriceSeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

// Minute bars need a start time; any fixed instant will do.
fn demo_series(closes: &[Money]) -> Result<PriceSeries, String> {
    let t0 = "2017-09-11T13:30:00Z".parse().expect("valid timestamp");
    PriceSeries::from_closes("DEMO", t0, closes).map_err(|e| e.to_string())
}

/// Parses prices separated by commas, whitespace or newlines.
pub fn parse_prices(text: &str) -> Result<Vec<Money>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Money>().map_err(|e| format!("{s:?}: {e}")))
        .collect()
}

/// Ordinal patterns, counts, MEP and transition matrix of a typed-in series.
pub fn analyze_json(prices: &str) -> Result<String, String> {
    let closes = parse_prices(prices)?;
    let series = demo_series(&closes)?;
    let params = EncodingParams::default();
    let patterns = encode(&series, &params).map_err(|e| e.to_string())?;
    let labels: Vec<String> = patterns.iter().map(Pattern::to_string).collect();
    let body = match compute_stats(&series, &params, &CiConfig::default()) {
        Ok(stats) => {
            let ev = EvModel::from_stats(&stats, 1.0).map(|m| expected_value(&m));
            json!({
                "patterns": labels,
                "stats": stats,
                "mep_passes": mep_passes(&stats),
                "expected_value": ev,
                "decline_persistence": stats.decline_persistence(),
            })
        }
        Err(e) => json!({ "patterns": labels, "stats": null, "note": e.to_string() }),
    };
    Ok(body.to_string())
}

#[derive(Serialize)]
struct Run {
    variant: Variant,
    effective_variant: Variant,
    initial: f64,
    final_bankroll: f64,
    round_trips: usize,
    trajectory: Vec<f64>,
}

/// Seeded random walk in cents; about one bar in five is flat.
pub fn random_walk(seed: u64, len: usize, start_price: Money) -> Vec<Money> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tick = Money::from_units(100);
    let mut price = start_price;
    (0..len)
        .map(|i| {
            if i > 0 {
                match rng.gen_range(0..5) {
                    0 | 1 => price += tick,
                    2 | 3 if price > tick => price -= tick,
                    _ => {}
                }
            }
            price
        })
        .collect()
}

/// Runs all three variants on one random walk.
pub fn simulate_json(seed: u64, len: usize, start_price: f64, kelly_mode: bool, checkpoints: usize) -> Result<String, String> {
    if len < 4 {
        return Err("need at least 4 bars".into());
    }
    let start = Money::from_f64_rounded(start_price);
    if !start.is_positive() {
        return Err("start price must be positive".into());
    }
    let closes = random_walk(seed, len, start);
    let series = demo_series(&closes)?;
    let p = compute_stats(&series, &EncodingParams::default(), &CiConfig::default())
        .map_or(0.0, |s| s.win_probability());
    let mode = if kelly_mode { SizingMode::Kelly } else { SizingMode::Single };
    let bankroll = start.times(100);
    let mut runs = Vec::new();
    for variant in Variant::ALL {
        let config = StrategyConfig::new(variant, mode, bankroll).with_kelly(KellyParams::with_probability(p));
        let ledger = run_backtest(&series, &config).map_err(|e| e.to_string())?;
        runs.push(Run {
            variant,
            effective_variant: ledger.effective_variant,
            initial: bankroll.to_f64(),
            final_bankroll: ledger.final_bankroll.to_f64(),
            round_trips: ledger.round_trips(),
            trajectory: trajectory(&ledger, &series, checkpoints.max(1))
                .into_iter()
                .map(|(_, m)| m.to_f64())
                .collect(),
        });
    }
    let prices: Vec<f64> = closes.iter().map(|m| m.to_f64()).collect();
    Ok(json!({ "p": p, "prices": prices, "runs": runs }).to_string())
}

/// Kelly fraction, stake and the bankroll needed to afford one unit.
pub fn kelly_json(p: f64, b: f64, fraction: f64, price: f64) -> Result<String, String> {
    let params = KellyParams { p, b, fraction };
    params.validate().map_err(|e| e.to_string())?;
    let f_star = kelly_fraction(&params).map_err(|e| e.to_string())?;
    let price = Money::from_f64_rounded(price);
    let stake_pct = 100.0 * params.stake_fraction();
    let needed = min_bankroll(price, stake_pct).ok().map(|m| m.format_with(2));
    Ok(json!({ "f_star": f_star, "stake_pct": stake_pct, "min_bankroll": needed }).to_string())
}

#[wasm_bindgen]
pub fn analyze(prices: &str) -> Result<String, JsValue> {
    analyze_json(prices).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(seed: u32, len: usize, start_price: f64, kelly_mode: bool, checkpoints: usize) -> Result<String, JsValue> {
    simulate_json(seed as u64, len, start_price, kelly_mode, checkpoints).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn kelly(p: f64, b: f64, fraction: f64, price: f64) -> Result<String, JsValue> {
    kelly_json(p, b, fraction, price).map_err(|e| JsValue::from_str(&e))
}
