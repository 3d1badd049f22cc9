//! Pipeline commands behind the CLI: scan, rank, backtest and report.
//!
//! Every command takes a resolved [`RunManifest`], writes its files under the
//! manifest's output directory, and returns a structured result whose
//! [`exit_code`](ScanReport::exit_code) follows the CLI contract: 0 when every
//! symbol succeeded, 1 on partial failure. Manifest problems surface as
//! [`ReportError::Manifest`] (exit 2) before any work starts.

mod manifest;
mod output;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::money::Money;
use crate::ordinal::{compute_stats, mep_passes, PatternStats};
use crate::series::{gaps_report, load_series_detailed, LoadSummary, PriceSeries};
use crate::sizing::{
    expected_value, kelly_fraction, min_bankroll, rank_candidates, EvModel, KellyParams,
    RankedCandidate,
};
use crate::strategy::{
    read_ledger_csv, run_backtest, summarize, trajectory, write_ledger_csv, write_trajectory_csv,
    Action, SizingMode, StrategyConfig, Variant,
};

pub use manifest::{BankrollSpec, Overrides, RunManifest};
pub use output::{pretty_table, write_atomic};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ReportError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Manifest(_) => 2,
            ReportError::Io { .. } => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub symbol: String,
    pub error: String,
}

fn exit_code_for(failures: &[Failure]) -> i32 {
    if failures.is_empty() {
        0
    } else {
        1
    }
}

/// Per-symbol output of `scan`: pattern statistics plus the selection and sizing checks.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRecord {
    pub symbol: String,
    pub bars: usize,
    pub gaps: usize,
    pub load: LoadSummary,
    pub stats: PatternStats,
    pub mep_passes: bool,
    /// Expected value of one play in units of the average step.
    pub expected_value: f64,
    pub ev_positive: bool,
    pub kelly_f_star: f64,
    /// Share of bankroll (percent) after the Kelly multiplier.
    pub stake_pct: f64,
    /// Bankroll needed to trade one unit at the first close; absent when the
    /// stake is not positive.
    pub min_bankroll: Option<Money>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ScanReport {
    pub records: Vec<ScanRecord>,
    pub failures: Vec<Failure>,
}

impl ScanReport {
    pub fn exit_code(&self) -> i32 {
        exit_code_for(&self.failures)
    }

    pub fn stats_by_symbol(&self) -> BTreeMap<String, PatternStats> {
        self.records
            .iter()
            .map(|r| (r.symbol.clone(), r.stats.clone()))
            .collect()
    }
}

fn load(manifest: &RunManifest, symbol: &str) -> Result<(PriceSeries, LoadSummary), String> {
    load_series_detailed(
        manifest.input_path(symbol),
        symbol,
        manifest.format,
        manifest.embedding.span(),
    )
    .map_err(|e| e.to_string())
}

fn kelly_for(manifest: &RunManifest, stats: Option<&PatternStats>) -> KellyParams {
    KellyParams {
        p: stats.map_or(0.0, |s| s.win_probability().clamp(0.0, 1.0)),
        b: manifest.kelly_b,
        fraction: manifest.kelly_fraction,
    }
}

fn scan_symbol(manifest: &RunManifest, symbol: &str) -> Result<ScanRecord, String> {
    let (series, summary) = load(manifest, symbol)?;
    let stats = compute_stats(&series, &manifest.embedding, &manifest.ci).map_err(|e| e.to_string())?;
    let ev = EvModel::from_stats(&stats, 1.0).map_or(0.0, |m| expected_value(&m));
    let kelly = kelly_for(manifest, Some(&stats));
    let f_star = kelly_fraction(&kelly).map_err(|e| e.to_string())?;
    let stake_pct = 100.0 * kelly.stake_fraction();
    let first = series.first_close().expect("validated length");
    Ok(ScanRecord {
        symbol: symbol.to_string(),
        bars: series.len(),
        gaps: gaps_report(&series).len(),
        load: summary,
        mep_passes: mep_passes(&stats),
        expected_value: ev,
        ev_positive: ev > 0.0,
        kelly_f_star: f_star,
        stake_pct,
        min_bankroll: min_bankroll(first, stake_pct).ok(),
        stats,
    })
}

fn scan_all(manifest: &RunManifest) -> Result<ScanReport, ReportError> {
    manifest.check_inputs()?;
    let mut report = ScanReport::default();
    for symbol in &manifest.symbols {
        match scan_symbol(manifest, symbol) {
            Ok(r) => report.records.push(r),
            Err(error) => report.failures.push(Failure {
                symbol: symbol.clone(),
                error,
            }),
        }
    }
    Ok(report)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Computes pattern statistics for every symbol and writes `scan.json`.
pub fn cmd_scan(manifest: &RunManifest) -> Result<ScanReport, ReportError> {
    let report = scan_all(manifest)?;
    let path = manifest.out_dir.join("scan.json");
    let json = serde_json::to_string_pretty(&report).expect("serializable");
    write_atomic(&path, json.as_bytes()).map_err(io_err(&path))?;
    Ok(report)
}

#[derive(Debug, Clone, Default)]
pub struct RankReport {
    pub table: Vec<RankedCandidate>,
    pub failures: Vec<Failure>,
    pub warnings: Vec<String>,
}

impl RankReport {
    pub fn exit_code(&self) -> i32 {
        exit_code_for(&self.failures)
    }
}

/// `symbol,mep,sd,ci_low,ci_high` rows, two decimals.
pub fn rank_csv(table: &[RankedCandidate]) -> String {
    let mut out = String::from("symbol,mep,sd,ci_low,ci_high\n");
    for c in table {
        let s = &c.stats;
        let _ = writeln!(
            out,
            "{},{:.2},{:.2},{:.2},{:.2}",
            c.symbol, s.mep, s.mep_sd, s.mep_ci_low, s.mep_ci_high
        );
    }
    out
}

/// Ranks precomputed statistics and writes `rank.csv`.
pub fn rank_from_stats(
    stats: &BTreeMap<String, PatternStats>,
    k: usize,
    out_dir: &Path,
) -> Result<RankReport, ReportError> {
    let table = rank_candidates(stats, k);
    let mut warnings = Vec::new();
    if table.is_empty() {
        warnings.push(format!(
            "no symbol reaches the {} entry-point threshold",
            crate::ordinal::MEP_THRESHOLD
        ));
    }
    let path = out_dir.join("rank.csv");
    write_atomic(&path, rank_csv(&table).as_bytes()).map_err(io_err(&path))?;
    Ok(RankReport {
        table,
        failures: Vec::new(),
        warnings,
    })
}

/// Scans every symbol, then writes the top `manifest.k` to `rank.csv`.
pub fn cmd_rank(manifest: &RunManifest) -> Result<RankReport, ReportError> {
    let scan = scan_all(manifest)?;
    let mut report = rank_from_stats(&scan.stats_by_symbol(), manifest.k, &manifest.out_dir)?;
    report.failures = scan.failures;
    Ok(report)
}

/// First, last and highest close of a series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PriceExtremes {
    pub symbol: String,
    pub first: Money,
    pub last: Money,
    pub maximum: Money,
}

impl PriceExtremes {
    pub fn of(series: &PriceSeries) -> PriceExtremes {
        let closes = series.closes();
        PriceExtremes {
            symbol: series.symbol().to_string(),
            first: closes[0],
            last: closes[closes.len() - 1],
            maximum: closes.iter().copied().max().expect("non-empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub symbol: String,
    pub variant: Variant,
    pub mode: SizingMode,
    pub effective_variant: Variant,
    pub initial: Money,
    pub final_bankroll: Money,
    pub gain: Money,
    pub gain_pct: f64,
    pub round_trips: usize,
    pub forced_pnl: Money,
}

const SUMMARY_HEADER: &str =
    "symbol,variant,mode,effective_variant,initial,final,gain,gain_pct,round_trips,forced_pnl";

impl SummaryRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.4},{},{}",
            self.symbol,
            self.variant,
            self.mode,
            self.effective_variant,
            self.initial,
            self.final_bankroll,
            self.gain,
            self.gain_pct,
            self.round_trips,
            self.forced_pnl
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRun {
    pub symbol: String,
    pub variant: Variant,
    pub mode: SizingMode,
    pub points: Vec<(usize, Money)>,
}

#[derive(Debug, Clone, Default)]
pub struct BacktestReport {
    pub summaries: Vec<SummaryRow>,
    pub extremes: Vec<PriceExtremes>,
    pub trajectories: Vec<TrajectoryRun>,
    pub failures: Vec<Failure>,
}

impl BacktestReport {
    pub fn exit_code(&self) -> i32 {
        exit_code_for(&self.failures)
    }
}

pub fn run_file_stem(variant: Variant, mode: SizingMode) -> String {
    format!("{variant}.{mode}")
}

pub fn ledger_path(out_dir: &Path, symbol: &str, variant: Variant, mode: SizingMode) -> PathBuf {
    out_dir
        .join(symbol)
        .join(format!("{}.ledger.csv", run_file_stem(variant, mode)))
}

pub fn trajectory_path(out_dir: &Path, symbol: &str, variant: Variant, mode: SizingMode) -> PathBuf {
    out_dir
        .join(symbol)
        .join(format!("{}.trajectory.csv", run_file_stem(variant, mode)))
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

pub fn extremes_csv(rows: &[PriceExtremes]) -> String {
    let mut out = String::from("symbol,first,last,maximum\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.symbol, r.first, r.last, r.maximum);
    }
    out
}

/// Runs every symbol x variant x mode combination and writes ledgers,
/// trajectories, `summary.csv` and `extremes.csv`.
pub fn cmd_backtest(manifest: &RunManifest) -> Result<BacktestReport, ReportError> {
    manifest.check_inputs()?;
    let out = &manifest.out_dir;
    let mut report = BacktestReport::default();
    for symbol in &manifest.symbols {
        let series = match load(manifest, symbol) {
            Ok((s, _)) => s,
            Err(error) => {
                report.failures.push(Failure {
                    symbol: symbol.clone(),
                    error,
                });
                continue;
            }
        };
        report.extremes.push(PriceExtremes::of(&series));
        // A series without decline windows has no edge: p = 0 means stand aside.
        let stats = compute_stats(&series, &manifest.embedding, &manifest.ci).ok();
        let kelly = kelly_for(manifest, stats.as_ref());
        let initial = manifest
            .bankroll
            .resolve(series.first_close().expect("validated length"));
        for &mode in &manifest.modes {
            for &variant in &manifest.variants {
                let config = StrategyConfig {
                    variant,
                    mode,
                    initial_bankroll: initial,
                    kelly: Some(kelly),
                    martingale_base: manifest.martingale_base,
                    ties: manifest.ties,
                    fee_per_fill: manifest.fee_per_fill,
                };
                let ledger = match run_backtest(&series, &config) {
                    Ok(l) => l,
                    Err(e) => {
                        report.failures.push(Failure {
                            symbol: symbol.clone(),
                            error: format!("{variant}/{mode}: {e}"),
                        });
                        continue;
                    }
                };
                let points = trajectory(&ledger, &series, manifest.checkpoints);

                let mut buf = Vec::new();
                write_ledger_csv(&ledger, &mut buf).expect("in-memory write");
                let path = ledger_path(out, symbol, variant, mode);
                write_atomic(&path, &buf).map_err(io_err(&path))?;

                let mut buf = Vec::new();
                write_trajectory_csv(&points, &mut buf).expect("in-memory write");
                let path = trajectory_path(out, symbol, variant, mode);
                write_atomic(&path, &buf).map_err(io_err(&path))?;

                let s = summarize(&ledger);
                report.summaries.push(SummaryRow {
                    symbol: symbol.clone(),
                    variant,
                    mode,
                    effective_variant: ledger.effective_variant,
                    initial: s.initial,
                    final_bankroll: s.final_bankroll,
                    gain: s.gain,
                    gain_pct: s.gain_pct,
                    round_trips: s.round_trips,
                    forced_pnl: s.forced_pnl,
                });
                report.trajectories.push(TrajectoryRun {
                    symbol: symbol.clone(),
                    variant,
                    mode,
                    points,
                });
            }
        }
    }
    let path = out.join("summary.csv");
    write_atomic(&path, summary_csv(&report.summaries).as_bytes()).map_err(io_err(&path))?;
    let path = out.join("extremes.csv");
    write_atomic(&path, extremes_csv(&report.extremes).as_bytes()).map_err(io_err(&path))?;
    Ok(report)
}

/// Result of re-reading a backtest output directory.
#[derive(Debug, Clone, Default)]
pub struct ReportCheck {
    pub rows: Vec<SummaryRow>,
    /// Summary cells that disagree with their ledger.
    pub mismatches: Vec<String>,
}

impl ReportCheck {
    pub fn exit_code(&self) -> i32 {
        if self.mismatches.is_empty() {
            0
        } else {
            1
        }
    }

    /// One `symbol,initial,gain,gain_pct` table per variant and mode.
    pub fn gain_tables(&self) -> Vec<(String, String)> {
        let mut groups: BTreeMap<(SizingMode, Variant), Vec<&SummaryRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry((r.mode, r.variant)).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((mode, variant), rows)| {
                let mut csv = String::from("symbol,initial,gain,gain_pct\n");
                for r in &rows {
                    let sign = if r.gain.is_negative() { "" } else { "+" };
                    let _ = writeln!(
                        csv,
                        "{},{},{sign}{},{:.2}",
                        r.symbol,
                        r.initial.format_with(2),
                        r.gain.format_with(2),
                        r.gain_pct
                    );
                }
                let mean = rows.iter().map(|r| r.gain_pct).sum::<f64>() / rows.len() as f64;
                (format!("{variant} / {mode} (mean gain {mean:.2}%)"), csv)
            })
            .collect()
    }
}

fn parse_summary(text: &str) -> Result<Vec<SummaryRow>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let get = |i: usize| rec.get(i).ok_or_else(|| format!("short summary row: {rec:?}"));
        let money = |i: usize| -> Result<Money, String> { get(i)?.parse().map_err(|e| format!("{e}")) };
        rows.push(SummaryRow {
            symbol: get(0)?.to_string(),
            variant: get(1)?.parse()?,
            mode: get(2)?.parse()?,
            effective_variant: get(3)?.parse()?,
            initial: money(4)?,
            final_bankroll: money(5)?,
            gain: money(6)?,
            gain_pct: get(7)?.parse().map_err(|e| format!("gain_pct: {e}"))?,
            round_trips: get(8)?.parse().map_err(|e| format!("round_trips: {e}"))?,
            forced_pnl: money(9)?,
        });
    }
    Ok(rows)
}

/// Reads `summary.csv` and every ledger it names, recomputing each summary
/// figure from the ledger.
pub fn cmd_report(out_dir: &Path) -> Result<ReportCheck, ReportError> {
    let summary_path = out_dir.join("summary.csv");
    let text = fs::read_to_string(&summary_path).map_err(|e| {
        ReportError::Manifest(format!("cannot read {}: {e}", summary_path.display()))
    })?;
    let rows = parse_summary(&text).map_err(ReportError::Manifest)?;
    let mut mismatches = Vec::new();
    for row in &rows {
        let path = ledger_path(out_dir, &row.symbol, row.variant, row.mode);
        let tag = format!("{}/{}/{}", row.symbol, row.variant, row.mode);
        let events = match fs::File::open(&path)
            .map_err(|e| e.to_string())
            .and_then(|f| read_ledger_csv(f).map_err(|e| e.to_string()))
        {
            Ok(ev) => ev,
            Err(e) => {
                mismatches.push(format!("{tag}: {e}"));
                continue;
            }
        };
        let final_bankroll = events.last().map_or(row.initial, |e| e.bankroll_after);
        let gain = final_bankroll - row.initial;
        let gain_pct = 100.0 * gain.units() as f64 / row.initial.units() as f64;
        let round_trips = events.iter().filter(|e| e.action != Action::Buy).count();
        let mut basis = Money::ZERO;
        let mut forced = Money::ZERO;
        for e in &events {
            match e.action {
                Action::Buy => basis += e.price.times(e.units),
                Action::Sell => basis = Money::ZERO,
                Action::ForcedLiquidation => {
                    forced += e.price.times(e.units) - basis;
                    basis = Money::ZERO;
                }
            }
        }
        let mut check = |name: &str, ok: bool| {
            if !ok {
                mismatches.push(format!("{tag}: {name} disagrees with ledger"));
            }
        };
        check("final", final_bankroll == row.final_bankroll);
        check("gain", gain == row.gain);
        check("gain_pct", format!("{gain_pct:.4}") == format!("{:.4}", row.gain_pct));
        check("round_trips", round_trips == row.round_trips);
        check("forced_pnl", forced == row.forced_pnl);
    }
    Ok(ReportCheck { rows, mismatches })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_csv_round_trip() {
        let row = SummaryRow {
            symbol: "AES".into(),
            variant: Variant::Flight,
            mode: SizingMode::Single,
            effective_variant: Variant::Flight,
            initial: Money::from_whole(1124),
            final_bankroll: Money::from_whole(1145),
            gain: Money::from_whole(21),
            gain_pct: 100.0 * 21.0 / 1124.0,
            round_trips: 40,
            forced_pnl: Money::ZERO,
        };
        let text = summary_csv(std::slice::from_ref(&row));
        let back = parse_summary(&text).unwrap();
        assert_eq!(back[0].symbol, "AES");
        assert_eq!(back[0].gain, row.gain);
        assert_eq!(format!("{:.4}", back[0].gain_pct), format!("{:.4}", row.gain_pct));
        let check = ReportCheck {
            rows: vec![row],
            mismatches: Vec::new(),
        };
        let tables = check.gain_tables();
        assert_eq!(tables.len(), 1);
        assert_eq!(tables[0].1, "symbol,initial,gain,gain_pct\nAES,1124.00,+21.00,1.87\n");
    }

    #[test]
    fn rank_csv_format() {
        assert_eq!(rank_csv(&[]), "symbol,mep,sd,ci_low,ci_high\n");
    }
}
