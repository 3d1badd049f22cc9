use std::collections::BTreeMap;
use std::fs;

use ordinal_blsh::ordinal::{compute_stats, CiConfig, EncodingParams, PatternStats};
use ordinal_blsh::report::{
    cmd_backtest, cmd_rank, cmd_report, cmd_scan, ledger_path, rank_from_stats, RunManifest,
};
use ordinal_blsh::strategy::{SizingMode, Variant};
use ordinal_blsh::Money;

fn kaggle_file(rows: usize) -> String {
    let mut text = String::from(",AAA,AAA,BBB,BBB\n,close,volume,close,volume\n");
    for i in 0..rows {
        let a = 1000 + ((i * 7) % 13) as i64 - 6 + (i / 50) as i64;
        let b = 2000 - ((i * 5) % 11) as i64 + (i / 40) as i64;
        let minute = 9 * 60 + 30 + i;
        text.push_str(&format!(
            "2017-09-{:02} {:02}:{:02}:00,{}.{:02},10,{}.{:02},20\n",
            11 + minute / 1440,
            (minute / 60) % 24,
            minute % 60,
            a / 100,
            a % 100,
            b / 100,
            b % 100
        ));
    }
    text
}

fn manifest(dir: &std::path::Path) -> RunManifest {
    fs::write(dir.join("all.csv"), kaggle_file(600)).unwrap();
    let text = r#"
symbols = ["AAA", "BBB"]
format = "kaggle"
data_file = "all.csv"
bankroll = "100x"
checkpoints = 10
out = "out"

[strategy]
mode = ["single", "kelly"]

[ci]
method = "fixed:100"
"#;
    fs::write(dir.join("run.toml"), text).unwrap();
    RunManifest::from_path(&dir.join("run.toml")).unwrap()
}

#[test]
fn kaggle_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path());
    assert_eq!(m.out_dir, dir.path().join("out"));

    let scan = cmd_scan(&m).unwrap();
    assert_eq!(scan.exit_code(), 0);
    assert_eq!(scan.records.len(), 2);
    for r in &scan.records {
        assert_eq!(r.bars, 600);
        assert_eq!(r.stats.ci_samples, 6);
        assert!(r.stats.mep_ci_low <= r.stats.mep && r.stats.mep <= r.stats.mep_ci_high);
    }

    let rank = cmd_rank(&m).unwrap();
    let csv = fs::read_to_string(m.out_dir.join("rank.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + rank.table.len());

    let bt = cmd_backtest(&m).unwrap();
    assert_eq!(bt.exit_code(), 0);
    assert_eq!(bt.summaries.len(), 2 * 3 * 2);
    for e in &bt.extremes {
        assert!(e.first <= e.maximum && e.last <= e.maximum);
    }
    for row in &bt.summaries {
        assert_eq!(row.initial, bt.extremes.iter().find(|e| e.symbol == row.symbol).unwrap().first.times(100));
        assert!(ledger_path(&m.out_dir, &row.symbol, row.variant, row.mode).exists());
    }
    let check = cmd_report(&m.out_dir).unwrap();
    assert!(check.mismatches.is_empty(), "{:?}", check.mismatches);
    assert_eq!(check.rows.len(), 12);
    assert_eq!(check.gain_tables().len(), 6);
}

#[test]
fn failed_symbol_leaves_other_outputs_intact() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("data")).unwrap();
    let good: String = std::iter::once("timestamp,close\n".to_string())
        .chain((0..30).map(|i| format!("{},{}\n", 1_505_136_600 + 60 * i, 10 + (i * 3) % 5)))
        .collect();
    fs::write(dir.path().join("data/GOOD.csv"), &good).unwrap();
    // Too poor to buy a single unit at its first decline.
    fs::write(dir.path().join("data/POOR.csv"), "timestamp,close\n0,1\n60,500\n120,400\n180,450\n").unwrap();
    let text = "symbols = [\"GOOD\", \"POOR\"]\ndata_dir = \"data\"\nbankroll = 100\n[strategy]\nvariant = \"flight\"\n";
    fs::write(dir.path().join("run.toml"), text).unwrap();
    let m = RunManifest::from_path(&dir.path().join("run.toml")).unwrap();
    let bt = cmd_backtest(&m).unwrap();
    assert_eq!(bt.exit_code(), 1);
    assert_eq!(bt.failures.len(), 1);
    assert!(bt.failures[0].error.contains("flight"));
    assert!(ledger_path(&m.out_dir, "GOOD", Variant::Flight, SizingMode::Single).exists());
    assert!(!ledger_path(&m.out_dir, "POOR", Variant::Flight, SizingMode::Single).exists());
    assert_eq!(cmd_report(&m.out_dir).unwrap().exit_code(), 0);
}

#[test]
fn ranking_warns_when_nothing_passes() {
    let dir = tempfile::tempdir().unwrap();
    let closes: Vec<Money> = [10, 9, 8, 7, 6, 5, 6, 5, 4].iter().map(|&c| Money::from_whole(c)).collect();
    let series = ordinal_blsh::PriceSeries::from_closes("DOWN", "2017-09-11T13:30:00Z".parse().unwrap(), &closes).unwrap();
    let stats = compute_stats(&series, &EncodingParams::default(), &CiConfig::default()).unwrap();
    assert!(stats.mep < 51.0);
    let all: BTreeMap<String, PatternStats> = [("DOWN".to_string(), stats)].into();
    let rank = rank_from_stats(&all, 7, dir.path()).unwrap();
    assert!(rank.table.is_empty());
    assert_eq!(rank.warnings.len(), 1);
    assert_eq!(fs::read_to_string(dir.path().join("rank.csv")).unwrap(), "symbol,mep,sd,ci_low,ci_high\n");
}
