use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ordinal_blsh::report::{
    cmd_backtest, cmd_rank, cmd_report, cmd_scan, extremes_csv, pretty_table, rank_csv,
    summary_csv, Failure, Overrides, ReportError, RunManifest,
};
use ordinal_blsh::strategy::{SizingMode, Variant};

#[derive(Parser)]
#[command(name = "ordinal-blsh", version, about = "Ordinal-pattern scans and buy-low-sell-high backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pattern statistics, MEP and sizing checks per symbol (writes scan.json)
    Scan(Shared),
    /// Rank symbols by the lower MEP confidence bound (writes rank.csv)
    Rank {
        #[command(flatten)]
        shared: Shared,
        /// Number of rows to keep
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run every symbol x variant x mode and write ledgers, trajectories and tables
    Backtest(Shared),
    /// Re-read a backtest output directory, cross-check it and print gain tables
    Report(Shared),
}

#[derive(Args)]
struct Shared {
    /// Manifest file (TOML)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, env = "ORDINAL_BLSH_OUT")]
    out: Option<PathBuf>,
    /// Directory holding <SYMBOL>.csv files
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    symbols: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    variant: Option<Vec<Variant>>,
    #[arg(long, value_delimiter = ',')]
    mode: Option<Vec<SizingMode>>,
    #[arg(long)]
    checkpoints: Option<usize>,
    /// Aligned text instead of CSV
    #[arg(long)]
    pretty: bool,
}

impl Shared {
    fn manifest(&self, k: Option<usize>) -> Result<RunManifest, ReportError> {
        let mut m = match &self.config {
            Some(path) => RunManifest::from_path(path)?,
            None => RunManifest::default(),
        };
        m.apply(Overrides {
            symbols: self.symbols.clone(),
            variants: self.variant.clone(),
            modes: self.mode.clone(),
            checkpoints: self.checkpoints,
            out_dir: self.out.clone(),
            data_dir: self.data_dir.clone(),
            k,
        })?;
        Ok(m)
    }

    fn print(&self, title: &str, csv: &str) {
        if self.pretty {
            println!("{title}\n{}", pretty_table(csv));
        } else {
            print!("{csv}");
        }
    }
}

fn report_failures(failures: &[Failure]) {
    for f in failures {
        eprintln!("error: {}: {}", f.symbol, f.error);
    }
}

fn scan_csv(report: &ordinal_blsh::report::ScanReport) -> String {
    let mut out = String::from("symbol,bars,mep,sd,ci_low,ci_high,mep_pass,ev,ev_positive,stake_pct,min_bankroll\n");
    for r in &report.records {
        let s = &r.stats;
        out.push_str(&format!(
            "{},{},{:.2},{:.2},{:.2},{:.2},{},{:.4},{},{:.2},{}\n",
            r.symbol,
            r.bars,
            s.mep,
            s.mep_sd,
            s.mep_ci_low,
            s.mep_ci_high,
            r.mep_passes,
            r.expected_value,
            r.ev_positive,
            r.stake_pct,
            r.min_bankroll.map_or(String::new(), |m| m.format_with(2)),
        ));
    }
    out
}

fn run(cli: Cli) -> Result<i32, ReportError> {
    match cli.command {
        Command::Scan(shared) => {
            let report = cmd_scan(&shared.manifest(None)?)?;
            shared.print("scan", &scan_csv(&report));
            report_failures(&report.failures);
            Ok(report.exit_code())
        }
        Command::Rank { shared, k } => {
            let report = cmd_rank(&shared.manifest(k)?)?;
            shared.print("rank", &rank_csv(&report.table));
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            report_failures(&report.failures);
            Ok(report.exit_code())
        }
        Command::Backtest(shared) => {
            let report = cmd_backtest(&shared.manifest(None)?)?;
            shared.print("summary", &summary_csv(&report.summaries));
            if shared.pretty {
                shared.print("extremes", &extremes_csv(&report.extremes));
            }
            report_failures(&report.failures);
            Ok(report.exit_code())
        }
        Command::Report(shared) => {
            let m = shared.manifest(None)?;
            let check = cmd_report(&m.out_dir)?;
            for (title, csv) in check.gain_tables() {
                if shared.pretty {
                    shared.print(&title, &csv);
                } else {
                    println!("# {title}");
                    print!("{csv}");
                }
            }
            print_if_exists(&shared, &m.out_dir.join("extremes.csv"), "extremes");
            for line in &check.mismatches {
                eprintln!("mismatch: {line}");
            }
            Ok(check.exit_code())
        }
    }
}

fn print_if_exists(shared: &Shared, path: &Path, title: &str) {
    if let Ok(text) = std::fs::read_to_string(path) {
        if !shared.pretty {
            println!("# {title}");
        }
        shared.print(title, &text);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
