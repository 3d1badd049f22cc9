use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer};

use super::ReportError;
use crate::money::Money;
use crate::ordinal::{CiConfig, CiMethod, EncodingParams};
use crate::series::InputFormat;
use crate::strategy::{SizingMode, TieRule, Variant};

/// Starting bankroll: a fixed amount, or a multiple of the symbol's first close.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankrollSpec {
    Fixed(Money),
    FirstPriceMultiple(u64),
}

impl Default for BankrollSpec {
    fn default() -> Self {
        BankrollSpec::FirstPriceMultiple(100)
    }
}

impl BankrollSpec {
    pub fn resolve(self, first_close: Money) -> Money {
        match self {
            BankrollSpec::Fixed(m) => m,
            BankrollSpec::FirstPriceMultiple(k) => first_close.times(k),
        }
    }
}

impl FromStr for BankrollSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(k) = s.strip_suffix(['x', 'X']) {
            return k
                .trim()
                .parse()
                .ok()
                .filter(|&k: &u64| k > 0)
                .map(BankrollSpec::FirstPriceMultiple)
                .ok_or_else(|| format!("bad bankroll multiple `{s}`"));
        }
        let m: Money = s.parse().map_err(|e| format!("bad bankroll `{s}`: {e}"))?;
        if !m.is_positive() {
            return Err(format!("bankroll must be positive, got `{s}`"));
        }
        Ok(BankrollSpec::Fixed(m))
    }
}

impl fmt::Display for BankrollSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BankrollSpec::Fixed(m) => write!(f, "{m}"),
            BankrollSpec::FirstPriceMultiple(k) => write!(f, "{k}x"),
        }
    }
}

impl<'de> Deserialize<'de> for BankrollSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Float(f64),
            Text(String),
        }
        let text = match Repr::deserialize(d)? {
            Repr::Int(i) => i.to_string(),
            Repr::Float(v) => format!("{v:.4}"),
            Repr::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> From<OneOrMany<T>> for Vec<T> {
    fn from(v: OneOrMany<T>) -> Self {
        match v {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(xs) => xs,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileManifest {
    #[serde(default)]
    symbols: Vec<String>,
    data_dir: Option<PathBuf>,
    format: Option<String>,
    data_file: Option<PathBuf>,
    bankroll: Option<BankrollSpec>,
    checkpoints: Option<usize>,
    k: Option<usize>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    #[serde(default)]
    embedding: EmbeddingSection,
    #[serde(default)]
    strategy: StrategySection,
    #[serde(default)]
    kelly: KellySection,
    #[serde(default)]
    ci: CiSection,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct EmbeddingSection {
    d: Option<usize>,
    tau: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StrategySection {
    variant: Option<OneOrMany<String>>,
    mode: Option<OneOrMany<String>>,
    ties: Option<TieRule>,
    martingale_base: Option<u64>,
    fee_per_fill: Option<Money>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct KellySection {
    fraction: Option<f64>,
    b: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CiSection {
    method: Option<String>,
    z: Option<f64>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub symbols: Vec<String>,
    pub data_dir: PathBuf,
    pub format: InputFormat,
    /// Multi-symbol file for the Kaggle layout.
    pub data_file: Option<PathBuf>,
    pub embedding: EncodingParams,
    pub variants: Vec<Variant>,
    pub modes: Vec<SizingMode>,
    pub ties: TieRule,
    pub martingale_base: u64,
    pub fee_per_fill: Money,
    pub bankroll: BankrollSpec,
    pub kelly_fraction: f64,
    pub kelly_b: f64,
    pub ci: CiConfig,
    pub checkpoints: usize,
    pub k: usize,
    pub out_dir: PathBuf,
    /// Reserved; the pipeline is deterministic.
    pub seed: u64,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            symbols: Vec::new(),
            data_dir: PathBuf::from("."),
            format: InputFormat::Canonical,
            data_file: None,
            embedding: EncodingParams::default(),
            variants: Variant::ALL.to_vec(),
            modes: vec![SizingMode::Single],
            ties: TieRule::NoSignal,
            martingale_base: 1,
            fee_per_fill: Money::ZERO,
            bankroll: BankrollSpec::default(),
            kelly_fraction: 1.0 / 3.0,
            kelly_b: 1.0,
            ci: CiConfig::default(),
            checkpoints: 100,
            k: 7,
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub symbols: Option<Vec<String>>,
    pub variants: Option<Vec<Variant>>,
    pub modes: Option<Vec<SizingMode>>,
    pub checkpoints: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub k: Option<usize>,
}

fn config_err(msg: impl Into<String>) -> ReportError {
    ReportError::Manifest(msg.into())
}

impl RunManifest {
    pub fn from_path(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    /// Parses manifest text; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ReportError> {
        let file: FileManifest = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        let d = RunManifest::default();
        let parse_list = |v: Option<OneOrMany<String>>| v.map(Vec::<String>::from);
        let variants = match parse_list(file.strategy.variant) {
            Some(list) => list
                .iter()
                .map(|s| s.parse::<Variant>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_err)?,
            None => d.variants.clone(),
        };
        let modes = match parse_list(file.strategy.mode) {
            Some(list) => list
                .iter()
                .map(|s| s.parse::<SizingMode>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_err)?,
            None => d.modes.clone(),
        };
        let format = match file.format {
            Some(f) => f.parse().map_err(config_err)?,
            None => d.format,
        };
        let ci_method = match file.ci.method {
            Some(m) => m.parse::<CiMethod>().map_err(config_err)?,
            None => d.ci.method,
        };
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let data_dir = resolve(file.data_dir.unwrap_or(d.data_dir.clone()));
        let m = RunManifest {
            symbols: file.symbols,
            data_file: file.data_file.map(|f| if f.is_absolute() { f } else { data_dir.join(f) }),
            data_dir,
            format,
            embedding: EncodingParams {
                dim: file.embedding.d.unwrap_or(d.embedding.dim),
                tau: file.embedding.tau.unwrap_or(d.embedding.tau),
            },
            variants,
            modes,
            ties: file.strategy.ties.unwrap_or(d.ties),
            martingale_base: file.strategy.martingale_base.unwrap_or(d.martingale_base),
            fee_per_fill: file.strategy.fee_per_fill.unwrap_or(d.fee_per_fill),
            bankroll: file.bankroll.unwrap_or(d.bankroll),
            kelly_fraction: file.kelly.fraction.unwrap_or(d.kelly_fraction),
            kelly_b: file.kelly.b.unwrap_or(d.kelly_b),
            ci: CiConfig {
                method: ci_method,
                z: file.ci.z.unwrap_or(d.ci.z),
            },
            checkpoints: file.checkpoints.unwrap_or(d.checkpoints),
            k: file.k.unwrap_or(d.k),
            out_dir: file.out.map(resolve).unwrap_or(d.out_dir),
            seed: file.seed.unwrap_or(d.seed),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn apply(&mut self, o: Overrides) -> Result<(), ReportError> {
        if let Some(s) = o.symbols {
            self.symbols = s;
        }
        if let Some(v) = o.variants {
            self.variants = v;
        }
        if let Some(m) = o.modes {
            self.modes = m;
        }
        if let Some(c) = o.checkpoints {
            self.checkpoints = c;
        }
        if let Some(d) = o.out_dir {
            self.out_dir = d;
        }
        if let Some(d) = o.data_dir {
            self.data_dir = d;
        }
        if let Some(k) = o.k {
            self.k = k;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        self.embedding
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if self.checkpoints == 0 {
            return Err(config_err("checkpoints must be at least 1"));
        }
        if self.k == 0 {
            return Err(config_err("k must be at least 1"));
        }
        if !(self.kelly_fraction > 0.0 && self.kelly_fraction <= 1.0) {
            return Err(config_err("kelly.fraction must be in (0, 1]"));
        }
        if self.kelly_b.is_nan() || self.kelly_b <= 0.0 {
            return Err(config_err("kelly.b must be positive"));
        }
        if self.martingale_base == 0 {
            return Err(config_err("strategy.martingale_base must be at least 1"));
        }
        if self.format == InputFormat::Kaggle && self.data_file.is_none() {
            return Err(config_err("format = \"kaggle\" needs data_file"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.symbols {
            if s.is_empty() || !seen.insert(s) {
                return Err(config_err(format!("empty or duplicate symbol `{s}`")));
            }
        }
        Ok(())
    }

    pub fn input_path(&self, symbol: &str) -> PathBuf {
        match (&self.format, &self.data_file) {
            (InputFormat::Kaggle, Some(f)) => f.clone(),
            _ => self.data_dir.join(format!("{symbol}.csv")),
        }
    }

    /// Every input path must exist before anything runs.
    pub fn check_inputs(&self) -> Result<(), ReportError> {
        let missing: Vec<String> = self
            .symbols
            .iter()
            .map(|s| self.input_path(s))
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(config_err(format!("missing input files: {}", missing.join(", "))))
        }
    }
}
