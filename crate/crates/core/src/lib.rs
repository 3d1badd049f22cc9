//! Ordinal-pattern stock selection, Kelly position sizing, and a deterministic
//! backtester for buy-after-decline strategies on minute bars.

pub mod money;
pub mod ordinal;
pub mod report;
pub mod series;
pub mod sizing;
pub mod strategy;

pub use money::Money;
pub use series::{Bar, PriceSeries};
