use std::fmt;

use serde::{Serialize, Serializer};

use super::OrdinalError;

/// Largest embedding dimension accepted; 10! patterns still index comfortably.
pub const MAX_DIM: usize = 10;

/// Window length and spacing used to cut a series into ordinal patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, Serialize)]
pub struct EncodingParams {
    #[serde(rename = "d")]
    pub dim: usize,
    pub tau: usize,
}

impl Default for EncodingParams {
    fn default() -> Self {
        EncodingParams { dim: 3, tau: 1 }
    }
}

impl EncodingParams {
    pub fn new(dim: usize, tau: usize) -> Result<Self, OrdinalError> {
        let p = EncodingParams { dim, tau };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), OrdinalError> {
        if !(2..=MAX_DIM).contains(&self.dim) {
            return Err(OrdinalError::InvalidParams(format!(
                "embedding dimension {} outside 2..={MAX_DIM}",
                self.dim
            )));
        }
        if self.tau == 0 {
            return Err(OrdinalError::InvalidParams("time delay must be >= 1".into()));
        }
        Ok(())
    }

    /// Bars spanned by one window.
    pub fn span(&self) -> usize {
        (self.dim - 1) * self.tau + 1
    }

    /// Windows produced from `len` bars, or `None` if there are too few.
    pub fn window_count(&self, len: usize) -> Option<usize> {
        len.checked_sub(self.span()).map(|n| n + 1)
    }

    pub fn pattern_count(&self) -> usize {
        factorial(self.dim)
    }
}

pub(crate) fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// An ordinal pattern: the rank of each window element among its peers.
///
/// `index` is the lexicographic position of the rank sequence among all `dim!`
/// permutations, so for `dim = 3` index 0 is `{0,1,2}` and index 5 is `{2,1,0}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    dim: u8,
    index: u32,
}

impl Pattern {
    /// `{0,1,2}`: two rises.
    pub const RISE_RISE: Pattern = Pattern::d3(0);
    /// `{0,2,1}`: rise, then a fall that stays above the start.
    pub const RISE_FALL_ABOVE: Pattern = Pattern::d3(1);
    /// `{1,0,2}`: fall, then a rise past the start.
    pub const FALL_RISE_ABOVE: Pattern = Pattern::d3(2);
    /// `{1,2,0}`: rise, then a fall below the start.
    pub const RISE_FALL_BELOW: Pattern = Pattern::d3(3);
    /// `{2,0,1}`: fall, then a partial rebound.
    pub const FALL_RISE_BELOW: Pattern = Pattern::d3(4);
    /// `{2,1,0}`: two falls.
    pub const FALL_FALL: Pattern = Pattern::d3(5);

    const fn d3(index: u32) -> Pattern {
        Pattern { dim: 3, index }
    }

    /// Builds a pattern from a rank sequence, which must be a permutation of `0..len`.
    pub fn from_ranks(ranks: &[usize]) -> Result<Pattern, OrdinalError> {
        let dim = ranks.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(OrdinalError::InvalidParams(format!("pattern length {dim}")));
        }
        let mut seen = [false; MAX_DIM];
        for &r in ranks {
            if r >= dim || seen[r] {
                return Err(OrdinalError::InvalidParams(format!(
                    "{ranks:?} is not a permutation"
                )));
            }
            seen[r] = true;
        }
        Ok(Self::from_valid_ranks(ranks))
    }

    pub(crate) fn from_valid_ranks(ranks: &[usize]) -> Pattern {
        let dim = ranks.len();
        let mut index = 0usize;
        for i in 0..dim {
            let smaller_after = ranks[i + 1..].iter().filter(|&&r| r < ranks[i]).count();
            index += smaller_after * factorial(dim - 1 - i);
        }
        Pattern {
            dim: dim as u8,
            index: index as u32,
        }
    }

    pub fn from_index(dim: usize, index: usize) -> Result<Pattern, OrdinalError> {
        if !(1..=MAX_DIM).contains(&dim) || index >= factorial(dim) {
            return Err(OrdinalError::InvalidParams(format!(
                "index {index} out of range for dimension {dim}"
            )));
        }
        Ok(Pattern {
            dim: dim as u8,
            index: index as u32,
        })
    }

    /// Every pattern of the given dimension, in index order.
    pub fn all(dim: usize) -> impl Iterator<Item = Pattern> {
        (0..factorial(dim)).map(move |i| Pattern {
            dim: dim as u8,
            index: i as u32,
        })
    }

    pub fn dim(self) -> usize {
        usize::from(self.dim)
    }

    pub fn index(self) -> usize {
        self.index as usize
    }

    /// One-based position, as in the conventional π₁…π₆ naming.
    pub fn ordinal_number(self) -> usize {
        self.index() + 1
    }

    pub fn ranks(self) -> Vec<usize> {
        let dim = self.dim();
        let mut remaining: Vec<usize> = (0..dim).collect();
        let mut rest = self.index();
        let mut out = Vec::with_capacity(dim);
        for i in 0..dim {
            let f = factorial(dim - 1 - i);
            out.push(remaining.remove(rest / f));
            rest %= f;
        }
        out
    }

    /// Patterns that can follow this one when consecutive windows overlap in
    /// all but one element (`tau = 1`).
    ///
    /// The successor's first `dim - 1` ranks must be ordered like this
    /// pattern's last `dim - 1` ranks; only the new element's rank is free.
    pub fn legitimate_successors(self, params: &EncodingParams) -> Result<Vec<Pattern>, OrdinalError> {
        if params.tau != 1 {
            return Err(OrdinalError::UnsupportedDelay(params.tau));
        }
        if params.dim != self.dim() {
            return Err(OrdinalError::InvalidParams(format!(
                "pattern dimension {} does not match {}",
                self.dim(),
                params.dim
            )));
        }
        let ranks = self.ranks();
        let dim = ranks.len();
        // Tail ranks compressed to 0..dim-1.
        let tail: Vec<usize> = ranks[1..]
            .iter()
            .map(|&r| ranks[1..].iter().filter(|&&o| o < r).count())
            .collect();
        let mut out: Vec<Pattern> = (0..dim)
            .map(|new_rank| {
                let mut next: Vec<usize> = tail
                    .iter()
                    .map(|&r| if r >= new_rank { r + 1 } else { r })
                    .collect();
                next.push(new_rank);
                Pattern::from_valid_ranks(&next)
            })
            .collect();
        out.sort();
        Ok(out)
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ranks = self.ranks();
        f.write_str("{")?;
        for (i, r) in ranks.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}")?;
        }
        f.write_str("}")
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Rank of each element within a window: the number of smaller elements, with
/// equal values ordered by position.
pub(crate) fn window_ranks<T: PartialOrd>(window: &[&T], out: &mut Vec<usize>) {
    out.clear();
    for (i, v) in window.iter().enumerate() {
        let rank = window
            .iter()
            .enumerate()
            .filter(|&(j, w)| *w < *v || (j < i && *w == *v))
            .count();
        out.push(rank);
    }
}

/// Encodes `values` into overlapping ordinal patterns.
pub fn encode_values<T: PartialOrd>(
    values: &[T],
    params: &EncodingParams,
) -> Result<Vec<Pattern>, OrdinalError> {
    params.validate()?;
    let windows = params
        .window_count(values.len())
        .ok_or(OrdinalError::SeriesTooShort {
            len: values.len(),
            required: params.span(),
        })?;
    let mut ranks = Vec::with_capacity(params.dim);
    let mut window = Vec::with_capacity(params.dim);
    Ok((0..windows)
        .map(|k| {
            window.clear();
            window.extend((0..params.dim).map(|i| &values[k + i * params.tau]));
            window_ranks(&window, &mut ranks);
            Pattern::from_valid_ranks(&ranks)
        })
        .collect())
}
