//! Parser for dimensionality lists such as `1..10`, `2,4,8` or `1..=5,10`.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KRangeError(String);

impl fmt::Display for KRangeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid K list: {}", self.0)
    }
}

impl std::error::Error for KRangeError {}

/// Largest dimensionality a list may contain.
pub const MAX_K: usize = 10_000;

fn number(s: &str) -> Result<usize, KRangeError> {
    let n: usize = s
        .trim()
        .parse()
        .map_err(|_| KRangeError(format!("`{}` is not a positive integer", s.trim())))?;
    if n == 0 || n > MAX_K {
        return Err(KRangeError(format!("{n} is outside 1..={MAX_K}")));
    }
    Ok(n)
}

/// Parses comma-separated items, each a single value or an inclusive range
/// `a..b` / `a..=b`. The result is sorted and free of duplicates.
pub fn parse_k_list(s: &str) -> Result<Vec<usize>, KRangeError> {
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(KRangeError("empty item".into()));
        }
        match item.split_once("..") {
            Some((a, b)) => {
                let b = b.strip_prefix('=').unwrap_or(b);
                let (a, b) = (number(a)?, number(b)?);
                if a > b {
                    return Err(KRangeError(format!("range {a}..{b} is empty")));
                }
                out.extend(a..=b);
            }
            None => out.push(number(item)?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
