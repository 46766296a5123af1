//! Symbol statistics: occurrence histograms, Shannon entropy, the entropy
//! storage bound, and the table-size-dependent rate-gap bound of tabled ANS.

use crate::error::{Error, Result};

/// Maximum alphabet size; every symbol id fits in one byte.
pub const MAX_ALPHABET: usize = 256;

/// Occurrence counts over a symbol alphabet, with derived probabilities.
///
/// Immutable after construction; all operations on it are pure functions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Distribution {
    counts: Vec<u64>,
    total: u64,
}

impl Distribution {
    /// Builds a distribution directly from per-symbol counts.
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() || counts.len() > MAX_ALPHABET {
            return Err(Error::InvalidAlphabet(counts.len()));
        }
        let total = counts.iter().sum();
        Ok(Self { counts, total })
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Occurrence probability of symbol `s` (count / total).
    pub fn prob(&self, s: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.counts[s] as f64 / self.total as f64
        }
    }

    pub fn probs(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|s| self.prob(s)).collect()
    }

    /// Number of symbols with a positive count.
    pub fn support_size(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Drops zero-count symbols by remapping to a dense alphabet; returns the
    /// shrunk distribution and the old-id-per-new-id map.
    pub fn strip_zeros(&self) -> (Distribution, Vec<usize>) {
        let mut counts = Vec::new();
        let mut ids = Vec::new();
        for (s, &c) in self.counts.iter().enumerate() {
            if c > 0 {
                counts.push(c);
                ids.push(s);
            }
        }
        (
            Distribution {
                total: counts.iter().sum(),
                counts,
            },
            ids,
        )
    }
}

/// Counts symbol occurrences.
///
/// Every symbol must be `< alphabet_size`; the error names the first
/// offending position.
pub fn histogram(symbols: &[u8], alphabet_size: usize) -> Result<Distribution> {
    if alphabet_size == 0 || alphabet_size > MAX_ALPHABET {
        return Err(Error::InvalidAlphabet(alphabet_size));
    }
    let mut counts = vec![0u64; alphabet_size];
    for (index, &sym) in symbols.iter().enumerate() {
        let s = sym as usize;
        if s >= alphabet_size {
            return Err(Error::SymbolOutOfRange {
                index,
                symbol: s,
                alphabet_size,
            });
        }
        counts[s] += 1;
    }
    Ok(Distribution {
        counts,
        total: symbols.len() as u64,
    })
}

/// Shannon entropy in bits per symbol: `H = -sum p_s log2 p_s`.
///
/// Summed with Kahan compensation so large alphabets stay within a 1e-10
/// absolute error budget.
pub fn shannon_entropy(dist: &Distribution) -> Result<f64> {
    if dist.total == 0 {
        return Err(Error::EmptyDistribution);
    }
    let total = dist.total as f64;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &c in &dist.counts {
        if c == 0 {
            continue;
        }
        let p = c as f64 / total;
        let term = -p * p.log2();
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(sum)
}

/// Shannon lower bound on losslessly coded size, in bytes: `H * count / 8`.
///
/// Reporting layers convert to MB with 1 MB = 10^6 bytes.
pub fn entropy_bound_bytes(dist: &Distribution, count: u64) -> Result<f64> {
    Ok(shannon_entropy(dist)? * count as f64 / 8.0)
}

/// Leading-order bound on the gap between the tANS code length and the
/// entropy, in bits per symbol, for an `l`-state automaton:
///
/// ```text
/// dH <= 1/(l^2 ln 4) * sum_s (1/p_s) (p_s / (2 min_s' p_s') + 1/2)^2
/// ```
///
/// The O(l^-3) remainder is dropped, so treat the value as a reference
/// scale rather than a certified ceiling.
pub fn delta_h_bound(dist: &Distribution, l: usize) -> Result<f64> {
    if dist.total == 0 {
        return Err(Error::EmptyDistribution);
    }
    for (s, &c) in dist.counts.iter().enumerate() {
        if c == 0 {
            return Err(Error::ZeroProbability(s));
        }
    }
    if l < dist.alphabet_size() {
        return Err(Error::TableTooSmall {
            symbols: dist.alphabet_size(),
            table_size: l,
        });
    }
    let min_p = dist
        .probs()
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0f64;
    for s in 0..dist.alphabet_size() {
        let p = dist.prob(s);
        let inner = p / (2.0 * min_p) + 0.5;
        sum += inner * inner / p;
    }
    Ok(sum / ((l * l) as f64 * 4.0f64.ln()))
}
