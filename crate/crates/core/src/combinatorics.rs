//! Factorials, log-binomials, and the lexicographic subset indexing used to
//! address the node-wise feature set.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Largest interaction order accepted anywhere in the library.
pub const MAX_ORDER: usize = 20;

/// `k!` in floating point. Refuses `k > MAX_ORDER`.
pub fn factorial(k: usize) -> Result<f64> {
    if k > MAX_ORDER {
        return Err(Error::Capacity {
            what: "interaction order k",
            value: k,
            cap: MAX_ORDER,
        });
    }
    Ok((1..=k).map(|i| i as f64).product())
}

/// Natural log of `C(n, m)` through log-gamma. Returns `-inf` when `m > n`.
pub fn ln_binomial(n: usize, m: usize) -> f64 {
    if m > n {
        return f64::NEG_INFINITY;
    }
    if m == 0 || m == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(m as f64 + 1.0) - ln_gamma((n - m) as f64 + 1.0)
}

/// Exact `C(n, m)`, or `None` on overflow.
pub fn binomial(n: usize, m: usize) -> Option<usize> {
    if m > n {
        return Some(0);
    }
    let m = m.min(n - m);
    let mut acc: u128 = 1;
    for i in 0..m {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// All `m`-subsets of `items` (assumed sorted), in lexicographic order.
pub fn combinations(items: &[usize], m: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    if m > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        // rightmost position that can still advance
        let mut i = m;
        while i > 0 && idx[i - 1] == i - 1 + n - m {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        i -= 1;
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Lexicographic ranking of `m`-subsets of `{0, .., n-1}`.
#[derive(Debug, Clone)]
pub struct SubsetRanker {
    n: usize,
    m: usize,
    // table[a][b] = C(a, b)
    table: Vec<Vec<usize>>,
}

impl SubsetRanker {
    pub fn new(n: usize, m: usize) -> Self {
        let mut table = vec![vec![0usize; m + 1]; n + 1];
        for a in 0..=n {
            table[a][0] = 1;
            for b in 1..=m.min(a) {
                table[a][b] = table[a - 1][b - 1].saturating_add(table[a - 1][b]);
            }
        }
        SubsetRanker { n, m, table }
    }

    pub fn count(&self) -> usize {
        self.table[self.n][self.m]
    }

    /// Position of the strictly increasing subset `c` in lexicographic order.
    pub fn rank(&self, c: &[usize]) -> usize {
        debug_assert_eq!(c.len(), self.m);
        let mut rank = 0;
        let mut start = 0;
        for (i, &ci) in c.iter().enumerate() {
            let rest = self.m - 1 - i;
            for j in start..ci {
                rank += self.table[self.n - 1 - j][rest];
            }
            start = ci + 1;
        }
        rank
    }
}

/// One splitmix64 output for the given state; used to derive independent
/// stream seeds from `(base_seed, index)` pairs.
pub fn splitmix64(state: u64) -> u64 {
    SplitMix64::seed_from_u64(state).next_u64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factorial_values_and_cap() {
        assert_eq!(factorial(0).unwrap(), 1.0);
        assert_eq!(factorial(3).unwrap(), 6.0);
        assert_eq!(factorial(20).unwrap(), 2_432_902_008_176_640_000.0);
        assert!(matches!(factorial(21), Err(Error::Capacity { .. })));
    }

    #[test]
    fn ln_binomial_matches_exact() {
        for n in 0..40 {
            for m in 0..=n {
                let exact = binomial(n, m).unwrap() as f64;
                assert!((ln_binomial(n, m) - exact.ln()).abs() < 1e-10, "{n} {m}");
            }
        }
        assert_eq!(ln_binomial(3, 5), f64::NEG_INFINITY);
    }

    #[test]
    fn combinations_are_lexicographic_and_complete() {
        let items = [0, 2, 3, 5, 7];
        let c = combinations(&items, 3);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![0, 2, 3]);
        assert_eq!(c[9], vec![3, 5, 7]);
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(combinations(&items, 0), vec![Vec::<usize>::new()]);
        assert!(combinations(&items, 6).is_empty());
    }

    #[test]
    fn ranker_inverts_enumeration() {
        for n in 1..9 {
            for m in 0..=n {
                let items: Vec<usize> = (0..n).collect();
                let ranker = SubsetRanker::new(n, m);
                let all = combinations(&items, m);
                assert_eq!(ranker.count(), all.len());
                for (i, c) in all.iter().enumerate() {
                    assert_eq!(ranker.rank(c), i);
                }
            }
        }
    }
}
