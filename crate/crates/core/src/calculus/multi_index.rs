//! Strictly increasing multi-indices labelling the coefficient channels of a k-form.

use std::fmt;

use crate::error::{Error, Result};

/// Strictly increasing tuple of 0-based coordinate indices in `0..n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    n: usize,
    indices: Vec<usize>,
}

impl MultiIndex {
    pub fn new(n: usize, indices: Vec<usize>) -> Result<Self> {
        let increasing = indices.windows(2).all(|w| w[0] < w[1]);
        if !increasing || indices.len() > n || indices.iter().any(|&i| i >= n) {
            return Err(Error::InvalidMultiIndex { indices, n });
        }
        Ok(MultiIndex { n, indices })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// All increasing multi-indices of length `k`, in lexicographic order.
    pub fn all(n: usize, k: usize) -> Vec<MultiIndex> {
        combinations(n, k).into_iter().map(|indices| MultiIndex { n, indices }).collect()
    }

    /// Position of this multi-index in [`MultiIndex::all`].
    pub fn rank(&self) -> usize {
        rank_of(self.n, &self.indices)
    }

    /// Complement in `0..n`, increasing.
    pub fn complement(&self) -> MultiIndex {
        let indices = (0..self.n).filter(|i| !self.indices.contains(i)).collect();
        MultiIndex { n: self.n, indices }
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let one_based: Vec<String> = self.indices.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "dx^{{{}}}", one_based.join(","))
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Increasing `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    if k > n {
        return out;
    }
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        // advance the rightmost index that still has room
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Lexicographic rank of an increasing index tuple among `k`-subsets of `0..n`.
pub fn rank_of(n: usize, indices: &[usize]) -> usize {
    let k = indices.len();
    let mut rank = 0;
    let mut start = 0;
    for (pos, &idx) in indices.iter().enumerate() {
        for skipped in start..idx {
            rank += binomial(n - skipped - 1, k - pos - 1);
        }
        start = idx + 1;
    }
    rank
}

/// Sorts an arbitrary index tuple, returning the permutation sign, or `None`
/// when an index repeats (the antisymmetric extension is zero there).
pub fn sort_with_sign(indices: &[usize]) -> Option<(Vec<usize>, f64)> {
    let mut v = indices.to_vec();
    let mut sign = 1.0;
    // insertion sort counting transpositions
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some((v, sign))
    }
}

/// Channel position and sign of the antisymmetric extension at an arbitrary tuple.
pub fn signed_rank(n: usize, indices: &[usize]) -> Option<(usize, f64)> {
    sort_with_sign(indices).map(|(sorted, sign)| (rank_of(n, &sorted), sign))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counts_match_binomial() {
        for n in 0..=6 {
            for k in 0..=n {
                assert_eq!(MultiIndex::all(n, k).len(), binomial(n, k));
            }
        }
    }

    #[test]
    fn rank_inverts_enumeration() {
        for n in 1..=5 {
            for k in 0..=n {
                for (pos, m) in MultiIndex::all(n, k).iter().enumerate() {
                    assert_eq!(m.rank(), pos);
                }
            }
        }
    }

    #[test]
    fn rejects_non_increasing() {
        assert!(MultiIndex::new(3, vec![1, 0]).is_err());
        assert!(MultiIndex::new(3, vec![0, 0]).is_err());
        assert!(MultiIndex::new(3, vec![0, 3]).is_err());
        assert!(MultiIndex::new(3, vec![0, 2]).is_ok());
    }

    #[test]
    fn signs_of_small_permutations() {
        assert_eq!(sort_with_sign(&[1, 0]), Some((vec![0, 1], -1.0)));
        assert_eq!(sort_with_sign(&[2, 0, 1]), Some((vec![0, 1, 2], 1.0)));
        assert_eq!(sort_with_sign(&[1, 1]), None);
    }

    proptest! {
        #[test]
        fn sign_is_multiplicative_under_swaps(mut v in proptest::sample::subsequence((0usize..6).collect::<Vec<_>>(), 2..=5)) {
            let (_, s0) = sort_with_sign(&v).unwrap();
            v.swap(0, 1);
            let (_, s1) = sort_with_sign(&v).unwrap();
            prop_assert_eq!(s0, -s1);
        }
    }
}
