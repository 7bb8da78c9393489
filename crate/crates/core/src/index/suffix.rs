//! Suffix array construction by prefix doubling.
//!
//! Each round sorts positions by the pair `(rank[i], rank[i + k])` and
//! re-ranks; the loop ends once every rank is distinct. Ranks start from the
//! dense rank of each token so keys fit in a `u64` for any corpus with fewer
//! than 2^32 positions.

use rayon::prelude::*;

/// Returns the suffix array of `tokens`, a permutation of `0..tokens.len()`
/// sorted by lexicographic order of suffixes (a proper prefix sorts first).
pub fn suffix_array(tokens: &[u32]) -> Vec<usize> {
    let n = tokens.len();
    if n == 0 {
        return Vec::new();
    }
    assert!(
        (n as u64) < u32::MAX as u64,
        "prefix doubling keys need fewer than 2^32 positions"
    );

    let mut rank = dense_ranks(tokens);
    let mut order: Vec<(u64, usize)> = Vec::with_capacity(n);
    let mut k = 1usize;
    loop {
        order.clear();
        order.par_extend((0..n).into_par_iter().map(|i| {
            let second = if i + k < n { rank[i + k] } else { 0 };
            ((rank[i] << 32) | second, i)
        }));
        order.par_sort_unstable();

        let mut distinct = 0u64;
        let mut prev = None;
        for &(key, i) in &order {
            if prev != Some(key) {
                distinct += 1;
                prev = Some(key);
            }
            rank[i] = distinct;
        }
        if distinct as usize == n || k >= n {
            break;
        }
        k *= 2;
    }
    order.into_iter().map(|(_, i)| i).collect()
}

/// Ranks in `1..=distinct`, rank 0 is reserved for "past the end".
fn dense_ranks(tokens: &[u32]) -> Vec<u64> {
    let mut distinct: Vec<u32> = tokens.to_vec();
    distinct.par_sort_unstable();
    distinct.dedup();
    tokens
        .par_iter()
        .map(|t| distinct.binary_search(t).expect("token present") as u64 + 1)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(tokens: &[u32]) -> Vec<usize> {
        let mut sa: Vec<usize> = (0..tokens.len()).collect();
        sa.sort_by(|&a, &b| tokens[a..].cmp(&tokens[b..]));
        sa
    }

    #[test]
    fn tiny_cases() {
        assert_eq!(suffix_array(&[3]), vec![0]);
        assert_eq!(suffix_array(&[1, 0]), vec![1, 0]);
        assert_eq!(suffix_array(&[5, 5, 5, 5]), vec![3, 2, 1, 0]);
        assert!(suffix_array(&[]).is_empty());
    }

    proptest! {
        #[test]
        fn matches_naive_sort(tokens in proptest::collection::vec(0u32..6, 1..300)) {
            prop_assert_eq!(suffix_array(&tokens), naive(&tokens));
        }

        #[test]
        fn large_token_ids(tokens in proptest::collection::vec(any::<u32>(), 1..64)) {
            prop_assert_eq!(suffix_array(&tokens), naive(&tokens));
        }
    }
}
