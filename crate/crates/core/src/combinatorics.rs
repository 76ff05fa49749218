//! Permutations, Levi-Civita signs and index combinations used by the
//! brute-force epsilon sums.

use alloc::vec::Vec;

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Sign of the index sequence as a permutation of its sorted values, or 0
/// when an index repeats.
pub fn levi_civita(indices: &[usize]) -> i32 {
    let mut sign = 1;
    for i in 0..indices.len() {
        for j in i + 1..indices.len() {
            if indices[i] == indices[j] {
                return 0;
            }
            if indices[i] > indices[j] {
                sign = -sign;
            }
        }
    }
    sign
}

/// All permutations of `items` paired with their sign relative to the input
/// order (Heap's algorithm).
pub fn signed_permutations(items: &[usize]) -> Vec<(Vec<usize>, i32)> {
    let n = items.len();
    let mut out = Vec::new();
    let mut a = items.to_vec();
    let mut c = alloc::vec![0usize; n];
    let mut sign = 1;
    out.push((a.clone(), sign));
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            sign = -sign;
            out.push((a.clone(), sign));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Increasing `k`-subsets of `0..n`.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == i - 1 + n - k {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_signs_match_levi_civita() {
        for n in 0..6 {
            let items: Vec<usize> = (0..n).collect();
            let perms = signed_permutations(&items);
            assert_eq!(perms.len() as f64, factorial(n));
            for (p, s) in perms {
                assert_eq!(levi_civita(&p), s);
            }
        }
    }

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(5, 3).len(), 10);
        assert_eq!(combinations(3, 0), alloc::vec![Vec::<usize>::new()]);
        assert_eq!(combinations(4, 4), alloc::vec![alloc::vec![0, 1, 2, 3]]);
        assert!(combinations(2, 3).is_empty());
    }

    #[test]
    fn repeated_index_is_zero() {
        assert_eq!(levi_civita(&[0, 2, 0]), 0);
        assert_eq!(levi_civita(&[2, 1, 0]), -1);
    }
}
