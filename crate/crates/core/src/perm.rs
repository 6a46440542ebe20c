//! Permutations of electron labels.

use alloc::vec::Vec;

/// Sign of a permutation given in one-line notation (`+1` even, `-1` odd).
pub fn parity(p: &[usize]) -> i8 {
    let mut seen = alloc::vec![false; p.len()];
    let mut sign = 1i8;
    for start in 0..p.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut i = start;
        while !seen[i] {
            seen[i] = true;
            i = p[i];
            len += 1;
        }
        if len % 2 == 0 {
            sign = -sign;
        }
    }
    sign
}

pub fn is_permutation(p: &[usize]) -> bool {
    let mut seen = alloc::vec![false; p.len()];
    for &i in p {
        if i >= p.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

/// `x_pi`: electron `k` of the result is electron `p[k]` of `x`, each
/// electron occupying `dim` consecutive coordinates.
pub fn permute_electrons<T: Copy>(x: &[T], dim: usize, p: &[usize]) -> Vec<T> {
    debug_assert_eq!(x.len(), dim * p.len());
    p.iter()
        .flat_map(|&src| x[src * dim..(src + 1) * dim].iter().copied())
        .collect()
}

/// Inverse permutation.
pub fn inverse(p: &[usize]) -> Vec<usize> {
    let mut inv = alloc::vec![0; p.len()];
    for (k, &i) in p.iter().enumerate() {
        inv[i] = k;
    }
    inv
}

/// All `n!` permutations of `0..n` in lexicographic order.
#[derive(Clone, Debug)]
pub struct Permutations {
    current: Option<Vec<usize>>,
}

impl Permutations {
    pub fn new(n: usize) -> Self {
        Self {
            current: Some((0..n).collect()),
        }
    }
}

impl Iterator for Permutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let p = self.current.as_mut().unwrap();
        // next lexicographic permutation
        let n = p.len();
        let mut i = n.wrapping_sub(1);
        while i > 0 && i < n && p[i - 1] >= p[i] {
            i -= 1;
        }
        if i == 0 || i >= n {
            self.current = None;
        } else {
            let mut j = n - 1;
            while p[j] <= p[i - 1] {
                j -= 1;
            }
            p.swap(i - 1, j);
            p[i..].reverse();
        }
        Some(out)
    }
}
