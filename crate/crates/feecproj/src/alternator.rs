//! Basic k-alternators `dx^σ`, stored as bitmasks over `0..n`.
//!
//! The canonical order of `Σ(k, n)` is lexicographic in the increasing index
//! tuple, e.g. `(0,1) < (0,2) < (1,2)`.

/// Binomial coefficient for small arguments.
pub fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// All masks of `Σ(k, n)` in lexicographic order.
pub fn alternators(k: usize, n: usize) -> Vec<u8> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.iter().fold(0u8, |m, &i| m | (1 << i)));
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Position of `mask` in the lexicographic enumeration of `Σ(|mask|, n)`.
pub fn index_of(mask: u8, n: usize) -> usize {
    let k = mask.count_ones() as usize;
    alternators(k, n)
        .iter()
        .position(|&m| m == mask)
        .expect("mask outside Σ(k, n)")
}

/// Increasing index list of a mask.
pub fn indices(mask: u8) -> Vec<usize> {
    (0..8).filter(|i| mask & (1 << i) != 0).collect()
}

/// Sign of `dx^a ∧ dx^b = sign · dx^{a ∪ b}`; zero when the masks overlap.
pub fn wedge_sign(a: u8, b: u8) -> i32 {
    if a & b != 0 {
        return 0;
    }
    // count inversions: pairs (i in a, j in b) with i > j
    let mut inv = 0;
    for i in indices(a) {
        inv += (b & ((1u8 << i) - 1)).count_ones();
    }
    if inv % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Sign of `dx^i ∧ dx^σ` relative to `dx^{σ ∪ {i}}`, for `i ∉ σ`.
pub fn insert_sign(i: usize, sigma: u8) -> i32 {
    if (sigma & ((1u8 << i) - 1)).count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// Mask of the complement of `sigma` in `0..n`.
pub fn complement(sigma: u8, n: usize) -> u8 {
    ((1u16 << n) - 1) as u8 & !sigma
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lex_order_in_three_dimensions() {
        assert_eq!(alternators(2, 3), vec![0b011, 0b101, 0b110]);
        assert_eq!(alternators(0, 3), vec![0]);
        assert_eq!(alternators(3, 3), vec![0b111]);
        assert_eq!(alternators(1, 2), vec![0b01, 0b10]);
    }

    #[test]
    fn counts_match_binomials() {
        for n in 0..=3 {
            for k in 0..=n {
                assert_eq!(alternators(k, n).len(), binom(n, k));
            }
        }
    }

    #[test]
    fn wedge_signs() {
        assert_eq!(wedge_sign(0b01, 0b10), 1);
        assert_eq!(wedge_sign(0b10, 0b01), -1);
        assert_eq!(wedge_sign(0b01, 0b01), 0);
        assert_eq!(wedge_sign(0b100, 0b011), 1);
        assert_eq!(wedge_sign(0b010, 0b101), -1);
    }
}
