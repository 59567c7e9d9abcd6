//! Exact rational linear algebra for small dense systems.

use crate::forms::PolyForm;
use crate::poly::{Exp, Rat};
use num_traits::{One, Zero};
use std::collections::BTreeMap;

/// Row-reduce in place; returns the pivot columns.
pub fn row_reduce(m: &mut [Vec<Rat>]) -> Vec<usize> {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero()) else {
            continue;
        };
        m.swap(r, p);
        let inv = Rat::one() / &m[r][c];
        for v in m[r].iter_mut() {
            *v *= &inv;
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in c..cols {
                    let t = &f * &m[r][j];
                    m[i][j] -= t;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank(m: &[Vec<Rat>]) -> usize {
    let mut w = m.to_vec();
    row_reduce(&mut w).len()
}

/// Inverse of a square matrix, `None` when singular.
pub fn inverse(m: &[Vec<Rat>]) -> Option<Vec<Vec<Rat>>> {
    let n = m.len();
    let mut aug: Vec<Vec<Rat>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { Rat::one() } else { Rat::zero() }));
            r
        })
        .collect();
    let piv = row_reduce(&mut aug);
    if piv.len() < n || piv[n - 1] != n - 1 {
        return None;
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Indexed coefficient vectors for a family of forms sharing `(n, k)`.
pub struct Coefficients {
    keys: BTreeMap<(u8, Exp), usize>,
}

impl Coefficients {
    pub fn new(forms: &[&PolyForm]) -> Self {
        let mut keys = BTreeMap::new();
        for f in forms {
            for (s, p) in f.terms() {
                for e in p.terms().keys() {
                    let len = keys.len();
                    keys.entry((*s, *e)).or_insert(len);
                }
            }
        }
        Coefficients { keys }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Coefficient vector; `None` if the form uses a monomial outside the index.
    pub fn vector(&self, f: &PolyForm) -> Option<Vec<Rat>> {
        let mut v = vec![Rat::zero(); self.keys.len()];
        for (s, p) in f.terms() {
            for (e, c) in p.terms() {
                let i = *self.keys.get(&(*s, *e))?;
                v[i] = c.clone();
            }
        }
        Some(v)
    }
}

/// Rank of the span of the forms.
pub fn form_rank(forms: &[PolyForm]) -> usize {
    let refs: Vec<&PolyForm> = forms.iter().collect();
    let idx = Coefficients::new(&refs);
    let m: Vec<Vec<Rat>> = forms.iter().map(|f| idx.vector(f).unwrap()).collect();
    rank(&m)
}

/// Greedy independent subset, preserving order.
pub fn independent_subset(forms: Vec<PolyForm>) -> Vec<PolyForm> {
    let refs: Vec<&PolyForm> = forms.iter().collect();
    let idx = Coefficients::new(&refs);
    let mut kept: Vec<Vec<Rat>> = Vec::new();
    let mut out = Vec::new();
    for f in forms.iter() {
        let v = idx.vector(f).unwrap();
        kept.push(v);
        if rank(&kept) == kept.len() {
            out.push(f.clone());
        } else {
            kept.pop();
        }
    }
    out
}

/// Whether `f` lies in the span of `basis`.
pub fn in_span(basis: &[PolyForm], f: &PolyForm) -> bool {
    let mut all: Vec<&PolyForm> = basis.iter().collect();
    all.push(f);
    let idx = Coefficients::new(&all);
    let mut m: Vec<Vec<Rat>> = basis.iter().map(|b| idx.vector(b).unwrap()).collect();
    let r0 = rank(&m);
    m.push(idx.vector(f).unwrap());
    rank(&m) == r0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::rat_int;

    #[test]
    fn inverse_of_small_matrix() {
        let m = vec![
            vec![rat_int(2), rat_int(1)],
            vec![rat_int(1), rat_int(1)],
        ];
        let inv = inverse(&m).unwrap();
        assert_eq!(inv[0], vec![rat_int(1), rat_int(-1)]);
        assert_eq!(inv[1], vec![rat_int(-1), rat_int(2)]);
        let s = vec![vec![rat_int(1), rat_int(2)], vec![rat_int(2), rat_int(4)]];
        assert!(inverse(&s).is_none());
        assert_eq!(rank(&s), 1);
    }
}
