//! Multivariate polynomials in at most three variables with exact rational
//! coefficients.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;

pub type Rat = BigRational;
/// Exponent vector; unused trailing slots stay zero.
pub type Exp = [u8; 3];

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(v: i64) -> Rat {
    Rat::from_integer(BigInt::from(v))
}

/// Exact rational value of a finite float.
pub fn rat_from_f64(v: f64) -> Rat {
    Rat::from_float(v).expect("finite float")
}

pub fn rat_to_f64(v: &Rat) -> f64 {
    v.to_f64().unwrap_or_else(|| {
        let n = v.numer().to_f64().unwrap_or(f64::NAN);
        let d = v.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

pub fn exp_degree(e: &Exp) -> u32 {
    e.iter().map(|&x| x as u32).sum()
}

/// All exponent vectors in `n` variables of total degree exactly `d`,
/// in a fixed (graded reverse-lexicographic free) order.
pub fn exponents_of_degree(n: usize, d: u32) -> Vec<Exp> {
    let mut out = Vec::new();
    match n {
        0 => {
            if d == 0 {
                out.push([0, 0, 0]);
            }
        }
        1 => out.push([d as u8, 0, 0]),
        2 => {
            for a in (0..=d).rev() {
                out.push([a as u8, (d - a) as u8, 0]);
            }
        }
        _ => {
            for a in (0..=d).rev() {
                for b in (0..=d - a).rev() {
                    out.push([a as u8, b as u8, (d - a - b) as u8]);
                }
            }
        }
    }
    out
}

/// All exponent vectors of total degree `≤ d`, graded ascending.
pub fn exponents_up_to(n: usize, d: u32) -> Vec<Exp> {
    (0..=d).flat_map(|j| exponents_of_degree(n, j)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly {
    n: usize,
    terms: BTreeMap<Exp, Rat>,
}

impl Poly {
    pub fn zero(n: usize) -> Self {
        Poly {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: Rat) -> Self {
        Poly::monomial(n, [0, 0, 0], c)
    }

    pub fn one(n: usize) -> Self {
        Poly::constant(n, Rat::one())
    }

    pub fn monomial(n: usize, e: Exp, c: Rat) -> Self {
        let mut p = Poly::zero(n);
        if !c.is_zero() {
            p.terms.insert(e, c);
        }
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(n: usize, i: usize) -> Self {
        let mut e = [0u8; 3];
        e[i] = 1;
        Poly::monomial(n, e, Rat::one())
    }

    /// Affine function `Σ a_j x_j + b`.
    pub fn affine(n: usize, a: &[Rat], b: &Rat) -> Self {
        let mut p = Poly::constant(n, b.clone());
        for (j, aj) in a.iter().enumerate() {
            p = &p + &Poly::var(n, j).scale(aj);
        }
        p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &BTreeMap<Exp, Rat> {
        &self.terms
    }

    pub fn coeff(&self, e: &Exp) -> Rat {
        self.terms.get(e).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(exp_degree).max()
    }

    fn add_term(&mut self, e: Exp, c: Rat) {
        if c.is_zero() {
            return;
        }
        let entry = self.terms.entry(e).or_insert_with(Rat::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn scale(&self, s: &Rat) -> Poly {
        if s.is_zero() {
            return Poly::zero(self.n);
        }
        Poly {
            n: self.n,
            terms: self.terms.iter().map(|(e, c)| (*e, c * s)).collect(),
        }
    }

    pub fn deriv(&self, i: usize) -> Poly {
        let mut p = Poly::zero(self.n);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut f = *e;
                f[i] -= 1;
                p.add_term(f, c * rat_int(e[i] as i64));
            }
        }
        p
    }

    pub fn pow(&self, k: u32) -> Poly {
        let mut r = Poly::one(self.n);
        for _ in 0..k {
            r = &r * self;
        }
        r
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut m = rat_to_f64(c);
                for i in 0..self.n {
                    if e[i] > 0 {
                        m *= x[i].powi(e[i] as i32);
                    }
                }
                m
            })
            .sum()
    }

    pub fn eval_rat(&self, x: &[Rat]) -> Rat {
        let mut s = Rat::zero();
        for (e, c) in &self.terms {
            let mut m = c.clone();
            for i in 0..self.n {
                for _ in 0..e[i] {
                    m *= &x[i];
                }
            }
            s += m;
        }
        s
    }

    /// Substitute `x_i = Σ_j rows[i][j] u_j + shift[i]`, giving a polynomial in
    /// `m` variables `u`.
    pub fn compose_affine(&self, m: usize, rows: &[Vec<Rat>], shift: &[Rat]) -> Poly {
        let maxe: Vec<u8> = (0..self.n)
            .map(|i| self.terms.keys().map(|e| e[i]).max().unwrap_or(0))
            .collect();
        let powers: Vec<Vec<Poly>> = (0..self.n)
            .map(|i| {
                let lin = Poly::affine(m, &rows[i], &shift[i]);
                let mut ps = vec![Poly::one(m)];
                for _ in 0..maxe[i] {
                    let next = ps.last().unwrap() * &lin;
                    ps.push(next);
                }
                ps
            })
            .collect();
        let mut out = Poly::zero(m);
        for (e, c) in &self.terms {
            let mut t = Poly::constant(m, c.clone());
            for i in 0..self.n {
                if e[i] > 0 {
                    t = &t * &powers[i][e[i] as usize];
                }
            }
            out = &out + &t;
        }
        out
    }

    /// Exact integral over the reference simplex `Δ^n` in these variables,
    /// using `∫ x^α = α! / (|α| + n)!`.
    pub fn integrate_simplex(&self) -> Rat {
        let mut s = Rat::zero();
        for (e, c) in &self.terms {
            let mut num = BigInt::one();
            for i in 0..self.n {
                num *= factorial(e[i] as u32);
            }
            let den = factorial(exp_degree(e) + self.n as u32);
            s += c * Rat::new(num, den);
        }
        s
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms
            .values()
            .map(|c| rat_to_f64(&c.abs()))
            .fold(0.0, f64::max)
    }

    pub fn to_float(&self) -> FloatPoly {
        FloatPoly {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (rat_to_f64(c), *e))
                .collect(),
        }
    }
}

impl std::ops::Add for &Poly {
    type Output = Poly;
    fn add(self, o: &Poly) -> Poly {
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.add_term(*e, c.clone());
        }
        p
    }
}

impl std::ops::Sub for &Poly {
    type Output = Poly;
    fn sub(self, o: &Poly) -> Poly {
        let mut p = self.clone();
        for (e, c) in &o.terms {
            p.add_term(*e, -c.clone());
        }
        p
    }
}

impl std::ops::Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        self.scale(&-Rat::one())
    }
}

impl std::ops::Mul for &Poly {
    type Output = Poly;
    fn mul(self, o: &Poly) -> Poly {
        let mut p = Poly::zero(self.n.max(o.n));
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                p.add_term(e, ca * cb);
            }
        }
        p
    }
}

/// Floating-point copy of a polynomial for fast evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatPoly {
    pub n: usize,
    pub terms: Vec<(f64, Exp)>,
}

impl FloatPoly {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (c, e) in &self.terms {
            let mut m = *c;
            for i in 0..self.n {
                match e[i] {
                    0 => {}
                    1 => m *= x[i],
                    k => m *= x[i].powi(k as i32),
                }
            }
            s += m;
        }
        s
    }

    /// Gradient, first `n` entries meaningful.
    pub fn grad(&self, x: &[f64]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (c, e) in &self.terms {
            for (j, gj) in g.iter_mut().enumerate().take(self.n) {
                if e[j] == 0 {
                    continue;
                }
                let mut m = *c * e[j] as f64;
                for i in 0..self.n {
                    let p = if i == j { e[i] - 1 } else { e[i] };
                    if p > 0 {
                        m *= x[i].powi(p as i32);
                    }
                }
                *gj += m;
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_moments() {
        let x = Poly::var(2, 0);
        assert_eq!(x.integrate_simplex(), rat(1, 6));
        assert_eq!(Poly::one(2).integrate_simplex(), rat(1, 2));
        let xyz = &(&Poly::var(3, 0) * &Poly::var(3, 1)) * &Poly::var(3, 2);
        assert_eq!(xyz.integrate_simplex(), rat(1, 720));
        assert_eq!((&x * &x).integrate_simplex(), rat(1, 12));
    }

    #[test]
    fn derivative_and_eval() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &(&x * &x) + &(&x * &y).scale(&rat_int(3));
        assert_eq!(p.deriv(0), &x.scale(&rat_int(2)) + &y.scale(&rat_int(3)));
        assert!((p.eval_f64(&[2.0, 1.0]) - 10.0).abs() < 1e-15);
        let g = p.to_float().grad(&[2.0, 1.0]);
        assert!((g[0] - 7.0).abs() < 1e-15 && (g[1] - 6.0).abs() < 1e-15);
    }

    #[test]
    fn composition_with_affine_map() {
        // x = u + v, y = 2v + 1
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let p = &x * &y;
        let rows = vec![vec![rat_int(1), rat_int(1)], vec![rat_int(0), rat_int(2)]];
        let q = p.compose_affine(2, &rows, &[rat_int(0), rat_int(1)]);
        let u = Poly::var(2, 0);
        let v = Poly::var(2, 1);
        let expect = &(&u + &v) * &(&v.scale(&rat_int(2)) + &Poly::one(2));
        assert_eq!(q, expect);
    }

    #[test]
    fn exponent_enumeration_counts() {
        assert_eq!(exponents_up_to(2, 2).len(), 6);
        assert_eq!(exponents_up_to(3, 1).len(), 4);
        assert_eq!(exponents_of_degree(3, 2).len(), 6);
    }
}
