//! Quadrature on reference simplices and on the unit ball.
//!
//! Simplex rules are conical (collapsed-coordinate) products of Gauss–Jacobi
//! rules; ball rules combine a radial Gauss rule with a rule on the sphere.

use crate::error::{FeecError, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MAX_DEGREE: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DomainKind {
    Simplex(usize),
    Ball(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub kind: DomainKind,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl QuadratureRule {
    pub fn dim(&self) -> usize {
        match self.kind {
            DomainKind::Simplex(m) | DomainKind::Ball(m) => m,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&[f64; 3]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Gauss–Jacobi rule on `[0, 1]` for the weight `(1 − s)^a s^b`.
pub fn gauss_jacobi01(q: usize, a: usize, b: usize) -> (Vec<f64>, Vec<f64>) {
    let (al, be) = (a as f64, b as f64);
    let ab = al + be;
    let mut jac = DMatrix::<f64>::zeros(q, q);
    for j in 0..q {
        let jf = j as f64;
        let diag = if j == 0 {
            (be - al) / (ab + 2.0)
        } else {
            (be * be - al * al) / ((2.0 * jf + ab) * (2.0 * jf + ab + 2.0))
        };
        jac[(j, j)] = diag;
        if j + 1 < q {
            let i = jf + 1.0;
            let num = 4.0 * i * (i + al) * (i + be) * (i + ab);
            let den = (2.0 * i + ab).powi(2) * (2.0 * i + ab + 1.0) * (2.0 * i + ab - 1.0);
            let off = (num / den).sqrt();
            jac[(j, j + 1)] = off;
            jac[(j + 1, j)] = off;
        }
    }
    // μ0 on [-1, 1], then the change of variables to [0, 1]
    let mu0 = 2f64.powf(ab + 1.0) * factorial(a) * factorial(b) / factorial(a + b + 1);
    let scale = 2f64.powf(-(ab + 1.0));
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..q)
        .map(|i| {
            let x = eig.eigenvalues[i];
            let v0 = eig.eigenvectors[(0, i)];
            ((x + 1.0) / 2.0, mu0 * v0 * v0 * scale)
        })
        .collect();
    pairs.sort_by(|p, r| p.0.partial_cmp(&r.0).unwrap());
    pairs.into_iter().unzip()
}

/// Gauss–Legendre rule on `[lo, hi]`.
pub fn gauss_legendre(q: usize, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_jacobi01(q, 0, 0);
    let h = hi - lo;
    (
        x.iter().map(|t| lo + h * t).collect(),
        w.iter().map(|v| v * h).collect(),
    )
}

/// Rule on `Δ^m` exact for total degree `≤ degree`.
pub fn simplex_rule(m: usize, degree: usize) -> Result<QuadratureRule> {
    if m > 3 || degree > MAX_DEGREE {
        return Err(FeecError::UnsupportedDegree { dim: m, degree });
    }
    if m == 0 {
        return Ok(QuadratureRule {
            kind: DomainKind::Simplex(0),
            points: vec![[0.0; 3]],
            weights: vec![1.0],
            exact_degree: degree,
        });
    }
    let q = (degree + 2) / 2;
    let rules: Vec<(Vec<f64>, Vec<f64>)> =
        (0..m).map(|i| gauss_jacobi01(q, m - 1 - i, 0)).collect();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut idx = vec![0usize; m];
    loop {
        // collapsed coordinates: t_i = s_i Π_{j<i} (1 − s_j)
        let mut p = [0.0; 3];
        let mut rest = 1.0;
        let mut w = 1.0;
        for i in 0..m {
            let s = rules[i].0[idx[i]];
            p[i] = rest * s;
            rest *= 1.0 - s;
            w *= rules[i].1[idx[i]];
        }
        points.push(p);
        weights.push(w);
        let mut i = 0;
        loop {
            if i == m {
                return Ok(QuadratureRule {
                    kind: DomainKind::Simplex(m),
                    points,
                    weights,
                    exact_degree: degree,
                });
            }
            idx[i] += 1;
            if idx[i] < q {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}

/// Rule on the unit sphere `S^{n−1}` exact for polynomials of degree `≤ degree`.
fn sphere_rule(n: usize, degree: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    match n {
        1 => (vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], vec![1.0, 1.0]),
        2 => {
            let k = degree + 1;
            let pts = (0..k)
                .map(|j| {
                    let t = 2.0 * PI * j as f64 / k as f64;
                    [t.cos(), t.sin(), 0.0]
                })
                .collect();
            (pts, vec![2.0 * PI / k as f64; k])
        }
        _ => {
            let k = degree + 1;
            let (zs, wz) = gauss_legendre((degree + 2) / 2, -1.0, 1.0);
            let mut pts = Vec::new();
            let mut ws = Vec::new();
            for (z, w) in zs.iter().zip(&wz) {
                let r = (1.0 - z * z).max(0.0).sqrt();
                for j in 0..k {
                    let t = 2.0 * PI * j as f64 / k as f64;
                    pts.push([r * t.cos(), r * t.sin(), *z]);
                    ws.push(w * 2.0 * PI / k as f64);
                }
            }
            (pts, ws)
        }
    }
}

fn product_rule(
    n: usize,
    degree: usize,
    radial: (Vec<f64>, Vec<f64>),
) -> QuadratureRule {
    let (dirs, dw) = sphere_rule(n, degree);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (r, wr) in radial.0.iter().zip(&radial.1) {
        for (d, w) in dirs.iter().zip(&dw) {
            points.push([r * d[0], r * d[1], r * d[2]]);
            weights.push(wr * w);
        }
    }
    QuadratureRule {
        kind: DomainKind::Ball(n),
        points,
        weights,
        exact_degree: degree,
    }
}

/// Rule on the unit ball `B_1 ⊂ R^n`: radial Gauss–Jacobi × sphere rule.
pub fn ball_rule(n: usize, degree: usize) -> Result<QuadratureRule> {
    if n == 0 || n > 3 || degree > MAX_DEGREE {
        return Err(FeecError::UnsupportedDegree { dim: n, degree });
    }
    let radial = gauss_jacobi01((degree + 2) / 2, 0, n - 1);
    Ok(product_rule(n, degree, radial))
}

/// Radii where the graded radial subdivision breaks: `0, 1/2, 3/4, …, 1`.
pub fn graded_breakpoints() -> Vec<f64> {
    let mut b = vec![0.0];
    for j in 1..=8 {
        b.push(1.0 - 0.5f64.powi(j));
    }
    b.push(1.0);
    b
}

/// Ball rule whose radial part is graded toward `|y| = 1`, where the
/// mollifier is flat; still exact for polynomials of degree `≤ degree`.
pub fn graded_ball_rule(n: usize, degree: usize) -> Result<QuadratureRule> {
    if n == 0 || n > 3 || degree > MAX_DEGREE {
        return Err(FeecError::UnsupportedDegree { dim: n, degree });
    }
    Ok(product_rule(n, degree, graded_radial(n, degree)))
}

fn graded_radial(n: usize, degree: usize) -> (Vec<f64>, Vec<f64>) {
    let q = (degree + n + 1) / 2 + 1;
    let b = graded_breakpoints();
    let mut rs = Vec::new();
    let mut ws = Vec::new();
    for w in b.windows(2) {
        let (x, wx) = gauss_legendre(q, w[0], w[1]);
        for (r, v) in x.iter().zip(&wx) {
            rs.push(*r);
            ws.push(v * r.powi(n as i32 - 1));
        }
    }
    (rs, ws)
}

/// Volume of the unit ball.
pub fn ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => f64::NAN,
    }
}

/// Unnormalized mollifier `exp(−1/(1 − |y|²))` on `|y| < 1`, zero outside.
pub fn bump(r2: f64) -> f64 {
    if r2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r2)).exp()
    }
}

/// `∫_{B_1} exp(−1/(1−|y|²)) dy` with the graded radial rule of the given
/// order; the integrand is radial so only the radial rule matters.
pub fn integrate_mollifier(n: usize, rule_degree: usize) -> f64 {
    let sphere = match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 4.0 * PI,
    };
    let (rs, ws) = graded_radial(n, rule_degree);
    sphere * rs.iter().zip(&ws).map(|(r, w)| w * bump(r * r)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_moments() {
        let r = simplex_rule(2, 0).unwrap();
        assert!((r.weights.iter().sum::<f64>() - 0.5).abs() < 1e-15);
        let r = simplex_rule(2, 1).unwrap();
        assert!((r.integrate(|p| p[0]) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn tetrahedron_triple_product() {
        let r = simplex_rule(3, 3).unwrap();
        assert!((r.integrate(|p| p[0] * p[1] * p[2]) - 1.0 / 720.0).abs() < 1e-16);
    }

    #[test]
    fn disk_moments() {
        let r = ball_rule(2, 0).unwrap();
        assert!((r.weights.iter().sum::<f64>() - PI).abs() < 1e-13);
        let r = ball_rule(2, 2).unwrap();
        assert!(r.integrate(|p| p[0]).abs() < 1e-15);
        assert!((r.integrate(|p| p[0] * p[0]) - PI / 4.0).abs() < 1e-14);
    }

    #[test]
    fn degree_limits() {
        assert!(simplex_rule(2, 21).is_err());
        assert!(simplex_rule(4, 1).is_err());
        assert!(ball_rule(2, 21).is_err());
    }

    #[test]
    fn mollifier_integral_in_one_dimension() {
        let a = integrate_mollifier(1, 20);
        let b = integrate_mollifier(1, 30);
        assert!((a - b).abs() < 1e-8);
        assert!((a - 0.443994).abs() < 1e-6);
        assert!((1.0 / a - 2.25228).abs() < 1e-4);
    }
}
