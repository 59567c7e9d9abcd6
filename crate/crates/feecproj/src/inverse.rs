//! Empirical inverse-inequality constants of a reference element.
//!
//! All three constants are measured on `Δ^n` after pulling back, so they
//! depend only on the local space and the chosen DOF weight bases.

use crate::alternator::alternators;
use crate::chains::{FaceMassOperator, CHAIN_QUAD_DEGREE};
use crate::error::Result;
use crate::linalg::Vec3;
use crate::quadrature::simplex_rule;
use crate::spaces::{ReferenceElement, SpaceSpec};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Measured constants with the maximizers needed to reproduce them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseConstants {
    pub spec: SpaceSpec,
    pub n: usize,
    pub p: f64,
    /// `‖φ‖_∞ ≤ C_♭ ‖φ‖_p` on the reference simplex.
    pub c_flat: f64,
    /// `|∂S|_{k−1} ≤ C_∂ |S|_k` for reference DOF chains.
    pub c_boundary: f64,
    /// `‖I ω‖_∞ ≤ C_I sup_S |S|^{-1} ∫_S ω` on the reference simplex.
    pub c_interp: f64,
    /// Face (vertex mask of `Δ^n`) and weight coefficients attaining `c_boundary`.
    pub boundary_argmax: Option<(u8, Vec<f64>)>,
    pub basis_choice: String,
}

pub const BASIS_CHOICE: &str =
    "weights: monomials in face coordinates, Koszul-completed for trimmed spaces; basis dual to the DOFs";

/// Coordinate search from several starts; returns the best value and point.
pub fn maximize(f: &dyn Fn(&[f64]) -> f64, starts: &[Vec<f64>], rounds: usize) -> (f64, Vec<f64>) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for s in starts {
        let mut x = s.clone();
        let mut fx = f(&x);
        let mut step = 0.5 * x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-3);
        for _ in 0..rounds {
            let mut improved = false;
            for i in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let old = x[i];
                    x[i] = old + dir * step;
                    let v = f(&x);
                    if v > fx {
                        fx = v;
                        improved = true;
                        break;
                    }
                    x[i] = old;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if fx > best.0 {
            best = (fx, x);
        }
    }
    best
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; adequate for search directions
    let u: f64 = rng.gen_range(1e-12..1.0);
    let v: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

fn random_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| normal(rng)).collect()
}

fn top_starts(f: &dyn Fn(&[f64]) -> f64, cands: Vec<Vec<f64>>, keep: usize) -> Vec<Vec<f64>> {
    let mut scored: Vec<(f64, Vec<f64>)> = cands.into_iter().map(|c| (f(&c), c)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().take(keep).map(|(_, c)| c).collect()
}

/// Nodes and basis values used for sup and `L^p` evaluations on `Δ^n`.
struct Sampler {
    ncomp: usize,
    dim: usize,
    weights: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl Sampler {
    fn new(el: &ReferenceElement) -> Result<Sampler> {
        let n = el.n;
        let degree = (2 * el.spec.r + 6).min(crate::quadrature::MAX_DEGREE);
        let rule = simplex_rule(n, degree)?;
        let ncomp = el.eval.ncomp();
        let dim = el.dim();
        let mut pts: Vec<Vec3> = rule.points.clone();
        let mut weights = rule.weights.clone();
        for i in 0..=n {
            let mut v = [0.0; 3];
            if i > 0 {
                v[i - 1] = 1.0;
            }
            pts.push(v);
            weights.push(0.0);
        }
        let values = pts
            .iter()
            .map(|u| {
                let mut out = vec![0.0; dim * ncomp];
                el.eval.eval(&u[..n], &mut out);
                out
            })
            .collect();
        Ok(Sampler {
            ncomp,
            dim,
            weights,
            values,
        })
    }

    fn point_norm(&self, q: usize, c: &[f64]) -> f64 {
        let vals = &self.values[q];
        let mut s = 0.0;
        for comp in 0..self.ncomp {
            let v: f64 = c.iter().enumerate().map(|(i, ci)| ci * vals[i * self.ncomp + comp]).sum();
            s += v * v;
        }
        s.sqrt()
    }

    fn sup(&self, c: &[f64]) -> f64 {
        (0..self.values.len()).map(|q| self.point_norm(q, c)).fold(0.0, f64::max)
    }

    fn lp(&self, c: &[f64], p: f64) -> f64 {
        if p.is_infinite() {
            return self.sup(c);
        }
        let s: f64 = (0..self.values.len())
            .filter(|&q| self.weights[q] > 0.0)
            .map(|q| self.weights[q] * self.point_norm(q, c).powf(p))
            .sum();
        s.powf(1.0 / p)
    }

    fn gram(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (q, vals) in self.values.iter().enumerate() {
            let w = self.weights[q];
            if w == 0.0 {
                continue;
            }
            for i in 0..self.dim {
                for j in 0..self.dim {
                    let mut s = 0.0;
                    for c in 0..self.ncomp {
                        s += vals[i * self.ncomp + c] * vals[j * self.ncomp + c];
                    }
                    m[(i, j)] += w * s;
                }
            }
        }
        m
    }
}

fn measure_flat(s: &Sampler, p: f64, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    if p.is_infinite() {
        return 1.0;
    }
    // exact node maximum for p = 2 via the Gram matrix
    let gram = s.gram();
    let chol = gram.clone().cholesky().expect("basis is independent");
    let mut best2 = 0.0f64;
    let mut best_dir = vec![1.0; s.dim];
    for vals in &s.values {
        let phi = DMatrix::from_fn(s.ncomp, s.dim, |c, i| vals[i * s.ncomp + c]);
        let sol = chol.solve(&phi.transpose());
        let small = &phi * &sol;
        let eig = SymmetricEigen::new(small);
        let (imax, lmax) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
        if lmax > best2 {
            best2 = lmax;
            let dir: DVector<f64> = &sol * eig.eigenvectors.column(imax);
            best_dir = dir.iter().cloned().collect();
        }
    }
    if p == 2.0 {
        return best2.max(0.0).sqrt();
    }
    let f = |c: &[f64]| {
        let den = s.lp(c, p);
        if den <= 0.0 {
            0.0
        } else {
            s.sup(c) / den
        }
    };
    let mut cands: Vec<Vec<f64>> = (0..s.dim)
        .map(|i| (0..s.dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    cands.push(best_dir);
    cands.extend((0..samples).map(|_| random_vec(s.dim, rng)));
    let starts = top_starts(&f, cands, 3);
    maximize(&f, &starts, 12).0
}

fn reference_face(mask: u8) -> Vec<Vec3> {
    crate::alternator::indices(mask)
        .iter()
        .map(|&i| {
            let mut v = [0.0; 3];
            if i > 0 {
                v[i - 1] = 1.0;
            }
            v
        })
        .collect()
}

/// Mass operators for every DOF face of `Δ^n` with nonempty weights.
fn face_operators(el: &ReferenceElement) -> Vec<(u8, usize, FaceMassOperator)> {
    let n = el.n;
    let mut out = Vec::new();
    for m in 0..=n {
        if el.weights[m].is_empty() {
            continue;
        }
        for mask in alternators(m + 1, n + 1) {
            out.push((mask, m, FaceMassOperator::new(&reference_face(mask), n, &el.weights[m], CHAIN_QUAD_DEGREE)));
        }
    }
    out
}

/// `|∂S| / |S|` for the chain of the weight combination `coeffs` on the
/// reference face `mask`; replays a maximizer of `C_∂`.
pub fn boundary_ratio(el: &ReferenceElement, mask: u8, coeffs: &[f64]) -> f64 {
    let m = mask.count_ones() as usize - 1;
    let op = FaceMassOperator::new(&reference_face(mask), el.n, &el.weights[m], CHAIN_QUAD_DEGREE);
    op.boundary_mass(coeffs) / op.mass(coeffs)
}

fn measure_boundary(
    el: &ReferenceElement,
    ops: &[(u8, usize, FaceMassOperator)],
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, Option<(u8, Vec<f64>)>) {
    if el.spec.k == 0 {
        return (0.0, None);
    }
    let mut best = (0.0f64, None);
    for (mask, _, op) in ops {
        let nw = op.nweights();
        let f = |a: &[f64]| {
            let m = op.mass(a);
            if m <= 1e-300 {
                0.0
            } else {
                op.boundary_mass(a) / m
            }
        };
        let mut cands: Vec<Vec<f64>> = (0..nw)
            .map(|i| (0..nw).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let per_face = (samples / ops.len().max(1)).max(8);
        cands.extend((0..per_face).map(|_| random_vec(nw, rng)));
        let starts = top_starts(&f, cands, 2);
        let (v, a) = maximize(&f, &starts, 10);
        if v > best.0 {
            best = (v, Some((*mask, a)));
        }
    }
    best
}

/// Unit directions on `S^{c−1}` used to search the covector direction.
fn sphere_directions(c: usize, count: usize) -> Vec<[f64; 3]> {
    match c {
        1 => vec![[1.0, 0.0, 0.0]],
        2 => (0..count)
            .map(|i| {
                let t = std::f64::consts::PI * i as f64 / count as f64;
                [t.cos(), t.sin(), 0.0]
            })
            .collect(),
        _ => {
            // Fibonacci points on the upper half sphere suffice (norms are even)
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * i as f64;
                    [r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
    }
}

/// `C_I` through duality: the DOF faces partition the coefficients, so the
/// dual of `v ↦ max_F sup_a |a·v_F| / mass_F(a)` is `w ↦ Σ_F mass_F(w_F)`,
/// and `C_I = max_x max_{|e|=1} Σ_F mass_F((e·φ_j(x))_{j∈F})`.
fn measure_interp(el: &ReferenceElement, s: &Sampler, ops: &[(u8, usize, FaceMassOperator)]) -> f64 {
    let groups: Vec<Vec<usize>> = ops
        .iter()
        .map(|(mask, m, _)| {
            el.dofs
                .iter()
                .enumerate()
                .filter(|(_, d)| d.mask == *mask && d.face_dim == *m)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let nc = s.ncomp;
    let value = |q: usize, e: &[f64; 3]| -> f64 {
        let vals = &s.values[q];
        ops.iter()
            .zip(&groups)
            .map(|((_, _, op), g)| {
                let a: Vec<f64> = g
                    .iter()
                    .map(|&i| (0..nc).map(|c| e[c] * vals[i * nc + c]).sum())
                    .collect();
                op.mass(&a)
            })
            .sum()
    };
    let coarse = sphere_directions(nc, 24);
    let mut scored: Vec<(f64, usize, [f64; 3])> = Vec::new();
    for q in 0..s.values.len() {
        let mut best = (f64::NEG_INFINITY, [0.0; 3]);
        for e in &coarse {
            let v = value(q, e);
            if v > best.0 {
                best = (v, *e);
            }
        }
        scored.push((best.0, q, best.1));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut result = scored.first().map_or(0.0, |s| s.0);
    if nc == 1 {
        return result;
    }
    for &(v0, q, e0) in scored.iter().take(6) {
        let f = |x: &[f64]| {
            let mut e = [0.0; 3];
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm == 0.0 {
                return 0.0;
            }
            for c in 0..nc {
                e[c] = x[c] / nrm;
            }
            value(q, &e)
        };
        let (v, _) = maximize(&f, &[e0[..nc].to_vec()], 30);
        result = result.max(v.max(v0));
    }
    result
}

/// Measure `C_♭,p`, `C_∂` and `C_I` for a local space.
pub fn measure_inverse_constants(spec: SpaceSpec, n: usize, p: f64, samples: usize, seed: u64) -> Result<InverseConstants> {
    let el = ReferenceElement::get(spec, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = Sampler::new(&el)?;
    let c_flat = measure_flat(&sampler, p, samples, &mut rng);
    let ops = face_operators(&el);
    let (c_boundary, boundary_argmax) = measure_boundary(&el, &ops, samples, &mut rng);
    let c_interp = measure_interp(&el, &sampler, &ops);
    Ok(InverseConstants {
        spec,
        n,
        p,
        c_flat,
        c_boundary,
        c_interp,
        boundary_argmax,
        basis_choice: BASIS_CHOICE.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_constant_bounds() {
        let c = measure_inverse_constants(SpaceSpec::minus(1, 1), 2, f64::INFINITY, 50, 1).unwrap();
        assert_eq!(c.c_flat, 1.0);
        let c2 = measure_inverse_constants(SpaceSpec::minus(1, 1), 2, 2.0, 50, 1).unwrap();
        assert!(c2.c_flat > 1.0);
    }

    #[test]
    fn vertex_dofs_have_no_boundary() {
        let c = measure_inverse_constants(SpaceSpec::full(1, 0), 2, 2.0, 20, 3).unwrap();
        assert_eq!(c.c_boundary, 0.0);
        assert!(c.c_interp >= 1.0 - 1e-12);
    }
}
