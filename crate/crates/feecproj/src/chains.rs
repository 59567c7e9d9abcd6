//! Weighted simplicial chains, their masses and boundaries, and the chain
//! view of degrees of freedom.

use crate::alternator::alternators;
use crate::error::{FeecError, Result};
use crate::forms::{trace, PolyForm};
use crate::linalg::{gram_volume, sub, Mat, Vec3};
use crate::poly::{rat_from_f64, Rat};
use crate::quadrature::simplex_rule;
use crate::spaces::{reference_vertex, FeSpace, LocalEvaluator};
use std::cmp::Ordering;

/// `Σ a_i [S_i]` with oriented k-simplices given by vertex coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedChain {
    pub n: usize,
    pub k: usize,
    terms: Vec<(f64, Vec<Vec3>)>,
}

fn cmp_point(a: &Vec3, b: &Vec3) -> Ordering {
    for i in 0..3 {
        match a[i].total_cmp(&b[i]) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Sort vertices, returning the parity of the permutation.
fn sort_with_sign(v: &mut [Vec3]) -> f64 {
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if cmp_point(&v[j], &v[j + 1]) == Ordering::Greater {
                v.swap(j, j + 1);
                sign = -sign;
            }
        }
    }
    sign
}

pub fn simplex_measure(verts: &[Vec3], n: usize) -> f64 {
    let k = verts.len() - 1;
    if k == 0 {
        return 1.0;
    }
    let cols: Vec<Vec3> = verts[1..].iter().map(|p| sub(p, &verts[0])).collect();
    gram_volume(&Mat::from_cols(n, &cols)) / (1..=k).map(|i| i as f64).product::<f64>()
}

impl WeightedChain {
    pub fn empty(n: usize, k: usize) -> Self {
        WeightedChain {
            n,
            k,
            terms: Vec::new(),
        }
    }

    /// Canonicalized chain; fails on a degenerate simplex.
    pub fn new(n: usize, k: usize, terms: Vec<(f64, Vec<Vec3>)>) -> Result<Self> {
        for (i, (_, v)) in terms.iter().enumerate() {
            if v.len() != k + 1 {
                return Err(FeecError::DimensionMismatch {
                    expected: k + 1,
                    found: v.len(),
                });
            }
            if k > 0 && simplex_measure(v, n) <= 1e-14 {
                return Err(FeecError::DegenerateCell { cell: i });
            }
        }
        Ok(WeightedChain { n, k, terms }.canonical())
    }

    pub fn simplex(n: usize, verts: Vec<Vec3>) -> Result<Self> {
        let k = verts.len() - 1;
        WeightedChain::new(n, k, vec![(1.0, verts)])
    }

    fn canonical(self) -> Self {
        let mut items: Vec<(f64, Vec<Vec3>)> = self
            .terms
            .into_iter()
            .map(|(w, mut v)| {
                let s = sort_with_sign(&mut v);
                (w * s, v)
            })
            .collect();
        items.sort_by(|a, b| {
            a.1.iter()
                .zip(&b.1)
                .map(|(p, q)| cmp_point(p, q))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
        let mut merged: Vec<(f64, Vec<Vec3>)> = Vec::new();
        for (w, v) in items {
            match merged.last_mut() {
                Some(last) if last.1 == v => last.0 += w,
                _ => merged.push((w, v)),
            }
        }
        merged.retain(|(w, _)| *w != 0.0);
        WeightedChain {
            n: self.n,
            k: self.k,
            terms: merged,
        }
    }

    pub fn terms(&self) -> &[(f64, Vec<Vec3>)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn scale(&self, s: f64) -> Self {
        WeightedChain {
            n: self.n,
            k: self.k,
            terms: self.terms.iter().map(|(w, v)| (w * s, v.clone())).collect(),
        }
        .canonical()
    }

    pub fn add(&self, o: &WeightedChain) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(o.terms.iter().cloned());
        WeightedChain {
            n: self.n,
            k: self.k,
            terms,
        }
        .canonical()
    }

    /// `Σ |a_i| vol_k(S_i)`.
    pub fn mass(&self) -> f64 {
        self.terms.iter().map(|(w, v)| w.abs() * simplex_measure(v, self.n)).sum()
    }

    /// Alternating sum of faces; 0-chains have empty boundary.
    pub fn boundary(&self) -> Self {
        if self.k == 0 {
            return WeightedChain::empty(self.n, 0);
        }
        let mut terms = Vec::new();
        for (w, v) in &self.terms {
            for i in 0..v.len() {
                let face: Vec<Vec3> = v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect();
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                terms.push((w * s, face));
            }
        }
        WeightedChain {
            n: self.n,
            k: self.k - 1,
            terms,
        }
        .canonical()
    }

    /// Image under `x ↦ M x + b`; collapsed simplices are dropped.
    pub fn pushforward_affine(&self, m: &Mat, b: &Vec3) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(w, v)| {
                let img: Vec<Vec3> = v
                    .iter()
                    .map(|p| {
                        let q = m.apply(p);
                        [q[0] + b[0], q[1] + b[1], q[2] + b[2]]
                    })
                    .collect();
                (*w, img)
            })
            .filter(|(_, v)| self.k == 0 || simplex_measure(v, self.n) > 0.0)
            .collect();
        WeightedChain {
            n: self.n,
            k: self.k,
            terms,
        }
        .canonical()
    }

    /// `∫_c ω` for a polynomial k-form, exact up to the final rounding.
    pub fn integrate(&self, omega: &PolyForm) -> f64 {
        self.terms
            .iter()
            .map(|(w, v)| {
                let verts: Vec<Vec<Rat>> = v.iter().map(|p| (0..self.n).map(|i| rat_from_f64(p[i])).collect()).collect();
                w * crate::poly::rat_to_f64(&trace(&verts, omega).integrate_top())
            })
            .sum()
    }
}

/// Upper bound `δ (l^k |α|_k + l^{k−1} |∂α|_{k−1})` with `l = max(lip, 1)`.
pub fn deformation_bound(c: &WeightedChain, displacement_sup: f64, lip: f64) -> f64 {
    let l = lip.max(1.0);
    let k = c.k as i32;
    let bterm = if c.k == 0 { 0.0 } else { l.powi(k - 1) * c.boundary().mass() };
    displacement_sup * (l.powi(k) * c.mass() + bterm)
}

/// Masses of the chains `α_η` attached to weight forms on one simplex.
///
/// `mass` is `‖⋆η‖_{L¹(F)}`; `boundary_mass` sums `‖⋆dη‖_{L¹(F)}` and
/// `‖⋆tr_G η‖_{L¹(G)}` over the facets `G` of `F`.
pub struct FaceMassOperator {
    ncomp: usize,
    nweights: usize,
    interior: Block,
    derivative: Block,
    facets: Vec<Block>,
}

/// Quadrature data: per node the weight, and per basis element the values.
struct Block {
    ncomp: usize,
    metric: Vec<Vec<f64>>,
    nodes: Vec<(f64, Vec<f64>)>,
}

impl Block {
    fn build(forms: &[PolyForm], geo: &[Vec3], n: usize, degree: usize) -> Block {
        let m = geo.len() - 1;
        let j = forms[0].k();
        let ncomp = crate::alternator::binom(m, j);
        let cols: Vec<Vec3> = geo[1..].iter().map(|p| sub(p, &geo[0])).collect();
        let jac = Mat::from_cols(n, &cols);
        let g = jac.transpose().mul(&jac);
        let vol = g.det().max(0.0).sqrt();
        let metric = if m == 0 {
            vec![vec![1.0]]
        } else {
            g.inverse().expect("non-degenerate face").compound(j)
        };
        let rule = simplex_rule(m, degree).expect("supported degree");
        let ev = LocalEvaluator::new(forms, m, j);
        let mut nodes = Vec::with_capacity(rule.len());
        for (t, w) in rule.points.iter().zip(&rule.weights) {
            let mut vals = vec![0.0; forms.len() * ncomp];
            ev.eval(&t[..m], &mut vals);
            nodes.push((w * vol, vals));
        }
        Block { ncomp, metric, nodes }
    }

    fn l1(&self, a: &[f64]) -> f64 {
        let mut acc = 0.0;
        let mut v = [0.0; 3];
        for (w, vals) in &self.nodes {
            for c in 0..self.ncomp {
                v[c] = a.iter().enumerate().map(|(b, ab)| ab * vals[b * self.ncomp + c]).sum();
            }
            acc += w * self.norm(&v[..self.ncomp]);
        }
        acc
    }

    fn norm(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, vi) in v.iter().enumerate() {
            for (j, vj) in v.iter().enumerate() {
                s += vi * vj * self.metric[i][j];
            }
        }
        s.max(0.0).sqrt()
    }
}

pub const CHAIN_QUAD_DEGREE: usize = 14;

impl FaceMassOperator {
    /// `geo`: vertices of the face in `R^n`; `weights`: forms on `Δ^m` in the
    /// face coordinates given by `geo`'s vertex order.
    pub fn new(geo: &[Vec3], n: usize, weights: &[PolyForm], degree: usize) -> Self {
        let m = geo.len() - 1;
        let j = weights[0].k();
        let interior = Block::build(weights, geo, n, degree);
        let dforms: Vec<PolyForm> = weights.iter().map(|w| w.d()).collect();
        let derivative = if j < m {
            Block::build(&dforms, geo, n, degree)
        } else {
            Block {
                ncomp: 0,
                metric: Vec::new(),
                nodes: Vec::new(),
            }
        };
        let mut facets = Vec::new();
        if m >= 1 && j < m {
            for mask in alternators(m, m + 1) {
                let idx = crate::alternator::indices(mask);
                let local: Vec<Vec<Rat>> = idx.iter().map(|&i| reference_vertex(m, i)).collect();
                let traced: Vec<PolyForm> = weights.iter().map(|w| trace(&local, w)).collect();
                let sub_geo: Vec<Vec3> = idx.iter().map(|&i| geo[i]).collect();
                facets.push(Block::build(&traced, &sub_geo, n, degree));
            }
        }
        FaceMassOperator {
            ncomp: interior.ncomp,
            nweights: weights.len(),
            interior,
            derivative,
            facets,
        }
    }

    pub fn nweights(&self) -> usize {
        self.nweights
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn mass(&self, a: &[f64]) -> f64 {
        self.interior.l1(a)
    }

    pub fn boundary_mass(&self, a: &[f64]) -> f64 {
        let d = if self.derivative.nodes.is_empty() { 0.0 } else { self.derivative.l1(a) };
        d + self.facets.iter().map(|f| f.l1(a)).sum::<f64>()
    }
}

/// Mass and boundary mass of the chain of one weight form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChainMasses {
    pub mass: f64,
    pub boundary_mass: f64,
}

pub fn weight_chain_masses(geo: &[Vec3], n: usize, eta: &PolyForm) -> ChainMasses {
    let op = FaceMassOperator::new(geo, n, std::slice::from_ref(eta), CHAIN_QUAD_DEGREE);
    ChainMasses {
        mass: op.mass(&[1.0]),
        boundary_mass: op.boundary_mass(&[1.0]),
    }
}

/// The chain pair of a global degree of freedom.
pub fn dof_as_chain_pair(space: &FeSpace, g: usize) -> ChainMasses {
    let d = space.dofs()[g];
    let geo = space.mesh().simplex_coords(d.face_dim, d.face);
    let eta = &space.reference().weights[d.face_dim][d.eta];
    weight_chain_masses(&geo, space.n(), eta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Vec3 {
        [x, y, 0.0]
    }

    #[test]
    fn masses_and_cancellation() {
        let e = WeightedChain::simplex(2, vec![p(0.0, 0.0), p(1.0, 0.0)]).unwrap();
        assert_eq!(e.scale(2.0).mass(), 2.0);
        assert!(e.add(&e.scale(-1.0)).is_empty());
        let t = WeightedChain::simplex(2, vec![p(0.0, 0.0), p(1.0, 0.0), p(0.0, 1.0)]).unwrap();
        assert!((t.boundary().mass() - (2.0 + 2f64.sqrt())).abs() < 1e-15);
        assert!(t.boundary().boundary().is_empty());
    }

    #[test]
    fn edge_boundary() {
        let e = WeightedChain::simplex(2, vec![p(0.0, 0.0), p(1.0, 0.0)]).unwrap();
        let expect = WeightedChain::new(2, 0, vec![(1.0, vec![p(1.0, 0.0)]), (-1.0, vec![p(0.0, 0.0)])]).unwrap();
        assert_eq!(e.boundary(), expect);
    }

    #[test]
    fn deformation_examples() {
        let e = WeightedChain::simplex(2, vec![p(0.0, 0.0), p(1.0, 0.0)]).unwrap();
        assert!((deformation_bound(&e, 0.1, 1.0) - 0.3).abs() < 1e-15);
        assert!((deformation_bound(&e, 0.1, 2.0) - 0.4).abs() < 1e-15);
        let v = WeightedChain::simplex(2, vec![p(0.3, 0.2)]).unwrap();
        assert!((deformation_bound(&v, 0.1, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn edge_weight_chain() {
        let one = PolyForm::scalar(crate::poly::Poly::one(1));
        let m = weight_chain_masses(&[p(0.0, 0.0), p(3.0, 4.0)], 2, &one);
        assert!((m.mass - 5.0).abs() < 1e-13);
        assert!((m.boundary_mass - 2.0).abs() < 1e-13);
        let pt = weight_chain_masses(&[p(0.5, 0.5)], 2, &PolyForm::scalar(crate::poly::Poly::one(0)));
        assert_eq!((pt.mass, pt.boundary_mass), (1.0, 0.0));
    }
}
