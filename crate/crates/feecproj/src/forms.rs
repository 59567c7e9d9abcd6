//! Differential forms with exact polynomial coefficients.

use crate::alternator::{alternators, index_of, indices, insert_sign, wedge_sign};
use crate::error::{FeecError, Result};
use crate::poly::{rat_to_f64, FloatPoly, Poly, Rat};
use num_traits::{One, Zero};
use std::collections::BTreeMap;

/// `ω = Σ_σ ω_σ dx^σ` with rational polynomial coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyForm {
    n: usize,
    k: usize,
    terms: BTreeMap<u8, Poly>,
}

impl PolyForm {
    pub fn zero(n: usize, k: usize) -> Self {
        PolyForm {
            n,
            k,
            terms: BTreeMap::new(),
        }
    }

    /// The basic alternator `dx^σ` with coefficient 1.
    pub fn basic(n: usize, sigma: u8) -> Self {
        let mut f = PolyForm::zero(n, sigma.count_ones() as usize);
        f.terms.insert(sigma, Poly::one(n));
        f
    }

    /// A 0-form.
    pub fn scalar(p: Poly) -> Self {
        let n = p.n();
        let mut f = PolyForm::zero(n, 0);
        f.set(0, p);
        f
    }

    /// Build from components listed in lexicographic alternator order.
    pub fn from_components(n: usize, k: usize, comps: Vec<Poly>) -> Self {
        let mut f = PolyForm::zero(n, k);
        for (s, p) in alternators(k, n).into_iter().zip(comps) {
            f.set(s, p);
        }
        f
    }

    fn set(&mut self, sigma: u8, p: Poly) {
        if p.is_zero() {
            self.terms.remove(&sigma);
        } else {
            self.terms.insert(sigma, p);
        }
    }

    fn accumulate(&mut self, sigma: u8, p: &Poly) {
        if p.is_zero() {
            return;
        }
        let next = match self.terms.get(&sigma) {
            Some(q) => q + p,
            None => p.clone(),
        };
        self.set(sigma, next);
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn terms(&self) -> &BTreeMap<u8, Poly> {
        &self.terms
    }

    pub fn component(&self, sigma: u8) -> Poly {
        self.terms.get(&sigma).cloned().unwrap_or_else(|| Poly::zero(self.n))
    }

    /// Components in lexicographic alternator order.
    pub fn components(&self) -> Vec<Poly> {
        alternators(self.k, self.n)
            .into_iter()
            .map(|s| self.component(s))
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.values().filter_map(|p| p.degree()).max()
    }

    fn check_same(&self, o: &PolyForm) -> Result<()> {
        if self.n != o.n {
            return Err(FeecError::DimensionMismatch {
                expected: self.n,
                found: o.n,
            });
        }
        Ok(())
    }

    pub fn add(&self, o: &PolyForm) -> Result<PolyForm> {
        self.check_same(o)?;
        if self.k != o.k {
            return Err(FeecError::DimensionMismatch {
                expected: self.k,
                found: o.k,
            });
        }
        let mut r = self.clone();
        for (s, p) in &o.terms {
            r.accumulate(*s, p);
        }
        Ok(r)
    }

    pub fn sub(&self, o: &PolyForm) -> Result<PolyForm> {
        self.add(&o.scale(&-Rat::one()))
    }

    pub fn scale(&self, c: &Rat) -> PolyForm {
        let mut r = PolyForm::zero(self.n, self.k);
        if c.is_zero() {
            return r;
        }
        for (s, p) in &self.terms {
            r.set(*s, p.scale(c));
        }
        r
    }

    pub fn mul_poly(&self, q: &Poly) -> PolyForm {
        let mut r = PolyForm::zero(self.n, self.k);
        for (s, p) in &self.terms {
            r.set(*s, p * q);
        }
        r
    }

    pub fn wedge(&self, o: &PolyForm) -> Result<PolyForm> {
        self.check_same(o)?;
        let mut r = PolyForm::zero(self.n, self.k + o.k);
        if self.k + o.k > self.n {
            return Ok(r);
        }
        for (a, p) in &self.terms {
            for (b, q) in &o.terms {
                let sg = wedge_sign(*a, *b);
                if sg == 0 {
                    continue;
                }
                let prod = p * q;
                let prod = if sg < 0 { -&prod } else { prod };
                r.accumulate(a | b, &prod);
            }
        }
        Ok(r)
    }

    /// Exterior derivative.
    pub fn d(&self) -> PolyForm {
        let mut r = PolyForm::zero(self.n, self.k + 1);
        if self.k >= self.n {
            return r;
        }
        for (s, p) in &self.terms {
            for i in 0..self.n {
                if s & (1 << i) != 0 {
                    continue;
                }
                let dp = p.deriv(i);
                if dp.is_zero() {
                    continue;
                }
                let dp = if insert_sign(i, *s) < 0 { -&dp } else { dp };
                r.accumulate(s | (1 << i), &dp);
            }
        }
        r
    }

    /// Contraction with the source field `X(x) = x`.
    pub fn koszul(&self) -> Result<PolyForm> {
        if self.k == 0 {
            return Err(FeecError::ZeroFormContraction);
        }
        let mut r = PolyForm::zero(self.n, self.k - 1);
        for (s, p) in &self.terms {
            for (j, &i) in indices(*s).iter().enumerate() {
                let t = &Poly::var(self.n, i) * p;
                let t = if j % 2 == 1 { -&t } else { t };
                r.accumulate(s & !(1 << i), &t);
            }
        }
        Ok(r)
    }

    /// Pullback along `u ↦ M u + b` with `M` of size `n × m` (rows given).
    pub fn pullback_affine(&self, m: usize, rows: &[Vec<Rat>], shift: &[Rat]) -> PolyForm {
        let mut r = PolyForm::zero(m, self.k);
        if self.k > m {
            return r;
        }
        let targets = alternators(self.k, m);
        for (s, p) in &self.terms {
            let pc = p.compose_affine(m, rows, shift);
            if pc.is_zero() {
                continue;
            }
            for &t in &targets {
                let det = rat_minor(rows, *s, t);
                if det.is_zero() {
                    continue;
                }
                r.accumulate(t, &pc.scale(&det));
            }
        }
        r
    }

    /// Exact integral of an n-form over the reference simplex `Δ^n`.
    pub fn integrate_top(&self) -> Rat {
        assert_eq!(self.k, self.n, "integrate_top needs an n-form");
        self.component(((1u16 << self.n) - 1) as u8).integrate_simplex()
    }

    pub fn to_float(&self) -> FloatForm {
        FloatForm {
            n: self.n,
            k: self.k,
            comps: self.components().iter().map(|p| p.to_float()).collect(),
        }
    }

    pub fn eval_f64(&self, x: &[f64]) -> Vec<f64> {
        self.components().iter().map(|p| p.eval_f64(x)).collect()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().map(|p| p.max_abs_coeff()).fold(0.0, f64::max)
    }
}

/// Determinant of the submatrix of `rows` on row set `r` and column set `c`.
pub fn rat_minor(rows: &[Vec<Rat>], r: u8, c: u8) -> Rat {
    let ri = indices(r);
    let ci = indices(c);
    let m: Vec<Vec<Rat>> = ri
        .iter()
        .map(|&i| ci.iter().map(|&j| rows[i][j].clone()).collect())
        .collect();
    rat_det(&m)
}

pub fn rat_det(m: &[Vec<Rat>]) -> Rat {
    match m.len() {
        0 => Rat::one(),
        1 => m[0][0].clone(),
        2 => &m[0][0] * &m[1][1] - &m[0][1] * &m[1][0],
        n => {
            let mut s = Rat::zero();
            for j in 0..n {
                let sub: Vec<Vec<Rat>> = m[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(c, _)| *c != j)
                            .map(|(_, v)| v.clone())
                            .collect()
                    })
                    .collect();
                let t = &m[0][j] * rat_det(&sub);
                if j % 2 == 0 {
                    s += t;
                } else {
                    s -= t;
                }
            }
            s
        }
    }
}

/// Affine embedding `t ↦ v_0 + Σ t_j (v_j − v_0)` of a simplex given by
/// rational vertices; returns `(rows, shift)` for [`PolyForm::pullback_affine`].
pub fn simplex_embedding(vertices: &[Vec<Rat>]) -> (Vec<Vec<Rat>>, Vec<Rat>) {
    let n = vertices[0].len();
    let m = vertices.len() - 1;
    let rows = (0..n)
        .map(|i| (1..=m).map(|j| &vertices[j][i] - &vertices[0][i]).collect())
        .collect();
    (rows, vertices[0].clone())
}

/// Trace onto a simplex given by vertices (a pullback along its embedding).
pub fn trace(vertices: &[Vec<Rat>], omega: &PolyForm) -> PolyForm {
    let (rows, shift) = simplex_embedding(vertices);
    omega.pullback_affine(vertices.len() - 1, &rows, &shift)
}

/// Floating-point copy of a form for evaluation in hot loops.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatForm {
    pub n: usize,
    pub k: usize,
    pub comps: Vec<FloatPoly>,
}

impl FloatForm {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.comps.iter().map(|p| p.eval(x)).collect()
    }

    /// Gradient of every component: `out[c][j] = ∂_j ω_c`.
    pub fn grad(&self, x: &[f64]) -> Vec<[f64; 3]> {
        self.comps.iter().map(|p| p.grad(x)).collect()
    }
}

/// Whether a piecewise form is known to have single-valued traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Continuity {
    None,
    Tangential,
}

/// One polynomial form per mesh cell, in global coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseForm {
    pub n: usize,
    pub k: usize,
    pub cells: Vec<PolyForm>,
    pub continuity: Continuity,
}

impl PiecewiseForm {
    pub fn new(cells: Vec<PolyForm>, continuity: Continuity) -> Self {
        let n = cells[0].n();
        let k = cells[0].k();
        PiecewiseForm {
            n,
            k,
            cells,
            continuity,
        }
    }

    /// The same global polynomial form on every cell.
    pub fn uniform(omega: &PolyForm, ncells: usize) -> Self {
        PiecewiseForm::new(vec![omega.clone(); ncells], Continuity::Tangential)
    }

    pub fn d(&self) -> PiecewiseForm {
        PiecewiseForm::new(self.cells.iter().map(|c| c.d()).collect(), self.continuity)
    }

    pub fn to_float(&self) -> Vec<FloatForm> {
        self.cells.iter().map(|c| c.to_float()).collect()
    }
}

/// `L^p` norm of a piecewise form by cellwise quadrature of `|ω|^p`.
///
/// For `p = ∞` the result is the maximum over quadrature nodes and cell
/// vertices, a lower estimate of the essential supremum.
pub fn lp_norm(
    mesh: &crate::mesh::Triangulation,
    omega: &PiecewiseForm,
    p: f64,
    quad_degree: usize,
) -> Result<f64> {
    let n = mesh.n();
    let rule = crate::quadrature::simplex_rule(n, quad_degree)?;
    let floats = omega.to_float();
    let mut acc = 0.0f64;
    for (c, f) in floats.iter().enumerate() {
        let chart = mesh.chart(c);
        let vol = chart.det.abs();
        let mut pts: Vec<[f64; 3]> = rule.points.iter().map(|u| chart.map(u)).collect();
        if p.is_infinite() {
            pts.extend(mesh.cell_coords(c));
        }
        for (q, x) in pts.iter().enumerate() {
            let v = f.eval(x);
            let mag = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if p.is_infinite() {
                acc = acc.max(mag);
            } else {
                acc += rule.weights[q] * vol * mag.powf(p);
            }
        }
    }
    Ok(if p.is_infinite() { acc } else { acc.powf(1.0 / p) })
}

/// Wedge of a `ka`-covector and a `kb`-covector in `R^n` (lexicographic
/// components).
pub fn wedge_covectors(n: usize, ka: usize, a: &[f64], kb: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; crate::alternator::binom(n, ka + kb)];
    if ka + kb > n {
        return out;
    }
    for (i, &sa) in alternators(ka, n).iter().enumerate() {
        if a[i] == 0.0 {
            continue;
        }
        for (j, &sb) in alternators(kb, n).iter().enumerate() {
            let sg = wedge_sign(sa, sb);
            if sg != 0 {
                out[index_of(sa | sb, n)] += sg as f64 * a[i] * b[j];
            }
        }
    }
    out
}

/// `dα` at a point from the partial derivatives `partials[c][j] = ∂_j α_c`
/// of a k-form.
pub fn d_from_partials(n: usize, k: usize, partials: &[[f64; 3]]) -> Vec<f64> {
    let mut out = vec![0.0; crate::alternator::binom(n, k + 1)];
    if k >= n {
        return out;
    }
    for (c, &s) in alternators(k, n).iter().enumerate() {
        for i in 0..n {
            if s & (1 << i) == 0 {
                out[index_of(s | (1 << i), n)] += insert_sign(i, s) as f64 * partials[c][i];
            }
        }
    }
    out
}

/// `b(x) = Π_i (1 − (x_i/a_i)²)²` on the centred box `|x_i| ≤ a_i`: a `C¹`
/// bump with peak 1 that vanishes with its gradient on the box boundary.
/// Written in centred coordinates so that evaluation stays well conditioned.
pub fn box_bump(n: usize, half: &[Rat]) -> Poly {
    let mut b = Poly::one(n);
    for (i, a) in half.iter().enumerate().take(n) {
        let x = Poly::var(n, i).scale(&(Rat::one() / a));
        let f = (&Poly::one(n) - &(&x * &x)).pow(2);
        b = &b * &f;
    }
    b
}

/// Random test form of degree `k` supported in the centred box with the
/// given half widths: the box bump times affine coefficients with small
/// integer entries.
pub fn box_test_form(n: usize, k: usize, half: &[Rat], rng: &mut impl rand::Rng) -> PolyForm {
    let bump = box_bump(n, half);
    let comps = alternators(k, n)
        .iter()
        .map(|_| {
            let mut a: Vec<Rat> = (0..n).map(|_| crate::poly::rat_int(rng.gen_range(-3..=3))).collect();
            let b = crate::poly::rat_int(rng.gen_range(1..=3) * if rng.gen_bool(0.5) { 1 } else { -1 });
            if rng.gen_bool(0.3) {
                a.iter_mut().for_each(|v| *v = Rat::zero());
            }
            &bump * &Poly::affine(n, &a, &b)
        })
        .collect();
    PolyForm::from_components(n, k, comps)
}

/// A random box inside the domain of `mesh` near a random cell, with
/// dyadic corners; all points of a `5^n` grid over it must lie in the mesh.
pub fn random_inner_box(mesh: &crate::mesh::Triangulation, rng: &mut impl rand::Rng) -> Option<(Vec<Rat>, Vec<Rat>)> {
    let n = mesh.n();
    let dyadic = |v: f64| crate::poly::rat((v * 256.0).round() as i64, 256);
    for attempt in 0..200 {
        let c = rng.gen_range(0..mesh.num_cells());
        let center = crate::mesh::barycenter(&mesh.cell_coords(c));
        // shrink the boxes if they keep leaving the domain
        let h = mesh.diameter(n, c) * 0.5f64.powi(attempt / 20);
        let lo: Vec<Rat> = (0..n).map(|i| dyadic(center[i] - h * rng.gen_range(0.2..0.8))).collect();
        let hi: Vec<Rat> = (0..n).map(|i| dyadic(center[i] + h * rng.gen_range(0.2..0.8))).collect();
        let lf: Vec<f64> = lo.iter().map(rat_to_f64).collect();
        let hf: Vec<f64> = hi.iter().map(rat_to_f64).collect();
        if (0..n).any(|i| hf[i] - lf[i] < 0.05 * h) {
            continue;
        }
        let inside = (0..5usize.pow(n as u32)).all(|g| {
            let mut x = [0.0; 3];
            let mut r = g;
            for i in 0..n {
                x[i] = lf[i] + (hf[i] - lf[i]) * (r % 5) as f64 / 4.0;
                r /= 5;
            }
            mesh.locate_point(&x, 1e-12).is_ok()
        });
        if inside {
            return Some((lo, hi));
        }
    }
    None
}

/// The halfspaces `x_i ≥ lo_i`, `x_i ≤ hi_i` as `(a, β)` with `a·x ≤ β`.
fn box_halfspaces(lo: &[f64], hi: &[f64]) -> Vec<([f64; 3], f64)> {
    let mut out = Vec::new();
    for i in 0..lo.len() {
        let mut a = [0.0; 3];
        a[i] = -1.0;
        out.push((a, -lo[i]));
        let mut b = [0.0; 3];
        b[i] = 1.0;
        out.push((b, hi[i]));
    }
    out
}

/// Largest `|∫ξ∧η − (−1)^{k+1}∫ω∧dη|` over `trials` random box-bump test
/// forms η supported in the domain. Cells are clipped to the box, so the
/// integrals are exact up to roundoff for polynomial data.
pub fn weak_derivative_residual(
    mesh: &crate::mesh::Triangulation,
    omega: &PiecewiseForm,
    xi: &PiecewiseForm,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    use rand::SeedableRng;
    let n = mesh.n();
    let k = omega.k;
    if xi.k != k + 1 {
        return Err(FeecError::DimensionMismatch {
            expected: k + 1,
            found: xi.k,
        });
    }
    if k >= n {
        return Ok(0.0);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let deg = |f: &PiecewiseForm| f.cells.iter().filter_map(|c| c.degree()).max().unwrap_or(0) as usize;
    let wf = omega.to_float();
    let xf = xi.to_float();
    let sign = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (lo, hi) = random_inner_box(mesh, &mut rng)
            .ok_or_else(|| FeecError::InvalidConfig("no test box fits inside the domain".into()))?;
        let two = crate::poly::rat_int(2);
        let center: Vec<f64> = (0..n).map(|i| rat_to_f64(&((&lo[i] + &hi[i]) / &two))).collect();
        let half: Vec<Rat> = (0..n).map(|i| (&hi[i] - &lo[i]) / &two).collect();
        let eta = box_test_form(n, n - k - 1, &half, &mut rng);
        let deta = eta.d();
        let qdeg = (deg(xi) + eta.degree().unwrap_or(0) as usize).max(deg(omega) + deta.degree().unwrap_or(0) as usize);
        let rule = crate::quadrature::simplex_rule(n, qdeg)?;
        let (ef, df) = (eta.to_float(), deta.to_float());
        let lf: Vec<f64> = lo.iter().map(rat_to_f64).collect();
        let hf: Vec<f64> = hi.iter().map(rat_to_f64).collect();
        let planes = box_halfspaces(&lf, &hf);
        let values: Vec<Box<dyn Fn(&[f64; 3]) -> f64>> = planes
            .iter()
            .map(|&(a, b)| Box::new(move |x: &[f64; 3]| a[0] * x[0] + a[1] * x[1] + a[2] * x[2] - b) as Box<dyn Fn(&[f64; 3]) -> f64>)
            .collect();
        let tie = |_: &[f64; 3]| true;
        let cuts: Vec<crate::clip::Cut> = values
            .iter()
            .map(|v| crate::clip::Cut {
                value: v.as_ref(),
                tie: &tie,
                curved: false,
            })
            .collect();
        let mut lo3 = [0.0; 3];
        let mut hi3 = [0.0; 3];
        lo3[..n].copy_from_slice(&lf);
        hi3[..n].copy_from_slice(&hf);
        let opts = crate::clip::ClipOptions::for_scale(crate::linalg::dist(&lo3, &hi3));
        let mut total = 0.0;
        let mut nodes = Vec::new();
        for c in mesh.cells_near_box(&lo3, &hi3, 0.0) {
            for piece in crate::clip::clip(mesh.cell_coords(c), &cuts, &opts) {
                nodes.clear();
                crate::clip::piece_nodes(&piece, &rule, &mut nodes);
                for (x, w) in &nodes {
                    let local: Vec<f64> = (0..n).map(|i| x[i] - center[i]).collect();
                    let e = ef.eval(&local);
                    let de = df.eval(&local);
                    let a = wedge_covectors(n, k + 1, &xf[c].eval(x), n - k - 1, &e)[0];
                    let b = wedge_covectors(n, k, &wf[c].eval(x), n - k, &de)[0];
                    total += w * (a - sign * b);
                }
            }
        }
        worst = worst.max(total.abs());
    }
    Ok(worst)
}

/// Float value of an exact integral of an n-form over `Δ^n`.
pub fn integrate_top_f64(omega: &PolyForm) -> f64 {
    rat_to_f64(&omega.integrate_top())
}

/// Position of `sigma` in the lexicographic order of its degree.
pub fn component_index(sigma: u8, n: usize) -> usize {
    index_of(sigma, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, rat_int};

    fn x(n: usize, i: usize) -> Poly {
        Poly::var(n, i)
    }

    #[test]
    fn wedge_examples() {
        let dx = PolyForm::basic(2, 0b01);
        let dy = PolyForm::basic(2, 0b10);
        assert_eq!(dx.wedge(&dy).unwrap(), PolyForm::basic(2, 0b11));
        assert!(dx.wedge(&dx).unwrap().is_zero());
        let a = dy.mul_poly(&x(2, 0));
        let b = dx.mul_poly(&x(2, 1));
        let expect = PolyForm::basic(2, 0b11).mul_poly(&(&x(2, 0) * &x(2, 1))).scale(&rat_int(-1));
        assert_eq!(a.wedge(&b).unwrap(), expect);
    }

    #[test]
    fn derivative_examples() {
        let dy = PolyForm::basic(2, 0b10);
        assert_eq!(dy.mul_poly(&x(2, 0)).d(), PolyForm::basic(2, 0b11));
        let sq = PolyForm::scalar(&x(2, 0) * &x(2, 0));
        assert_eq!(sq.d(), PolyForm::basic(2, 0b01).mul_poly(&x(2, 0).scale(&rat_int(2))));
        let w = dy
            .mul_poly(&x(2, 0))
            .sub(&PolyForm::basic(2, 0b01).mul_poly(&x(2, 1)))
            .unwrap();
        assert_eq!(w.d(), PolyForm::basic(2, 0b11).scale(&rat_int(2)));
    }

    #[test]
    fn koszul_examples() {
        let vol = PolyForm::basic(2, 0b11);
        let expect = PolyForm::basic(2, 0b10)
            .mul_poly(&x(2, 0))
            .sub(&PolyForm::basic(2, 0b01).mul_poly(&x(2, 1)))
            .unwrap();
        assert_eq!(vol.koszul().unwrap(), expect);
        assert_eq!(
            PolyForm::basic(2, 0b01).koszul().unwrap(),
            PolyForm::scalar(x(2, 0))
        );
        assert_eq!(
            PolyForm::scalar(x(2, 0)).koszul(),
            Err(FeecError::ZeroFormContraction)
        );
    }

    #[test]
    fn trace_examples() {
        let v = |a: i64, b: i64| vec![rat_int(a), rat_int(b)];
        let edge = vec![v(0, 0), v(1, 0)];
        assert!(trace(&edge, &PolyForm::basic(2, 0b10)).is_zero());
        assert_eq!(trace(&edge, &PolyForm::basic(2, 0b01)), PolyForm::basic(1, 0b1));
        let diag = vec![v(0, 0), v(1, 1)];
        let w = PolyForm::basic(2, 0b10).mul_poly(&x(2, 0));
        assert_eq!(trace(&diag, &w), PolyForm::basic(1, 0b1).mul_poly(&x(1, 0)));
    }

    #[test]
    fn volume_form_pulls_back_by_determinant() {
        let rows = vec![vec![rat_int(2), rat_int(1)], vec![rat(1, 2), rat_int(3)]];
        let shift = vec![rat_int(0), rat_int(0)];
        let p = PolyForm::basic(2, 0b11).pullback_affine(2, &rows, &shift);
        assert_eq!(p, PolyForm::basic(2, 0b11).scale(&rat(11, 2)));
    }
    #[test]
    fn weak_derivative_of_smooth_and_whitney_forms() {
        use crate::mesh::generate;
        use crate::spaces::{build_fespace, random_poly_form, SpaceSpec};
        use rand::SeedableRng;
        let mesh = std::sync::Arc::new(generate("unit_square", 1).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for k in 0..2 {
            let w = random_poly_form(2, k, 2, &mut rng);
            let pw = PiecewiseForm::uniform(&w, mesh.num_cells());
            let r = weak_derivative_residual(&mesh, &pw, &pw.d(), 10, 1).unwrap();
            assert!(r < 1e-10, "k={k}: {r}");
        }
        let two = std::sync::Arc::new(generate("unit_square", 0).unwrap());
        for spec in [SpaceSpec::full(1, 0), SpaceSpec::minus(1, 1)] {
            let sp = build_fespace(two.clone(), spec).unwrap();
            for g in 0..sp.dim() {
                let f = sp.basis_form(g);
                assert!(weak_derivative_residual(&two, &f, &f.d(), 10, 2).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn trace_jump_is_detected() {
        use crate::mesh::generate;
        let mesh = generate("unit_square", 0).unwrap();
        // dx on one triangle, zero on the other: the tangential trace jumps
        // along the diagonal
        let w = PiecewiseForm::new(vec![PolyForm::basic(2, 0b01), PolyForm::zero(2, 1)], Continuity::None);
        assert!(weak_derivative_residual(&mesh, &w, &w.d(), 10, 4).unwrap() > 1e-3);
        let f = PiecewiseForm::new(
            vec![PolyForm::scalar(Poly::one(2)), PolyForm::zero(2, 0)],
            Continuity::None,
        );
        assert!(weak_derivative_residual(&mesh, &f, &f.d(), 10, 4).unwrap() > 1e-3);
    }
}
