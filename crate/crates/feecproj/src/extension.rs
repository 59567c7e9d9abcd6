//! Evaluable form fields and the extension `E^k` across the collar.
//!
//! `E^k ω` equals `ω` on `Ω̄` and `𝒜*ω` on the exterior collar. Fields here
//! also return first derivatives, with the second derivatives of `𝒜`
//! entering through the chain rule, so that `d` can be applied exactly to
//! sampled values.

use crate::alternator::binom;
use crate::clip::{piece_nodes, AffineFlow, Slicer};
use crate::error::{FeecError, Result};
use crate::forms::{box_test_form, wedge_covectors, FloatForm, PiecewiseForm};
use crate::geometry::{DomainGeometry, Region};
use crate::linalg::{axpy, compound_derivative, pullback_covector, sub, Mat, Vec3};
use crate::mesh::Triangulation;
use crate::poly::{rat, rat_to_f64, Rat};
use crate::quadrature::{gauss_legendre, simplex_rule};
use crate::spaces::FeSpace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Values and first partials `partials[c][j] = ∂_j ω_c` of a form at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct FormJet {
    pub value: Vec<f64>,
    pub partials: Vec<[f64; 3]>,
}

/// A k-form that can be sampled pointwise.
pub trait FormField: Sync {
    fn n(&self) -> usize;
    fn k(&self) -> usize;
    fn eval(&self, z: &Vec3) -> Result<Vec<f64>>;
    fn jet(&self, z: &Vec3) -> Result<FormJet>;
}

/// A piecewise polynomial form on the cells of a mesh, located by point
/// search.
pub struct PiecewiseField {
    mesh: Arc<Triangulation>,
    k: usize,
    cells: Vec<FloatForm>,
}

impl PiecewiseField {
    pub fn new(mesh: Arc<Triangulation>, omega: &PiecewiseForm) -> Self {
        PiecewiseField {
            mesh,
            k: omega.k,
            cells: omega.to_float(),
        }
    }

    /// The FE function with the given coefficients.
    pub fn from_fe(space: &FeSpace, coeffs: &[f64]) -> Self {
        let exact: Vec<Rat> = coeffs.iter().map(|c| crate::poly::rat_from_f64(*c)).collect();
        Self::new(space.mesh().clone(), &space.to_piecewise(&exact))
    }

    pub fn cell_form(&self, cell: usize) -> &FloatForm {
        &self.cells[cell]
    }

    fn locate(&self, z: &Vec3) -> Result<usize> {
        self.mesh
            .locate_point(z, 1e-10)
            .map(|(c, _)| c)
            .map_err(|_| FeecError::EvaluationOutsideExtendedDomain)
    }
}

impl FormField for PiecewiseField {
    fn n(&self) -> usize {
        self.mesh.n()
    }

    fn k(&self) -> usize {
        self.k
    }

    fn eval(&self, z: &Vec3) -> Result<Vec<f64>> {
        Ok(self.cells[self.locate(z)?].eval(z))
    }

    fn jet(&self, z: &Vec3) -> Result<FormJet> {
        let f = &self.cells[self.locate(z)?];
        Ok(FormJet {
            value: f.eval(z),
            partials: f.grad(z),
        })
    }
}

/// A form given by a closure; it has no derivative data.
pub struct FnField<F> {
    pub n: usize,
    pub k: usize,
    pub f: F,
}

impl<F: Fn(&Vec3) -> Option<Vec<f64>> + Sync> FormField for FnField<F> {
    fn n(&self) -> usize {
        self.n
    }

    fn k(&self) -> usize {
        self.k
    }

    fn eval(&self, z: &Vec3) -> Result<Vec<f64>> {
        (self.f)(z).ok_or(FeecError::EvaluationOutsideExtendedDomain)
    }

    fn jet(&self, _: &Vec3) -> Result<FormJet> {
        Err(FeecError::InvalidConfig("sampled form has no derivative".into()))
    }
}

/// `E^k ω` for a field `ω` defined on `Ω̄`.
pub struct ExtendedField<'a> {
    pub geometry: &'a DomainGeometry,
    pub inner: &'a dyn FormField,
}

impl<'a> ExtendedField<'a> {
    pub fn new(geometry: &'a DomainGeometry, inner: &'a dyn FormField) -> Self {
        ExtendedField { geometry, inner }
    }
}

/// Pull a jet back along a map with Jacobian `jac` and second derivatives
/// `hess[l][i][j]`, the inner jet being taken at the image point.
pub fn pullback_jet(n: usize, k: usize, jac: &Mat, hess: &[[[f64; 3]; 3]; 3], inner: &FormJet) -> FormJet {
    let comp = jac.compound(k);
    let nc = binom(n, k);
    let mut value = vec![0.0; nc];
    let mut partials = vec![[0.0; 3]; nc];
    for s in 0..nc {
        value[s] = (0..nc).map(|t| inner.value[t] * comp[t][s]).sum();
    }
    for i in 0..n {
        let mut dj = Mat::zeros(n, n);
        for l in 0..n {
            for m in 0..n {
                dj.a[l][m] = hess[l][m][i];
            }
        }
        let dcomp = compound_derivative(jac, &dj, k);
        for s in 0..nc {
            let mut acc = 0.0;
            for t in 0..nc {
                let chain: f64 = (0..n).map(|j| inner.partials[t][j] * jac.a[j][i]).sum();
                acc += chain * comp[t][s] + inner.value[t] * dcomp[t][s];
            }
            partials[s][i] = acc;
        }
    }
    FormJet { value, partials }
}

impl FormField for ExtendedField<'_> {
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn k(&self) -> usize {
        self.inner.k()
    }

    fn eval(&self, z: &Vec3) -> Result<Vec<f64>> {
        match self.geometry.extension_source(z)? {
            None => self.inner.eval(z),
            Some(r) => Ok(pullback_covector(&r.jac, self.k(), &self.inner.eval(&r.point)?)),
        }
    }

    fn jet(&self, z: &Vec3) -> Result<FormJet> {
        match self.geometry.classify(z) {
            Region::Interior | Region::Boundary => self.inner.jet(z),
            Region::Outside => Err(FeecError::EvaluationOutsideExtendedDomain),
            Region::ExteriorCollar => {
                let (r, h) = self.geometry.reflect_with_hessian(z)?;
                let inner = self.inner.jet(&r.point)?;
                Ok(pullback_jet(self.n(), self.k(), &r.jac, &h, &inner))
            }
        }
    }
}

/// A box straddling `∂Ω` inside the extended domain, with dyadic corners.
fn random_collar_box(geo: &DomainGeometry, rng: &mut impl Rng) -> Option<(Vec<Rat>, Vec<Rat>)> {
    let n = geo.n();
    let dyadic = |v: f64| rat((v * 1024.0).round() as i64, 1024);
    let scale = geo.width() * geo.diameter();
    for attempt in 0..200 {
        let (x, _) = geo.sample_boundary(rng);
        let h = scale * 0.5f64.powi(attempt / 20);
        let lo: Vec<Rat> = (0..n).map(|i| dyadic(x[i] - h * rng.gen_range(0.05..0.25))).collect();
        let hi: Vec<Rat> = (0..n).map(|i| dyadic(x[i] + h * rng.gen_range(0.05..0.25))).collect();
        let lf: Vec<f64> = lo.iter().map(rat_to_f64).collect();
        let hf: Vec<f64> = hi.iter().map(rat_to_f64).collect();
        if (0..n).any(|i| hf[i] - lf[i] < 0.02 * h) {
            continue;
        }
        let ok = (0..5usize.pow(n as u32)).all(|g| {
            let mut z = [0.0; 3];
            let mut r = g;
            for i in 0..n {
                z[i] = lf[i] + (hf[i] - lf[i]) * (r % 5) as f64 / 4.0;
                r /= 5;
            }
            geo.gauge(&z) < 1.0 + 0.9 * geo.width()
        });
        if ok {
            return Some((lo, hi));
        }
    }
    None
}

/// Vertices of the `n!` Kuhn simplices of a box.
fn kuhn_simplices(n: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<Vec3>> {
    fn perms(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in perms(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }
    perms(n)
        .into_iter()
        .map(|p| {
            let mut v = [0.0; 3];
            v[..n].copy_from_slice(lo);
            let mut verts = vec![v];
            for &axis in &p {
                v[axis] = hi[axis];
                verts.push(v);
            }
            verts
        })
        .collect()
}

/// Largest `|∫E(dω)∧η − (−1)^{k+1}∫Eω∧dη|` over `trials` box-bump test
/// forms whose boxes straddle the boundary. Each box is sliced by route,
/// so the values on every piece come from one cell through one branch of
/// the reflection.
pub fn extension_weak_residual(
    geo: &DomainGeometry,
    mesh: &Triangulation,
    omega: &PiecewiseForm,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let n = mesh.n();
    let k = omega.k;
    if k >= n {
        return Ok(0.0);
    }
    let wf = omega.to_float();
    let xf = omega.d().to_float();
    let slicer = Slicer::new(mesh, geo);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
    let rule = simplex_rule(n, crate::quadrature::MAX_DEGREE)?;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (lo, hi) = random_collar_box(geo, &mut rng)
            .ok_or_else(|| FeecError::InvalidConfig("no test box fits in the collar".into()))?;
        let two = crate::poly::rat_int(2);
        let center: Vec<f64> = (0..n).map(|i| rat_to_f64(&((&lo[i] + &hi[i]) / &two))).collect();
        let half: Vec<Rat> = (0..n).map(|i| (&hi[i] - &lo[i]) / &two).collect();
        let eta = box_test_form(n, n - k - 1, &half, &mut rng);
        let (ef, df) = (eta.to_float(), eta.d().to_float());
        let lf: Vec<f64> = lo.iter().map(rat_to_f64).collect();
        let hf: Vec<f64> = hi.iter().map(rat_to_f64).collect();
        let mut total = 0.0;
        let mut nodes = Vec::new();
        for simplex in kuhn_simplices(n, &lf, &hf) {
            let cols: Vec<Vec3> = simplex[1..].iter().map(|p| sub(p, &simplex[0])).collect();
            let flow = AffineFlow {
                origin: simplex[0],
                jac: Mat::from_cols(n, &cols),
            };
            let det = flow.jac.det().abs();
            for piece in slicer.slice(n, &flow)? {
                nodes.clear();
                piece_nodes(&piece.verts, &rule, &mut nodes);
                for (t, w) in &nodes {
                    let z = crate::clip::Flow::point(&flow, t);
                    let src = slicer.source(&piece.route, &z);
                    let (mut a, mut b) = (wf[src.cell].eval(&src.point), xf[src.cell].eval(&src.point));
                    if let Some(j) = src.jac {
                        a = pullback_covector(&j, k, &a);
                        b = pullback_covector(&j, k + 1, &b);
                    }
                    let local: Vec<f64> = (0..n).map(|i| z[i] - center[i]).collect();
                    let lhs = wedge_covectors(n, k + 1, &b, n - k - 1, &ef.eval(&local))[0];
                    let rhs = wedge_covectors(n, k, &a, n - k, &df.eval(&local))[0];
                    total += w * det * (lhs - sign * rhs);
                }
            }
        }
        worst = worst.max(total.abs());
    }
    Ok(worst)
}

/// `(‖Eω‖_{L^p(𝒞⁺)}, ‖ω‖_{L^p(𝒞⁻)})` over the exterior and interior collar
/// bands, by tensor quadrature in the cone coordinates `(s, facet point)`.
pub fn collar_band_norms(geo: &DomainGeometry, omega: &dyn FormField, p: f64, degree: usize) -> Result<(f64, f64)> {
    let n = geo.n();
    let w = geo.width();
    let c = geo.center();
    let flat = geo.flattening();
    let facet_rule = simplex_rule(n - 1, degree)?;
    let ext = ExtendedField::new(geo, omega);
    let mut sums = [0.0f64; 2];
    for f in geo.facets() {
        // |det ∂w/∂(ξ, s)| = s^{n−1} |det[v_i − v_0, v_0 − c]|
        let mut cols: Vec<Vec3> = f.verts[1..].iter().map(|v| sub(v, &f.verts[0])).collect();
        cols.push(sub(&f.verts[0], &c));
        let base = Mat::from_cols(n, &cols).det().abs();
        for (band, (lo, hi)) in [(1.0, 1.0 + w), (1.0 - w, 1.0)].into_iter().enumerate() {
            let (ss, sw) = gauss_legendre(degree / 2 + 2, lo, hi);
            for (s, ws) in ss.iter().zip(&sw) {
                for (xi, wx) in facet_rule.points.iter().zip(&facet_rule.weights) {
                    let mut v = f.verts[0];
                    for (j, col) in cols.iter().take(n - 1).enumerate() {
                        v = axpy(xi[j], col, &v);
                    }
                    let wpt = axpy(*s, &sub(&v, &c), &c);
                    let piece = &flat.pieces()[flat.image_piece_at(&wpt)];
                    let z = piece.unapply(&wpt);
                    let jac = piece.lin_inv.det().abs();
                    let val = if band == 0 { ext.eval(&z)? } else { omega.eval(&z)? };
                    let mag = val.iter().map(|a| a * a).sum::<f64>().sqrt();
                    sums[band] += ws * wx * base * s.powi(n as i32 - 1) * jac * mag.powf(p);
                }
            }
        }
    }
    Ok((sums[0].powf(1.0 / p), sums[1].powf(1.0 / p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;
    use crate::spaces::{random_poly_form, SpaceSpec};

    #[test]
    fn extension_of_constants_is_constant() {
        let geo = DomainGeometry::named("unit_square", 0.2).unwrap();
        let one = FnField {
            n: 2,
            k: 0,
            f: |_: &Vec3| Some(vec![1.0]),
        };
        let e = ExtendedField::new(&geo, &one);
        for z in [[1.08, 0.5, 0.0], [-0.05, 0.3, 0.0], [0.5, 0.5, 0.0], [1.05, 1.05, 0.0]] {
            assert_eq!(e.eval(&z).unwrap(), vec![1.0]);
        }
        assert_eq!(e.eval(&[1.5, 0.5, 0.0]), Err(FeecError::EvaluationOutsideExtendedDomain));
    }

    #[test]
    fn jets_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (name, n) in [("unit_square", 2), ("crossed_bricks", 3)] {
            let geo = DomainGeometry::named(name, 0.2).unwrap();
            let mesh = Arc::new(generate(name, 0).unwrap());
            for k in 0..n {
                let w = random_poly_form(n, k, 2, &mut rng);
                let inner = PiecewiseField::new(mesh.clone(), &PiecewiseForm::uniform(&w, mesh.num_cells()));
                let e = ExtendedField::new(&geo, &inner);
                for _ in 0..20 {
                    let (z, _, _) = geo.sample_exterior_collar(&mut rng);
                    let Ok(jet) = e.jet(&z) else { continue };
                    let h = 1e-6;
                    for i in 0..n {
                        let mut zp = z;
                        let mut zm = z;
                        zp[i] += h;
                        zm[i] -= h;
                        let (Ok(a), Ok(b)) = (e.eval(&zp), e.eval(&zm)) else { continue };
                        if geo.flattening().piece_at(&zp) != geo.flattening().piece_at(&zm) {
                            continue;
                        }
                        for c in 0..jet.value.len() {
                            let fd = (a[c] - b[c]) / (2.0 * h);
                            let scale = 1.0 + jet.partials[c][i].abs();
                            assert!((fd - jet.partials[c][i]).abs() < 1e-4 * scale, "{name} k={k}: {fd} vs {}", jet.partials[c][i]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn extension_commutes_with_d_weakly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let geo = DomainGeometry::named("unit_square", 0.2).unwrap();
        let mesh = generate("unit_square", 1).unwrap();
        for k in 0..2 {
            let w = random_poly_form(2, k, 2, &mut rng);
            let pw = PiecewiseForm::uniform(&w, mesh.num_cells());
            let r = extension_weak_residual(&geo, &mesh, &pw, 3, 1).unwrap();
            assert!(r < 1e-9, "k={k}: {r}");
        }
        let sp = crate::spaces::build_fespace(Arc::new(generate("l_shape", 0).unwrap()), SpaceSpec::minus(1, 1)).unwrap();
        let geo = DomainGeometry::named("l_shape", 0.2).unwrap();
        for g in [0, 3] {
            let r = extension_weak_residual(&geo, sp.mesh(), &sp.basis_form(g), 2, 2).unwrap();
            assert!(r < 1e-9, "whitney {g}: {r}");
        }
    }

    #[test]
    fn band_norms_obey_the_local_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let geo = DomainGeometry::named("unit_square", 0.2).unwrap();
        let consts = geo.collar_constants(500, 1);
        let mesh = Arc::new(generate("unit_square", 1).unwrap());
        for k in 0..=2 {
            let w = random_poly_form(2, k, 1, &mut rng);
            let f = PiecewiseField::new(mesh.clone(), &PiecewiseForm::uniform(&w, mesh.num_cells()));
            let (ext, int) = collar_band_norms(&geo, &f, 2.0, 8).unwrap();
            assert!(ext <= 1.05 * consts.c_reflection(2, 2.0) * int, "k={k}: {ext} vs {int}");
        }
    }
}
