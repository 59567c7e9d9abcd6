//! The variable-radius mollifier `R^k_{ε𝚑}`:
//! `(Rω)(x) = ∫ μ(y) (Φ_y^* ω)(x) dy` with `Φ_y(x) = x + ε𝚑(x) y`,
//! evaluated by a fixed ball rule.

use crate::error::{FeecError, Result};
use crate::extension::{pullback_jet, ExtendedField, FormField, FormJet, PiecewiseField};
use crate::forms::{d_from_partials, PiecewiseForm};
use crate::geometry::DomainGeometry;
use crate::linalg::{axpy, pullback_covector, Mat, Vec3};
use crate::meshsize::{MeshSizeField, SizeJet};
use crate::quadrature::{ball_rule, bump, graded_ball_rule};
use std::sync::Arc;

/// Nodes below this fraction of the largest weight are dropped; the
/// mollifier has underflowed there.
const NEGLIGIBLE_WEIGHT: f64 = 1e-18;

/// Ball nodes `y_q` with weights `C_μ w_q μ(y_q)` summing to one.
///
/// Returns the nodes and the normalization `C_μ` of the rule. The radial
/// grading toward `|y| = 1` is used in one and two dimensions; in three the
/// plain rule keeps the node count manageable.
pub fn mollifier_nodes(n: usize, degree: usize) -> Result<(Vec<(Vec3, f64)>, f64)> {
    let rule = if n == 3 { ball_rule(n, degree)? } else { graded_ball_rule(n, degree)? };
    let raw: Vec<(Vec3, f64)> = rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(y, w)| (*y, w * bump(y[0] * y[0] + y[1] * y[1] + y[2] * y[2])))
        .collect();
    let top = raw.iter().map(|r| r.1).fold(0.0, f64::max);
    let kept: Vec<(Vec3, f64)> = raw.into_iter().filter(|r| r.1 > NEGLIGIBLE_WEIGHT * top).collect();
    let c_mu = 1.0 / kept.iter().map(|r| r.1).sum::<f64>();
    Ok((kept.into_iter().map(|(y, w)| (y, c_mu * w)).collect(), c_mu))
}

/// Configuration of `R^k_{ε𝚑}`.
#[derive(Clone, Debug)]
pub struct Mollifier {
    eps: f64,
    field: Arc<MeshSizeField>,
    nodes: Vec<(Vec3, f64)>,
    c_mu: f64,
    degree: usize,
}

impl Mollifier {
    pub fn new(field: Arc<MeshSizeField>, eps: f64, degree: usize) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(FeecError::InvalidConfig(format!("epsilon must be positive, got {eps}")));
        }
        let (nodes, c_mu) = mollifier_nodes(field.mesh().n(), degree)?;
        Ok(Mollifier {
            eps,
            field,
            nodes,
            c_mu,
            degree,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn field(&self) -> &Arc<MeshSizeField> {
        &self.field
    }

    pub fn geometry(&self) -> &DomainGeometry {
        self.field.geometry()
    }

    pub fn n(&self) -> usize {
        self.field.mesh().n()
    }

    /// `(y_q, C_μ w_q μ(y_q))`.
    pub fn nodes(&self) -> &[(Vec3, f64)] {
        &self.nodes
    }

    /// Normalization of the discrete rule: `Σ_q w_q μ(y_q) = 1/C_μ`.
    pub fn c_mu(&self) -> f64 {
        self.c_mu
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `Φ(x, y) = x + ε𝚑(x) y` and `D_xΦ = Id + ε y ⊗ ∇𝚑(x)`.
    pub fn flow_map(&self, x: &Vec3, y: &Vec3) -> Result<(Vec3, Mat)> {
        let jet = self.field.jet(x)?;
        Ok(self.flow_with(&jet, y))
    }

    fn flow_with(&self, jet: &SizeJet, y: &Vec3) -> (Vec3, Mat) {
        let z = axpy(self.eps * jet.value, y, &[0.0; 3]);
        (z, MeshSizeField::flow_jacobian(self.n(), self.eps, y, &jet.grad))
    }

    /// `(R ω)(x)` for an evaluator of the extended form.
    pub fn eval(&self, omega_ext: &dyn FormField, x: &Vec3) -> Result<Vec<f64>> {
        let k = omega_ext.k();
        let jet = self.field.jet(x)?;
        let mut out = vec![0.0; crate::alternator::binom(self.n(), k)];
        for (y, w) in &self.nodes {
            let (dz, jac) = self.flow_with(&jet, y);
            let v = omega_ext.eval(&crate::linalg::add(x, &dz))?;
            let pulled = pullback_covector(&jac, k, &v);
            for (o, p) in out.iter_mut().zip(&pulled) {
                *o += w * p;
            }
        }
        Ok(out)
    }

    /// Value and first partials of `R ω` at `x`, differentiating every term
    /// of the quadrature sum exactly (through `∇²𝚑` and the jet of `ω`).
    pub fn jet(&self, omega_ext: &dyn FormField, x: &Vec3) -> Result<FormJet> {
        let n = self.n();
        let k = omega_ext.k();
        let size = self.field.jet(x)?;
        let nc = crate::alternator::binom(n, k);
        let mut out = FormJet {
            value: vec![0.0; nc],
            partials: vec![[0.0; 3]; nc],
        };
        for (y, w) in &self.nodes {
            let (dz, jac) = self.flow_with(&size, y);
            // ∂_i (D_xΦ)[l][m] = ε y_l ∂_i∂_m 𝚑
            let mut hess = [[[0.0; 3]; 3]; 3];
            for (l, hl) in hess.iter_mut().enumerate().take(n) {
                for (m, hm) in hl.iter_mut().enumerate().take(n) {
                    for (i, v) in hm.iter_mut().enumerate().take(n) {
                        *v = self.eps * y[l] * size.hess[m][i];
                    }
                }
            }
            let inner = omega_ext.jet(&crate::linalg::add(x, &dz))?;
            let term = pullback_jet(n, k, &jac, &hess, &inner);
            for c in 0..nc {
                out.value[c] += w * term.value[c];
                for i in 0..n {
                    out.partials[c][i] += w * term.partials[c][i];
                }
            }
        }
        Ok(out)
    }

    /// `d(R ω)(x)` from the exact partials of the quadrature sum.
    pub fn d_eval(&self, omega_ext: &dyn FormField, x: &Vec3) -> Result<Vec<f64>> {
        let jet = self.jet(omega_ext, x)?;
        Ok(d_from_partials(self.n(), omega_ext.k(), &jet.partials))
    }

    /// Largest `|d(Rω) − R(dω)|` over the given points, for a piecewise
    /// polynomial `ω` extended across the collar.
    pub fn commutation_residual(&self, omega: &PiecewiseForm, points: &[Vec3]) -> Result<f64> {
        let mesh = self.field.mesh().clone();
        let geo = self.geometry();
        let w = PiecewiseField::new(mesh.clone(), omega);
        let dw = PiecewiseField::new(mesh, &omega.d());
        let ew = ExtendedField::new(geo, &w);
        let edw = ExtendedField::new(geo, &dw);
        let mut worst = 0.0f64;
        for x in points {
            let a = self.d_eval(&ew, x)?;
            let b = self.eval(&edw, x)?;
            for (u, v) in a.iter().zip(&b) {
                worst = worst.max((u - v).abs());
            }
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::FnField;
    use crate::geometry::{neighborhood_constant, random_barycentric};
    use crate::mesh::{build_triangulation, generate, Triangulation};
    use crate::meshsize::default_radius;
    use crate::spaces::{build_fespace, random_poly_form, SpaceSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mollifier(mesh: Triangulation, name: &str, eps: f64) -> Mollifier {
        let geo = Arc::new(DomainGeometry::named(name, 0.2).unwrap());
        let eps_h = neighborhood_constant(&mesh, &geo).unwrap();
        let lip = geo.collar_constants(200, 1).lip_reflection;
        let rho = default_radius(mesh.h_min(), eps_h, lip);
        let field = MeshSizeField::build(Arc::new(mesh), geo, rho, eps_h, lip).unwrap();
        Mollifier::new(Arc::new(field), eps, 8).unwrap()
    }

    fn graded_square() -> Triangulation {
        let xs = [0.0, 0.2, 0.55, 1.0];
        let mut verts = Vec::new();
        for y in xs {
            for x in xs {
                verts.push(vec![x, y]);
            }
        }
        let mut cells = Vec::new();
        for j in 0..3 {
            for i in 0..3 {
                let a = j * 4 + i;
                cells.push(vec![a, a + 1, a + 5]);
                cells.push(vec![a, a + 5, a + 4]);
            }
        }
        build_triangulation(&verts, &cells).unwrap()
    }

    fn interior_points(m: &Mollifier, count: usize, seed: u64) -> Vec<Vec3> {
        let mesh = m.field().mesh();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let c = rng.gen_range(0..mesh.num_cells());
                let lam = random_barycentric(mesh.n() + 1, &mut rng);
                mesh.cell_coords(c).iter().zip(&lam).fold([0.0; 3], |acc, (p, l)| axpy(*l, p, &acc))
            })
            .collect()
    }

    #[test]
    fn flow_map_basics() {
        let m = mollifier(graded_square(), "unit_square", 0.01);
        let x = [0.4, 0.3, 0.0];
        let (z, j) = m.flow_map(&x, &[0.0; 3]).unwrap();
        assert_eq!(z, [0.0; 3]);
        assert_eq!(j, Mat::identity(2));
        let y = [0.3, -0.5, 0.0];
        let (_, j) = m.flow_map(&x, &y).unwrap();
        let g = m.field().gradient(&x).unwrap();
        let expect = 1.0 + 0.01 * (y[0] * g[0] + y[1] * g[1]);
        assert!((j.det() - expect).abs() < 1e-15);
        let uniform = mollifier(generate("unit_square", 1).unwrap(), "unit_square", 0.01);
        assert_eq!(uniform.flow_map(&x, &y).unwrap().1, Mat::identity(2));
    }

    #[test]
    fn constants_are_reproduced() {
        let m = mollifier(graded_square(), "unit_square", 1e-3);
        let one = FnField {
            n: 2,
            k: 0,
            f: |_: &Vec3| Some(vec![2.5]),
        };
        let dx = FnField {
            n: 2,
            k: 1,
            f: |_: &Vec3| Some(vec![1.0, 0.0]),
        };
        let geo = m.geometry();
        for x in interior_points(&m, 20, 1) {
            let v = m.eval(&ExtendedField::new(geo, &one), &x).unwrap();
            assert!((v[0] - 2.5).abs() < 1e-13, "{v:?}");
            let v = m.eval(&ExtendedField::new(geo, &dx), &x).unwrap();
            assert!((v[0] - 1.0).abs() < 1e-9 && v[1].abs() < 1e-9, "{v:?}");
        }
    }

    #[test]
    fn commutes_with_d_for_whitney_forms() {
        let m = mollifier(graded_square(), "unit_square", 0.05);
        let pts = interior_points(&m, 30, 2);
        let sp = build_fespace(m.field().mesh().clone(), SpaceSpec::minus(1, 1)).unwrap();
        for g in [0, 5, 11] {
            let r = m.commutation_residual(&sp.basis_form(g), &pts).unwrap();
            assert!(r < 1e-6, "basis {g}: {r}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = random_poly_form(2, 0, 2, &mut rng);
        let pw = PiecewiseForm::uniform(&w, m.field().mesh().num_cells());
        assert!(m.commutation_residual(&pw, &pts).unwrap() < 1e-8);
        let zero = PiecewiseForm::uniform(&crate::forms::PolyForm::zero(2, 1), m.field().mesh().num_cells());
        assert_eq!(m.commutation_residual(&zero, &pts).unwrap(), 0.0);
    }

    #[test]
    fn linear_and_local() {
        let m = mollifier(graded_square(), "unit_square", 0.05);
        let mesh = m.field().mesh().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = PiecewiseField::new(mesh.clone(), &PiecewiseForm::uniform(&random_poly_form(2, 1, 1, &mut rng), mesh.num_cells()));
        let b = PiecewiseField::new(mesh.clone(), &PiecewiseForm::uniform(&random_poly_form(2, 1, 1, &mut rng), mesh.num_cells()));
        let geo = m.geometry();
        let (ea, eb) = (ExtendedField::new(geo, &a), ExtendedField::new(geo, &b));
        let combo = FnField {
            n: 2,
            k: 1,
            f: |z: &Vec3| {
                let (u, v) = (ea.eval(z).ok()?, eb.eval(z).ok()?);
                Some(vec![2.0 * u[0] - 3.0 * v[0], 2.0 * u[1] - 3.0 * v[1]])
            },
        };
        for x in interior_points(&m, 10, 5) {
            let (ra, rb, rc) = (m.eval(&ea, &x).unwrap(), m.eval(&eb, &x).unwrap(), m.eval(&combo, &x).unwrap());
            for c in 0..2 {
                assert!((rc[c] - (2.0 * ra[c] - 3.0 * rb[c])).abs() < 1e-12);
            }
            // zero the form outside the ball of radius ε𝚑(x)
            let r = m.eps() * m.field().eval(&x).unwrap();
            let cut = FnField {
                n: 2,
                k: 1,
                f: |z: &Vec3| {
                    let v = ea.eval(z).ok()?;
                    Some(if crate::linalg::dist(z, &x) <= r { v } else { vec![0.0; 2] })
                },
            };
            assert_eq!(m.eval(&cut, &x).unwrap(), ra);
        }
    }
}
