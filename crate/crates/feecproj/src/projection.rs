//! The smoothed interpolator `Q = I ∘ R ∘ E`, its inverse `J` on the FE
//! space, and the projection `π = J Q`.
//!
//! Every DOF integral of `R E ω` is written as a sum over ball nodes `y_q`
//! of integrals over the DOF face carried by `x ↦ x + ε𝚑(x) y_q`. The
//! carried face is sliced into pieces on which `E ω` is a single smooth
//! expression, and each piece is integrated by a simplex rule.

use crate::clip::{piece_nodes, AffineFlow, Flow, Slicer, Source};
use crate::error::{FeecError, Result};
use crate::extension::FormField;
use crate::linalg::{add, axpy, Mat, Vec3};
use crate::meshsize::MeshSizeField;
use crate::mollify::Mollifier;
use crate::quadrature::{simplex_rule, QuadratureRule};
use crate::spaces::{build_fespace, FeSpace, SpaceSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

/// Number of Neumann terms in the cross-check of `J`.
pub const NEUMANN_TERMS: usize = 20;

/// `t ↦ x(t) + ε𝚑(x(t)) y` for a non-constant `𝚑`.
struct FieldFlow<'a> {
    origin: Vec3,
    jac: Mat,
    shift: Vec3,
    field: &'a MeshSizeField,
}

impl Flow for FieldFlow<'_> {
    fn point(&self, t: &Vec3) -> Vec3 {
        let x = add(&self.origin, &self.jac.apply(&t[..self.jac.cols]));
        let h = self.field.eval(&x).unwrap_or(f64::NAN);
        axpy(h, &self.shift, &x)
    }

    fn affine(&self) -> bool {
        false
    }
}

/// DOF functionals of `R E ω` for one mollifier.
pub struct Smoother<'a> {
    mollifier: &'a Mollifier,
    slicer: Slicer<'a>,
    degree: usize,
}

/// `Q` on the FE basis, and optionally on a broken space whose columns are
/// the local bases of every cell, `cell * dim_local + i`.
#[derive(Clone, Debug)]
pub struct SmoothedMatrices {
    pub q: DMatrix<f64>,
    pub broken: Option<DMatrix<f64>>,
}

impl<'a> Smoother<'a> {
    /// `degree` is the simplex rule degree used on every slice piece.
    pub fn new(mollifier: &'a Mollifier, degree: usize) -> Self {
        let field = mollifier.field();
        let slicer = Slicer::new(field.mesh(), field.geometry());
        Smoother {
            mollifier,
            slicer,
            degree,
        }
    }

    /// Rule degree `2r + 6`, capped at 20.
    pub fn default_degree(space: &FeSpace) -> usize {
        (2 * space.spec.r + 6).min(20)
    }

    pub fn mollifier(&self) -> &Mollifier {
        self.mollifier
    }

    /// Call `visit(source, covector, weight)` for every quadrature node of
    /// DOF `g`: the DOF of `R E ω` is `Σ weight · ω(source.point) · covector`.
    fn visit_row(&self, space: &FeSpace, g: usize, visit: &mut dyn FnMut(&Source, &[f64], f64)) -> Result<()> {
        let m = space.dofs()[g].face_dim;
        let k = space.k();
        let n = space.n();
        let nc = space.ncomp();
        let eps = self.mollifier.eps();
        let field = self.mollifier.field();
        let rule: QuadratureRule = simplex_rule(m.max(1), self.degree)?;
        let origin = space.dof_point(g, &[0.0; 3][..m]);
        let fjac = *space.dof_jacobian(g);
        let uniform = field.uniform();
        let mut nodes = Vec::new();
        let mut eff = vec![0.0; nc];
        for (y, wq) in self.mollifier.nodes() {
            let affine;
            let curved;
            let flow: &dyn Flow = match uniform {
                Some(h) => {
                    affine = AffineFlow {
                        origin: axpy(eps * h, y, &origin),
                        jac: fjac,
                    };
                    &affine
                }
                None => {
                    curved = FieldFlow {
                        origin,
                        jac: fjac,
                        shift: axpy(eps, y, &[0.0; 3]),
                        field,
                    };
                    &curved
                }
            };
            for piece in self.slicer.slice(m, flow)? {
                nodes.clear();
                piece_nodes(&piece.verts, &rule, &mut nodes);
                for (t, wt) in &nodes {
                    let z = flow.point(t);
                    let src = self.slicer.source(&piece.route, &z);
                    let dphi = match uniform {
                        Some(_) => None,
                        None => {
                            let x = space.dof_point(g, &t[..m]);
                            Some(MeshSizeField::flow_jacobian(n, eps, y, &field.gradient(&x)?))
                        }
                    };
                    let total = match (src.jac, dphi) {
                        (Some(a), Some(b)) => Some(a.mul(&b)),
                        (Some(a), None) | (None, Some(a)) => Some(a),
                        (None, None) => None,
                    };
                    let w = space.dof_weight(g, &t[..m]);
                    match total {
                        None => eff.copy_from_slice(&w[..nc]),
                        Some(a) => {
                            let comp = a.compound(k);
                            for (tau, e) in eff.iter_mut().enumerate() {
                                *e = (0..nc).map(|s| comp[tau][s] * w[s]).sum();
                            }
                        }
                    }
                    visit(&src, &eff, wq * wt);
                }
            }
        }
        Ok(())
    }

    /// Row `g` of `Q` on the FE basis and on the broken space.
    pub fn row(&self, space: &FeSpace, g: usize, broken: Option<&FeSpace>) -> Result<(Vec<f64>, Vec<f64>)> {
        let nc = space.ncomp();
        let ncells = space.mesh().num_cells();
        let dimloc = space.reference().dim();
        let bloc = broken.map_or(0, |b| b.reference().dim());
        let mut fe = vec![0.0; space.dim()];
        let mut br = vec![0.0; bloc * ncells];
        let mut vals = vec![0.0; dimloc * nc];
        let mut bvals = vec![0.0; bloc * nc];
        self.visit_row(space, g, &mut |src, eff, w| {
            space.eval_local(src.cell, &src.point, &mut vals);
            for (i, &gi) in space.local_dofs(src.cell).iter().enumerate() {
                let v: f64 = (0..nc).map(|c| vals[i * nc + c] * eff[c]).sum();
                fe[gi] += w * v;
            }
            if let Some(b) = broken {
                b.eval_local(src.cell, &src.point, &mut bvals);
                for i in 0..bloc {
                    let v: f64 = (0..nc).map(|c| bvals[i * nc + c] * eff[c]).sum();
                    br[src.cell * bloc + i] += w * v;
                }
            }
        })?;
        if let Some(j) = fe.iter().chain(&br).position(|v| !v.is_finite()) {
            let _ = j;
            return Err(FeecError::SingularDof(g));
        }
        Ok((fe, br))
    }

    /// `Q` as matrices; rows are computed in parallel and summed in a fixed
    /// order, so the result does not depend on the thread count.
    pub fn assemble(&self, space: &FeSpace, broken: Option<&FeSpace>) -> Result<SmoothedMatrices> {
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..space.dim())
            .into_par_iter()
            .map(|g| self.row(space, g, broken))
            .collect::<Result<_>>()?;
        let dim = space.dim();
        let q = DMatrix::from_fn(dim, dim, |i, j| rows[i].0[j]);
        let broken = broken.map(|_| {
            let nb = rows.first().map_or(0, |r| r.1.len());
            DMatrix::from_fn(dim, nb, |i, j| rows[i].1[j])
        });
        Ok(SmoothedMatrices { q, broken })
    }

    /// DOF vector of `R E ω` for a form given by an evaluator on `Ω̄`.
    pub fn apply(&self, space: &FeSpace, omega: &dyn FormField) -> Result<Vec<f64>> {
        if omega.k() != space.k() {
            return Err(FeecError::DimensionMismatch {
                expected: space.k(),
                found: omega.k(),
            });
        }
        (0..space.dim())
            .into_par_iter()
            .map(|g| {
                let mut acc = 0.0;
                let mut err = None;
                self.visit_row(space, g, &mut |src, eff, w| match omega.eval(&src.point) {
                    Ok(v) => acc += w * v.iter().zip(eff).map(|(a, b)| a * b).sum::<f64>(),
                    Err(e) => err = Some(e),
                })?;
                match err {
                    Some(e) => Err(e),
                    None if !acc.is_finite() => Err(FeecError::SingularDof(g)),
                    None => Ok(acc),
                }
            })
            .collect()
    }
}

/// The broken space used as the domain of `π` for norm measurements: the
/// full polynomial space of the same degree, cell by cell.
pub fn broken_space(space: &FeSpace) -> Result<FeSpace> {
    build_fespace(space.mesh().clone(), SpaceSpec::full(space.spec.r, space.k()))
}

/// `∫_T φ_i · φ_j` for the local basis of `cell`.
pub fn cell_gram(space: &FeSpace, cell: usize) -> Result<DMatrix<f64>> {
    let n = space.n();
    let nc = space.ncomp();
    let dl = space.reference().dim();
    let rule = simplex_rule(n, 2 * space.spec.r)?;
    let chart = space.mesh().chart(cell);
    let mut g = DMatrix::zeros(dl, dl);
    let mut vals = vec![0.0; dl * nc];
    for (u, w) in rule.points.iter().zip(&rule.weights) {
        let x = chart.map(&u[..n]);
        space.eval_local(cell, &x, &mut vals);
        let wt = w * chart.det.abs();
        for i in 0..dl {
            for j in 0..=i {
                let v: f64 = (0..nc).map(|c| vals[i * nc + c] * vals[j * nc + c]).sum();
                g[(i, j)] += wt * v;
            }
        }
    }
    for i in 0..dl {
        for j in 0..i {
            g[(j, i)] = g[(i, j)];
        }
    }
    Ok(g)
}

/// The `L²` Gram matrix of the FE basis.
pub fn gram_matrix(space: &FeSpace) -> Result<DMatrix<f64>> {
    let mut g = DMatrix::zeros(space.dim(), space.dim());
    for c in 0..space.mesh().num_cells() {
        let loc = cell_gram(space, c)?;
        let dofs = space.local_dofs(c);
        for (i, &gi) in dofs.iter().enumerate() {
            for (j, &gj) in dofs.iter().enumerate() {
                g[(gi, gj)] += loc[(i, j)];
            }
        }
    }
    Ok(g)
}

/// Block-diagonal Gram matrix of the broken space.
pub fn broken_gram(space: &FeSpace) -> Result<DMatrix<f64>> {
    let dl = space.reference().dim();
    let nb = dl * space.mesh().num_cells();
    let mut g = DMatrix::zeros(nb, nb);
    for c in 0..space.mesh().num_cells() {
        let loc = cell_gram(space, c)?;
        g.view_mut((c * dl, c * dl), (dl, dl)).copy_from(&loc);
    }
    Ok(g)
}

/// `sup ‖A v‖_{G_t} / ‖v‖_{G_s}`: the square root of the largest generalized
/// eigenvalue of `(Aᵀ G_t A, G_s)`.
pub fn induced_norm(a: &DMatrix<f64>, g_target: &DMatrix<f64>, g_source: &DMatrix<f64>) -> Result<f64> {
    let chol = g_source
        .clone()
        .cholesky()
        .ok_or_else(|| FeecError::InvalidConfig("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let mut m = a.transpose() * g_target * a;
    m = (&m + m.transpose()) * 0.5;
    let x = l
        .solve_lower_triangular(&m)
        .ok_or_else(|| FeecError::InvalidConfig("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&x.transpose())
        .ok_or_else(|| FeecError::InvalidConfig("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let top = SymmetricEigen::new(c).eigenvalues.iter().cloned().fold(0.0, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// `Σ_{i ≤ terms} (Id − Q)^i`.
pub fn neumann_inverse(q: &DMatrix<f64>, terms: usize) -> DMatrix<f64> {
    let id = DMatrix::identity(q.nrows(), q.ncols());
    let r = &id - q;
    let mut sum = id.clone();
    let mut pow = id;
    for _ in 0..terms {
        pow = &pow * &r;
        sum += &pow;
    }
    sum
}

/// `J`, `π` and their diagnostics for one form degree.
#[derive(Clone, Debug)]
pub struct Projection {
    pub q: DMatrix<f64>,
    pub j: DMatrix<f64>,
    /// `π` on FE coefficients, `J Q`.
    pub pi: DMatrix<f64>,
    /// `π` on the broken space, `J Q_broken`.
    pub pi_broken: Option<DMatrix<f64>>,
    /// `‖Id − Q‖` in the Gram norm.
    pub neumann_norm: f64,
    /// `max |J − Σ_{i≤20} (Id − Q)^i|`.
    pub neumann_gap: f64,
}

impl Projection {
    /// Check `‖Id − Q‖ < 1`, invert `Q` directly and form `π`.
    pub fn build(m: &SmoothedMatrices, gram: &DMatrix<f64>) -> Result<Projection> {
        let dim = m.q.nrows();
        let id = DMatrix::identity(dim, dim);
        let neumann_norm = induced_norm(&(&id - &m.q), gram, gram)?;
        if !(neumann_norm < 1.0) {
            return Err(FeecError::NeumannDivergence(neumann_norm));
        }
        let j = m
            .q
            .clone()
            .lu()
            .try_inverse()
            .ok_or(FeecError::NeumannDivergence(neumann_norm))?;
        let series = neumann_inverse(&m.q, NEUMANN_TERMS);
        let neumann_gap = max_abs(&(&j - &series));
        Ok(Projection {
            pi: &j * &m.q,
            pi_broken: m.broken.as_ref().map(|b| &j * b),
            q: m.q.clone(),
            j,
            neumann_norm,
            neumann_gap,
        })
    }

    /// `max |π² − π|` on FE coefficients.
    pub fn idempotency_residual(&self) -> f64 {
        max_abs(&(&self.pi * &self.pi - &self.pi))
    }

    /// `max |J Q − Id|`.
    pub fn inverse_residual(&self) -> f64 {
        let dim = self.pi.nrows();
        max_abs(&(&self.pi - DMatrix::identity(dim, dim)))
    }
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// `max |D A_k − A_{k+1} D|`.
pub fn commutator(d: &DMatrix<f64>, a_k: &DMatrix<f64>, a_next: &DMatrix<f64>) -> f64 {
    max_abs(&(d * a_k - a_next * d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::PiecewiseField;
    use crate::mesh::generate;
    use crate::problem::{Problem, ProblemSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(level: usize) -> Problem {
        Problem::generated(&ProblemSpec::new("unit_square", "P1-minus"), level).unwrap()
    }

    #[test]
    fn induced_norm_of_identity_and_scaling() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((induced_norm(&id, &g, &g).unwrap() - 1.0).abs() < 1e-12);
        assert!((induced_norm(&(id * 3.0), &g, &g).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn neumann_series_matches_inverse() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.01, -0.02, 0.99]);
        let j = q.clone().try_inverse().unwrap();
        assert!(max_abs(&(j - neumann_inverse(&q, 20))) < 1e-12);
    }

    #[test]
    fn q_commutes_and_pi_reproduces_fe_functions() {
        let pb = square(1);
        let moll = pb.mollifier(pb.eps()).unwrap();
        let mut mats = Vec::new();
        for sp in &pb.complex.spaces {
            let sm = Smoother::new(&moll, Smoother::default_degree(sp));
            mats.push(sm.assemble(sp, None).unwrap());
        }
        for k in 0..2 {
            let d = pb.complex.derivative(k).unwrap();
            let r = commutator(&d, &mats[k].q, &mats[k + 1].q);
            assert!(r < 1e-8, "k = {k}: {r}");
        }
        // close to the identity, and closer for smaller ε
        let sp = &pb.complex.spaces[1];
        let id = DMatrix::identity(sp.dim(), sp.dim());
        let gap = max_abs(&(&mats[1].q - &id));
        assert!(gap > 0.0 && gap < 1e-2, "{gap}");
        let half = pb.mollifier(0.5 * pb.eps()).unwrap();
        let q_half = Smoother::new(&half, 8).assemble(sp, None).unwrap().q;
        assert!(max_abs(&(q_half - &id)) < gap);
        // the callable path agrees with the matrix path
        let proj = Projection::build(&mats[1], &gram_matrix(sp).unwrap()).unwrap();
        assert!(proj.neumann_gap < 1e-9);
        assert!(proj.idempotency_residual() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let coeffs: Vec<f64> = (0..sp.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let field = PiecewiseField::from_fe(sp, &coeffs);
        let sm = Smoother::new(&moll, 8);
        let qv = nalgebra::DVector::from_vec(sm.apply(sp, &field).unwrap());
        let back = &proj.j * qv;
        for (a, b) in back.iter().zip(&coeffs) {
            assert!((a - b).abs() < 1e-7);
        }
        let zero = PiecewiseField::from_fe(sp, &vec![0.0; sp.dim()]);
        assert!(sm.apply(sp, &zero).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grams_are_consistent() {
        let mesh = std::sync::Arc::new(generate("unit_square", 1).unwrap());
        let sp = build_fespace(mesh, SpaceSpec::minus(1, 1)).unwrap();
        let b = broken_space(&sp).unwrap();
        let g = gram_matrix(&sp).unwrap();
        let gb = broken_gram(&b).unwrap();
        assert!(g.clone().cholesky().is_some() && gb.clone().cholesky().is_some());
        // the constant form dx has norm 1 on the unit square
        let c = sp.interpolate(&crate::forms::PiecewiseForm::uniform(
            &crate::spaces::constant_form(2, 1, &[1.0, 0.0]),
            sp.mesh().num_cells(),
        ));
        let v = nalgebra::DVector::from_vec(c);
        assert!(((v.transpose() * &g * &v)[(0, 0)] - 1.0).abs() < 1e-12);
    }
}
