//! Finite element spaces of differential forms: `P_rΛ^k` and `P_r^-Λ^k`,
//! their degrees of freedom, dual bases and canonical interpolation.

use crate::alternator::{alternators, binom, complement, index_of, indices, wedge_sign};
use crate::error::{FeecError, Result};
use crate::exact::{independent_subset, in_span, inverse};
use crate::forms::{trace, Continuity, PiecewiseForm, PolyForm};
use crate::linalg::{Mat, Vec3};
use crate::mesh::Triangulation;
use crate::poly::{exponents_of_degree, exponents_up_to, rat_from_f64, rat_int, rat_to_f64, Exp, Poly, Rat};
use crate::quadrature::simplex_rule;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

pub const MAX_POLY_DEGREE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Full,
    Minus,
}

/// A local space `P_rΛ^k` (full) or `P_r^-Λ^k` (minus).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub family: Family,
    pub r: usize,
    pub k: usize,
}

impl SpaceSpec {
    pub fn full(r: usize, k: usize) -> Self {
        SpaceSpec {
            family: Family::Full,
            r,
            k,
        }
    }

    pub fn minus(r: usize, k: usize) -> Self {
        SpaceSpec {
            family: Family::Minus,
            r,
            k,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k > n || n > 3 {
            return Err(FeecError::DimensionMismatch {
                expected: n,
                found: self.k,
            });
        }
        let ok = match self.family {
            Family::Full => self.r <= MAX_POLY_DEGREE && (self.r >= 1 || self.k == n),
            Family::Minus => (1..=MAX_POLY_DEGREE).contains(&self.r),
        };
        if ok {
            Ok(())
        } else {
            Err(FeecError::UnsupportedDegree {
                dim: n,
                degree: self.r,
            })
        }
    }

    /// Representative used for comparisons: `P_r^-Λ^0 = P_rΛ^0` and
    /// `P_rΛ^n = P_{r+1}^-Λ^n`.
    pub fn canonical(&self, n: usize) -> SpaceSpec {
        match self.family {
            Family::Minus if self.k == 0 => SpaceSpec::full(self.r, 0),
            Family::Full if self.k == n && n > 0 => SpaceSpec::minus(self.r + 1, self.k),
            _ => *self,
        }
    }

    /// Closed-form dimension on an n-simplex.
    pub fn dimension(&self, n: usize) -> usize {
        let (r, k) = (self.r, self.k);
        match self.family {
            Family::Full => binom(r + n, r + k) * binom(r + k, k),
            Family::Minus => binom(r + n, r + k) * binom(r + k - 1, k),
        }
    }

    /// Highest polynomial degree of the coefficients.
    pub fn degree(&self) -> usize {
        self.r
    }

    pub fn parse(token: &str, k: usize) -> Result<SpaceSpec> {
        let t = token.trim();
        let body = t
            .strip_prefix('P')
            .ok_or_else(|| FeecError::InvalidConfig(format!("bad space token {t:?}")))?;
        let (digits, minus) = match body.strip_suffix('-') {
            Some(d) => (d, true),
            None => (body, false),
        };
        let r: usize = digits
            .parse()
            .map_err(|_| FeecError::InvalidConfig(format!("bad degree in {t:?}")))?;
        Ok(if minus {
            SpaceSpec::minus(r, k)
        } else {
            SpaceSpec::full(r, k)
        })
    }
}

impl fmt::Display for SpaceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Full => write!(f, "P{}Λ{}", self.r, self.k),
            Family::Minus => write!(f, "P{}-Λ{}", self.r, self.k),
        }
    }
}

/// Spaces for `k = 0..n` forming a finite element de Rham complex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexSpec {
    pub spaces: Vec<SpaceSpec>,
}

impl ComplexSpec {
    /// Accepts `P<r>-minus`, `P<r>-full`, or a comma list such as `P1,P1-,P1-`.
    pub fn parse(s: &str, n: usize) -> Result<ComplexSpec> {
        let s = s.trim();
        let spaces = if let Some(r) = s.strip_suffix("-minus") {
            let r: usize = r
                .strip_prefix('P')
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| FeecError::InvalidConfig(format!("bad complex {s:?}")))?;
            (0..=n)
                .map(|k| if k == 0 { SpaceSpec::full(r, 0) } else { SpaceSpec::minus(r, k) })
                .collect()
        } else if let Some(r) = s.strip_suffix("-full") {
            let r: usize = r
                .strip_prefix('P')
                .and_then(|d| d.parse().ok())
                .ok_or_else(|| FeecError::InvalidConfig(format!("bad complex {s:?}")))?;
            if r < n {
                return Err(FeecError::InvalidConfig(format!(
                    "P{r}-full needs degree at least {n} in dimension {n}"
                )));
            }
            (0..=n).map(|k| SpaceSpec::full(r - k, k)).collect()
        } else {
            let toks: Vec<&str> = s.split(',').collect();
            if toks.len() != n + 1 {
                return Err(FeecError::InvalidConfig(format!(
                    "complex {s:?} needs {} spaces",
                    n + 1
                )));
            }
            toks.iter()
                .enumerate()
                .map(|(k, t)| SpaceSpec::parse(t, k))
                .collect::<Result<Vec<_>>>()?
        };
        let c = ComplexSpec { spaces };
        c.validate(n)?;
        Ok(c)
    }

    /// Each space valid and consecutive pairs compatible:
    /// `Λ^k ∈ {P_rΛ^k, P_r^-Λ^k}` needs `Λ^{k+1} ∈ {P_{r−1}Λ^{k+1}, P_r^-Λ^{k+1}}`.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.spaces.len() != n + 1 {
            return Err(FeecError::InvalidConfig(format!(
                "complex has {} spaces, expected {}",
                self.spaces.len(),
                n + 1
            )));
        }
        for (k, s) in self.spaces.iter().enumerate() {
            if s.k != k {
                return Err(FeecError::InvalidConfig(format!("space {s} listed at degree {k}")));
            }
            s.validate(n).map_err(|e| FeecError::InvalidConfig(format!("{s}: {e}")))?;
        }
        for w in self.spaces.windows(2) {
            let (a, b) = (w[0], w[1]);
            let r = a.r;
            let mut allowed = vec![SpaceSpec::minus(r, b.k).canonical(n)];
            if r >= 1 {
                allowed.push(SpaceSpec::full(r - 1, b.k).canonical(n));
            }
            if !allowed.contains(&b.canonical(n)) {
                return Err(FeecError::InvalidConfig(format!("{a} → {b} is not a FEEC pair")));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.spaces.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" → ")
    }
}

fn full_basis(r: usize, k: usize, n: usize) -> Vec<PolyForm> {
    let mut out = Vec::new();
    for e in exponents_up_to(n, r as u32) {
        for s in alternators(k, n) {
            out.push(PolyForm::basic(n, s).mul_poly(&Poly::monomial(n, e, Rat::one())));
        }
    }
    out
}

fn minus_basis(r: usize, k: usize, n: usize) -> Vec<PolyForm> {
    if k == 0 {
        return full_basis(r, 0, n);
    }
    if r == 0 {
        return Vec::new();
    }
    let mut span = full_basis(r - 1, k, n);
    if k < n {
        for e in exponents_of_degree(n, (r - 1) as u32) {
            for s in alternators(k + 1, n) {
                let f = PolyForm::basic(n, s).mul_poly(&Poly::monomial(n, e, Rat::one()));
                span.push(f.koszul().expect("k + 1 ≥ 1"));
            }
        }
    }
    independent_subset(span)
}

/// A basis of the local space on `Δ^n`; its size matches the closed form.
pub fn local_space_basis(spec: SpaceSpec, n: usize) -> Result<Vec<PolyForm>> {
    spec.validate(n)?;
    Ok(match spec.family {
        Family::Full => full_basis(spec.r, spec.k, n),
        Family::Minus => minus_basis(spec.r, spec.k, n),
    })
}

/// Weight forms of the degrees of freedom on an m-face, in face coordinates.
pub fn weight_basis(spec: SpaceSpec, m: usize) -> Vec<PolyForm> {
    if m < spec.k {
        return Vec::new();
    }
    let j = m - spec.k;
    match spec.family {
        Family::Full => {
            let s = spec.r as i64 + spec.k as i64 - m as i64;
            if s < 0 {
                Vec::new()
            } else if j == 0 {
                full_basis(s as usize, 0, m)
            } else {
                minus_basis(s as usize, j, m)
            }
        }
        Family::Minus => {
            let s = spec.r as i64 + spec.k as i64 - m as i64 - 1;
            if s < 0 {
                Vec::new()
            } else {
                full_basis(s as usize, j, m)
            }
        }
    }
}

/// Vertex `i` of `Δ^n` (origin, then unit vectors).
pub fn reference_vertex(n: usize, i: usize) -> Vec<Rat> {
    (0..n)
        .map(|j| if i >= 1 && j == i - 1 { Rat::one() } else { Rat::zero() })
        .collect()
}

pub fn reference_face_vertices(n: usize, mask: u8) -> Vec<Vec<Rat>> {
    indices(mask).into_iter().map(|i| reference_vertex(n, i)).collect()
}

/// `∫_F tr_F ω ∧ η` for a face given by rational vertices.
pub fn face_pairing(vertices: &[Vec<Rat>], omega: &PolyForm, eta: &PolyForm) -> Rat {
    let t = trace(vertices, omega);
    t.wedge(eta).expect("same face dimension").integrate_top()
}

/// A degree of freedom of the reference element.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RefDof {
    pub face_dim: usize,
    /// Local vertex subset of `Δ^n`.
    pub mask: u8,
    /// Position of the face among the `face_dim`-faces in lexicographic order.
    pub local_face: usize,
    pub eta: usize,
}

/// Dense polynomial evaluator for a fixed list of forms.
#[derive(Clone, Debug)]
pub struct LocalEvaluator {
    n: usize,
    ncomp: usize,
    nforms: usize,
    monomials: Vec<Exp>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl LocalEvaluator {
    pub fn new(forms: &[PolyForm], n: usize, k: usize) -> Self {
        let ncomp = binom(n, k);
        let mut index: HashMap<Exp, usize> = HashMap::new();
        let mut monomials = Vec::new();
        let mut rows = Vec::new();
        for f in forms {
            for s in alternators(k, n) {
                let mut row = Vec::new();
                for (e, c) in f.component(s).terms() {
                    let id = *index.entry(*e).or_insert_with(|| {
                        monomials.push(*e);
                        monomials.len() - 1
                    });
                    row.push((id, rat_to_f64(c)));
                }
                rows.push(row);
            }
        }
        LocalEvaluator {
            n,
            ncomp,
            nforms: forms.len(),
            monomials,
            rows,
        }
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn len(&self) -> usize {
        self.nforms
    }

    pub fn is_empty(&self) -> bool {
        self.nforms == 0
    }

    /// `out[i * ncomp + c]` = component `c` of form `i` at `u`.
    pub fn eval(&self, u: &[f64], out: &mut [f64]) {
        thread_local! {
            static MONO: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
        }
        MONO.with(|m| {
            let mut m = m.borrow_mut();
            m.clear();
            for e in &self.monomials {
                let mut v = 1.0;
                for i in 0..self.n {
                    for _ in 0..e[i] {
                        v *= u[i];
                    }
                }
                m.push(v);
            }
            for (o, row) in out.iter_mut().zip(&self.rows) {
                *o = row.iter().map(|(id, c)| c * m[*id]).sum();
            }
        });
    }
}

/// The reference element on `Δ^n`: DOFs and the dual basis.
#[derive(Debug)]
pub struct ReferenceElement {
    pub spec: SpaceSpec,
    pub n: usize,
    /// Weight bases by face dimension.
    pub weights: Vec<Vec<PolyForm>>,
    pub dofs: Vec<RefDof>,
    /// Dual basis: `dof_i(basis_j) = δ_ij`.
    pub basis: Vec<PolyForm>,
    pub eval: LocalEvaluator,
    pub eval_d: LocalEvaluator,
    float_weights: Vec<Vec<LocalEvaluator>>,
}

fn element_cache() -> &'static Mutex<HashMap<(SpaceSpec, usize), Arc<ReferenceElement>>> {
    static CACHE: OnceLock<Mutex<HashMap<(SpaceSpec, usize), Arc<ReferenceElement>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl ReferenceElement {
    /// Shared, lazily built element.
    pub fn get(spec: SpaceSpec, n: usize) -> Result<Arc<ReferenceElement>> {
        if let Some(e) = element_cache().lock().unwrap().get(&(spec, n)) {
            return Ok(e.clone());
        }
        let e = Arc::new(ReferenceElement::build(spec, n)?);
        element_cache().lock().unwrap().insert((spec, n), e.clone());
        Ok(e)
    }

    pub fn build(spec: SpaceSpec, n: usize) -> Result<ReferenceElement> {
        let candidates = local_space_basis(spec, n)?;
        let weights: Vec<Vec<PolyForm>> = (0..=n).map(|m| weight_basis(spec, m)).collect();
        let mut dofs = Vec::new();
        for m in 0..=n {
            for (local_face, mask) in alternators(m + 1, n + 1).into_iter().enumerate() {
                for eta in 0..weights[m].len() {
                    dofs.push(RefDof {
                        face_dim: m,
                        mask,
                        local_face,
                        eta,
                    });
                }
            }
        }
        if dofs.len() != candidates.len() {
            return Err(FeecError::UnisolvenceFailure(format!(
                "{spec}: {} degrees of freedom for a space of dimension {}",
                dofs.len(),
                candidates.len()
            )));
        }
        let matrix: Vec<Vec<Rat>> = dofs
            .iter()
            .map(|d| {
                let verts = reference_face_vertices(n, d.mask);
                candidates
                    .iter()
                    .map(|c| face_pairing(&verts, c, &weights[d.face_dim][d.eta]))
                    .collect()
            })
            .collect();
        let inv = inverse(&matrix)
            .ok_or_else(|| FeecError::UnisolvenceFailure(format!("{spec}: singular DOF matrix")))?;
        let basis: Vec<PolyForm> = (0..dofs.len())
            .map(|i| {
                let mut f = PolyForm::zero(n, spec.k);
                for (j, c) in candidates.iter().enumerate() {
                    if !inv[j][i].is_zero() {
                        f = f.add(&c.scale(&inv[j][i])).expect("same degree");
                    }
                }
                f
            })
            .collect();
        let eval = LocalEvaluator::new(&basis, n, spec.k);
        let dbasis: Vec<PolyForm> = basis.iter().map(|b| b.d()).collect();
        let eval_d = LocalEvaluator::new(&dbasis, n, spec.k + 1);
        let float_weights = weights
            .iter()
            .enumerate()
            .map(|(m, ws)| {
                ws.iter()
                    .map(|w| LocalEvaluator::new(std::slice::from_ref(w), m, m - spec.k))
                    .collect()
            })
            .collect();
        Ok(ReferenceElement {
            spec,
            n,
            weights,
            dofs,
            basis,
            eval,
            eval_d,
            float_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Exact value of a reference DOF on a form over `Δ^n`.
    pub fn dof_value(&self, i: usize, omega: &PolyForm) -> Rat {
        let d = &self.dofs[i];
        let verts = reference_face_vertices(self.n, d.mask);
        face_pairing(&verts, omega, &self.weights[d.face_dim][d.eta])
    }

    /// Evaluate weight form `eta` of face dimension `m` at face coordinates `t`.
    pub fn weight_values(&self, m: usize, eta: usize, t: &[f64], out: &mut [f64]) {
        self.float_weights[m][eta].eval(t, out);
    }

    /// Zeroing the DOFs of one face forces a vanishing trace on that face
    /// for the dual basis functions of other faces; equivalently traces of
    /// the dual basis onto each facet are the facet element's dual basis.
    pub fn check_trace_compatibility(&self) -> Result<()> {
        let n = self.n;
        if self.spec.k >= n {
            return Ok(());
        }
        let facet = ReferenceElement::get(self.spec, n - 1)?;
        for fmask in alternators(n, n + 1) {
            let fidx = indices(fmask);
            let verts = reference_face_vertices(n, fmask);
            for (i, d) in self.dofs.iter().enumerate() {
                let tr = trace(&verts, &self.basis[i]);
                let expect = if d.mask & !fmask == 0 {
                    // reindex the DOF face inside the facet
                    let sub: u8 = indices(d.mask)
                        .iter()
                        .map(|v| 1u8 << fidx.iter().position(|w| w == v).unwrap())
                        .fold(0, |a, b| a | b);
                    let j = facet
                        .dofs
                        .iter()
                        .position(|e| e.mask == sub && e.eta == d.eta && e.face_dim == d.face_dim)
                        .ok_or_else(|| FeecError::UnisolvenceFailure("facet DOF missing".into()))?;
                    facet.basis[j].clone()
                } else {
                    PolyForm::zero(n - 1, self.spec.k)
                };
                if tr != expect {
                    return Err(FeecError::UnisolvenceFailure(format!(
                        "{}: trace of basis form {i} on facet {fmask:#b} is not tangentially continuous",
                        self.spec
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether every dual basis form lies in the span of `other`.
    pub fn contained_in(&self, other: &[PolyForm]) -> bool {
        self.basis.iter().all(|b| in_span(other, b))
    }
}

/// A global degree of freedom: face, weight index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalDof {
    pub id: usize,
    pub face_dim: usize,
    pub face: usize,
    pub eta: usize,
}

/// Per-DOF geometry: face vertices and the map from ambient k-covectors to
/// the top-form integrand on `Δ^m`.
#[derive(Clone, Debug)]
struct DofFrame {
    origin: Vec3,
    jac: Mat,
    /// `pair[τ][w]`: coefficient of `ω_τ · η_w` in the integrand.
    pair: Vec<Vec<f64>>,
}

/// A finite element space on a mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    pub spec: SpaceSpec,
    mesh: Arc<Triangulation>,
    reference: Arc<ReferenceElement>,
    dofs: Vec<GlobalDof>,
    local_to_global: Vec<Vec<usize>>,
    frames: Vec<DofFrame>,
    /// Per cell, the k- and (k+1)-compounds of `M_T^{-1}`.
    pushforward: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

/// An FE function as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeFunction {
    pub space: SpaceSpec,
    pub coefficients: Vec<f64>,
}

pub fn build_fespace(mesh: Arc<Triangulation>, spec: SpaceSpec) -> Result<FeSpace> {
    let n = mesh.n();
    let reference = ReferenceElement::get(spec, n)?;
    // global numbering: by face dimension, face id, weight index
    let mut offset: Vec<Vec<usize>> = Vec::with_capacity(n + 1);
    let mut dofs = Vec::new();
    for m in 0..=n {
        let nw = reference.weights[m].len();
        let mut off = Vec::with_capacity(mesh.num_simplices(m));
        for f in 0..mesh.num_simplices(m) {
            off.push(dofs.len());
            for eta in 0..nw {
                dofs.push(GlobalDof {
                    id: dofs.len(),
                    face_dim: m,
                    face: f,
                    eta,
                });
            }
        }
        offset.push(off);
    }
    let local_to_global: Vec<Vec<usize>> = (0..mesh.num_cells())
        .map(|c| {
            reference
                .dofs
                .iter()
                .map(|d| offset[d.face_dim][mesh.cell_faces(c, d.face_dim)[d.local_face]] + d.eta)
                .collect()
        })
        .collect();
    let k = spec.k;
    let frames = dofs
        .iter()
        .map(|g| {
            let pts = mesh.simplex_coords(g.face_dim, g.face);
            let m = g.face_dim;
            let cols: Vec<Vec3> = pts[1..].iter().map(|p| crate::linalg::sub(p, &pts[0])).collect();
            let jac = Mat::from_cols(n, &cols);
            let comp = jac.compound(k);
            let wsig = alternators(m - k, m);
            let pair = alternators(k, n)
                .iter()
                .enumerate()
                .map(|(t, _)| {
                    let mut row = vec![0.0; wsig.len()];
                    for (s, &sig) in alternators(k, m).iter().enumerate() {
                        let c = complement(sig, m);
                        let sign = wedge_sign(sig, c) as f64;
                        row[index_of(c, m)] += comp[t][s] * sign;
                    }
                    row
                })
                .collect();
            DofFrame {
                origin: pts[0],
                jac,
                pair,
            }
        })
        .collect();
    let pushforward = (0..mesh.num_cells())
        .map(|c| {
            let mi = mesh.chart(c).m_inv;
            (mi.compound(k), if k < n { mi.compound(k + 1) } else { Vec::new() })
        })
        .collect();
    Ok(FeSpace {
        spec,
        mesh,
        reference,
        dofs,
        local_to_global,
        frames,
        pushforward,
    })
}

impl FeSpace {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn ncomp(&self) -> usize {
        binom(self.n(), self.spec.k)
    }

    pub fn reference(&self) -> &Arc<ReferenceElement> {
        &self.reference
    }

    pub fn dofs(&self) -> &[GlobalDof] {
        &self.dofs
    }

    pub fn local_dofs(&self, cell: usize) -> &[usize] {
        &self.local_to_global[cell]
    }

    /// Weight-form quadrature degree needed for exact integration of the
    /// integrand `tr ω ∧ η` for ω in this space.
    pub fn pairing_degree(&self) -> usize {
        let wdeg = self.reference.weights.iter().flatten().filter_map(|w| w.degree()).max().unwrap_or(0) as usize;
        self.spec.r + wdeg
    }

    /// Point on the DOF face at face coordinates `t`.
    pub fn dof_point(&self, g: usize, t: &[f64]) -> Vec3 {
        let fr = &self.frames[g];
        let v = fr.jac.apply(t);
        [fr.origin[0] + v[0], fr.origin[1] + v[1], fr.origin[2] + v[2]]
    }

    pub fn dof_jacobian(&self, g: usize) -> &Mat {
        &self.frames[g].jac
    }

    /// Covector `w` with `∫_F tr ω ∧ η = ∫_{Δ^m} Σ_τ ω_τ(x(t)) w_τ(t) dt`.
    pub fn dof_weight(&self, g: usize, t: &[f64]) -> [f64; 3] {
        let d = &self.dofs[g];
        let fr = &self.frames[g];
        let mut eta = [0.0; 3];
        let nw = fr.pair.first().map_or(0, |r| r.len());
        self.reference.weight_values(d.face_dim, d.eta, t, &mut eta[..nw]);
        let mut w = [0.0; 3];
        for (tau, row) in fr.pair.iter().enumerate() {
            w[tau] = row.iter().zip(&eta).map(|(a, b)| a * b).sum();
        }
        w
    }

    /// Values of the local basis forms of `cell` at `x`, in the ambient frame:
    /// `out[i * ncomp + c]`.
    pub fn eval_local(&self, cell: usize, x: &[f64], out: &mut [f64]) {
        self.eval_local_with(cell, x, out, false)
    }

    /// Same for the exterior derivatives of the local basis forms.
    pub fn eval_local_d(&self, cell: usize, x: &[f64], out: &mut [f64]) {
        self.eval_local_with(cell, x, out, true)
    }

    fn eval_local_with(&self, cell: usize, x: &[f64], out: &mut [f64], deriv: bool) {
        thread_local! {
            static REF: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
        }
        let n = self.n();
        let u = self.mesh.chart(cell).pullback_point(x);
        let (ev, comp) = if deriv {
            (&self.reference.eval_d, &self.pushforward[cell].1)
        } else {
            (&self.reference.eval, &self.pushforward[cell].0)
        };
        let nc = ev.ncomp();
        if deriv && self.spec.k >= n {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        REF.with(|buf| {
            let mut buf = buf.borrow_mut();
            buf.resize(ev.len() * nc, 0.0);
            ev.eval(&u[..n], &mut buf);
            for i in 0..ev.len() {
                for s in 0..nc {
                    let mut acc = 0.0;
                    for t in 0..nc {
                        acc += buf[i * nc + t] * comp[t][s];
                    }
                    out[i * nc + s] = acc;
                }
            }
        });
    }

    /// Value of an FE function at `x` in `cell`.
    pub fn eval_function(&self, coeffs: &[f64], cell: usize, x: &[f64]) -> Vec<f64> {
        let nc = self.ncomp();
        let loc = self.local_dofs(cell);
        let mut vals = vec![0.0; loc.len() * nc];
        self.eval_local(cell, x, &mut vals);
        let mut out = vec![0.0; nc];
        for (i, &g) in loc.iter().enumerate() {
            for c in 0..nc {
                out[c] += coeffs[g] * vals[i * nc + c];
            }
        }
        out
    }

    /// `(rows, shift)` of `x ↦ A_T^{-1} x` in exact arithmetic.
    fn inverse_chart_rat(&self, cell: usize) -> (Vec<Vec<Rat>>, Vec<Rat>) {
        let n = self.n();
        let ch = self.mesh.chart(cell);
        let m: Vec<Vec<Rat>> = (0..n).map(|i| (0..n).map(|j| rat_from_f64(ch.m.a[i][j])).collect()).collect();
        let inv = inverse(&m).expect("non-degenerate cell");
        let b: Vec<Rat> = (0..n).map(|i| rat_from_f64(ch.b[i])).collect();
        let shift = (0..n)
            .map(|i| {
                let mut s = Rat::zero();
                for j in 0..n {
                    s -= &inv[i][j] * &b[j];
                }
                s
            })
            .collect();
        (inv, shift)
    }

    /// Exact piecewise form with the given coefficients.
    pub fn to_piecewise(&self, coeffs: &[Rat]) -> PiecewiseForm {
        let n = self.n();
        let cells = (0..self.mesh.num_cells())
            .map(|c| {
                let mut local = PolyForm::zero(n, self.spec.k);
                for (i, &g) in self.local_dofs(c).iter().enumerate() {
                    if !coeffs[g].is_zero() {
                        local = local.add(&self.reference.basis[i].scale(&coeffs[g])).unwrap();
                    }
                }
                let (rows, shift) = self.inverse_chart_rat(c);
                local.pullback_affine(n, &rows, &shift)
            })
            .collect();
        PiecewiseForm::new(cells, Continuity::Tangential)
    }

    pub fn basis_form(&self, g: usize) -> PiecewiseForm {
        let mut c = vec![Rat::zero(); self.dim()];
        c[g] = Rat::one();
        self.to_piecewise(&c)
    }

    fn face_vertices_rat(&self, dim: usize, face: usize) -> Vec<Vec<Rat>> {
        let n = self.n();
        self.mesh
            .simplex_coords(dim, face)
            .iter()
            .map(|p| (0..n).map(|i| rat_from_f64(p[i])).collect())
            .collect()
    }

    /// Exact `∫_F tr_F ω ∧ η` for a piecewise polynomial form; the trace is
    /// taken from the lowest-numbered cell containing the face.
    pub fn dof_apply_exact(&self, g: usize, omega: &PiecewiseForm) -> Rat {
        let d = &self.dofs[g];
        let cell = self.mesh.cofaces(d.face_dim, d.face)[0];
        let verts = self.face_vertices_rat(d.face_dim, d.face);
        face_pairing(&verts, &omega.cells[cell], &self.reference.weights[d.face_dim][d.eta])
    }

    pub fn dof_apply(&self, g: usize, omega: &PiecewiseForm) -> f64 {
        rat_to_f64(&self.dof_apply_exact(g, omega))
    }

    /// DOF of a sampled form by face quadrature; `None` from the sampler
    /// means the form is undefined there.
    pub fn dof_apply_fn(
        &self,
        g: usize,
        omega: &dyn Fn(&Vec3) -> Option<Vec<f64>>,
        degree: usize,
    ) -> Result<f64> {
        let m = self.dofs[g].face_dim;
        let rule = simplex_rule(m, degree.min(crate::quadrature::MAX_DEGREE))?;
        let mut acc = 0.0;
        for (t, w) in rule.points.iter().zip(&rule.weights) {
            let x = self.dof_point(g, &t[..m]);
            let v = omega(&x).ok_or_else(|| {
                FeecError::NonIntegrableTrace(format!("form undefined at {:?}", &x[..self.n()]))
            })?;
            let wt = self.dof_weight(g, &t[..m]);
            acc += w * v.iter().zip(&wt).map(|(a, b)| a * b).sum::<f64>();
        }
        if !acc.is_finite() {
            return Err(FeecError::SingularDof(g));
        }
        Ok(acc)
    }

    /// Canonical interpolation of a piecewise polynomial form (exact).
    pub fn interpolate_exact(&self, omega: &PiecewiseForm) -> Vec<Rat> {
        (0..self.dim()).map(|g| self.dof_apply_exact(g, omega)).collect()
    }

    pub fn interpolate(&self, omega: &PiecewiseForm) -> Vec<f64> {
        self.interpolate_exact(omega).iter().map(rat_to_f64).collect()
    }

    pub fn interpolate_fn(&self, omega: &dyn Fn(&Vec3) -> Option<Vec<f64>>, degree: usize) -> Result<Vec<f64>> {
        (0..self.dim()).map(|g| self.dof_apply_fn(g, omega, degree)).collect()
    }

    /// Matrix of `d : self → next` in the two DOF bases, from the reference
    /// element (`D[j][i] = dof_j(d φ_i)`).
    pub fn derivative_matrix(&self, next: &FeSpace) -> Result<nalgebra::DMatrix<f64>> {
        let local = reference_derivative(&self.reference, &next.reference)?;
        let mut d = nalgebra::DMatrix::zeros(next.dim(), self.dim());
        for c in 0..self.mesh.num_cells() {
            let rows = next.local_dofs(c);
            let cols = self.local_dofs(c);
            for (j, &gj) in rows.iter().enumerate() {
                for (i, &gi) in cols.iter().enumerate() {
                    d[(gj, gi)] = local[j][i];
                }
            }
        }
        Ok(d)
    }

    pub fn to_function(&self, coefficients: Vec<f64>) -> FeFunction {
        FeFunction {
            space: self.spec,
            coefficients,
        }
    }
}

/// `dof_j(d φ_i)` on the reference element; fails if `d φ_i` leaves the
/// next space.
pub fn reference_derivative(a: &ReferenceElement, b: &ReferenceElement) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![0.0; a.dim()]; b.dim()];
    for (i, phi) in a.basis.iter().enumerate() {
        let dphi = phi.d();
        let mut recon = PolyForm::zero(a.n, a.spec.k + 1);
        for j in 0..b.dim() {
            let v = b.dof_value(j, &dphi);
            if !v.is_zero() {
                recon = recon.add(&b.basis[j].scale(&v)).unwrap();
            }
            out[j][i] = rat_to_f64(&v);
        }
        if recon != dphi {
            return Err(FeecError::UnisolvenceFailure(format!(
                "d maps {} outside {}",
                a.spec, b.spec
            )));
        }
    }
    Ok(out)
}

/// The spaces of a complex on one mesh.
#[derive(Clone, Debug)]
pub struct FeComplex {
    pub spec: ComplexSpec,
    pub spaces: Vec<FeSpace>,
}

impl FeComplex {
    pub fn build(mesh: Arc<Triangulation>, spec: &ComplexSpec) -> Result<FeComplex> {
        spec.validate(mesh.n())?;
        let spaces = spec
            .spaces
            .iter()
            .map(|s| build_fespace(mesh.clone(), *s))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeComplex {
            spec: spec.clone(),
            spaces,
        })
    }

    /// `D_k : Λ^k(𝒯) → Λ^{k+1}(𝒯)`.
    pub fn derivative(&self, k: usize) -> Result<nalgebra::DMatrix<f64>> {
        self.spaces[k].derivative_matrix(&self.spaces[k + 1])
    }
}

/// Constant-coefficient polynomial form with the given float components.
pub fn constant_form(n: usize, k: usize, comps: &[f64]) -> PolyForm {
    PolyForm::from_components(
        n,
        k,
        comps.iter().map(|c| Poly::constant(n, rat_from_f64(*c))).collect(),
    )
}

/// Polynomial form with small integer coefficients drawn from `rng`,
/// of total degree `≤ degree`.
pub fn random_poly_form(n: usize, k: usize, degree: usize, rng: &mut impl rand::Rng) -> PolyForm {
    let comps = alternators(k, n)
        .iter()
        .map(|_| {
            let mut p = Poly::zero(n);
            for e in exponents_up_to(n, degree as u32) {
                let c: i64 = rng.gen_range(-3..=3);
                p = &p + &Poly::monomial(n, e, rat_int(c));
            }
            p
        })
        .collect();
    PolyForm::from_components(n, k, comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    #[test]
    fn local_dimensions() {
        assert_eq!(local_space_basis(SpaceSpec::full(1, 1), 2).unwrap().len(), 6);
        assert_eq!(local_space_basis(SpaceSpec::minus(1, 1), 2).unwrap().len(), 3);
        assert_eq!(local_space_basis(SpaceSpec::minus(1, 1), 3).unwrap().len(), 6);
        for n in 1..=3 {
            for k in 0..=n {
                for r in 1..=2 {
                    for s in [SpaceSpec::full(r, k), SpaceSpec::minus(r, k)] {
                        assert_eq!(local_space_basis(s, n).unwrap().len(), s.dimension(n), "{s} n={n}");
                    }
                }
            }
        }
    }

    #[test]
    fn square_space_dimensions() {
        let mesh = Arc::new(generate("unit_square", 0).unwrap());
        assert_eq!(build_fespace(mesh.clone(), SpaceSpec::minus(1, 1)).unwrap().dim(), 5);
        assert_eq!(build_fespace(mesh.clone(), SpaceSpec::full(1, 0)).unwrap().dim(), 4);
        assert_eq!(build_fespace(mesh, SpaceSpec::minus(1, 2)).unwrap().dim(), 2);
    }

    #[test]
    fn whitney_edge_dofs() {
        let mesh = Arc::new(generate("unit_square", 0).unwrap());
        let sp = build_fespace(mesh.clone(), SpaceSpec::minus(1, 1)).unwrap();
        for g in 0..sp.dim() {
            let w = sp.basis_form(g);
            for h in 0..sp.dim() {
                let v = sp.dof_apply_exact(h, &w);
                assert_eq!(v, if g == h { Rat::one() } else { Rat::zero() });
            }
        }
        let zero = PiecewiseForm::uniform(&PolyForm::zero(2, 1), mesh.num_cells());
        assert!(sp.interpolate(&zero).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn complex_parsing() {
        let c = ComplexSpec::parse("P1-minus", 2).unwrap();
        assert_eq!(c.spaces, vec![SpaceSpec::full(1, 0), SpaceSpec::minus(1, 1), SpaceSpec::minus(1, 2)]);
        assert!(ComplexSpec::parse("P2-full", 2).is_ok());
        assert!(ComplexSpec::parse("P1,P1,P1-", 2).is_err());
        assert!(ComplexSpec::parse("P2,P2-,P1", 2).is_ok());
    }

    #[test]
    fn traces_match_facet_elements() {
        for n in 1..=3 {
            for k in 0..=n {
                for r in 1..=2 {
                    for s in [SpaceSpec::full(r, k), SpaceSpec::minus(r, k)] {
                        ReferenceElement::get(s, n).unwrap().check_trace_compatibility().unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_stays_in_complex() {
        for n in 1..=3 {
            for name in ["P1-minus", "P2-minus", "P3-full"] {
                let Ok(c) = ComplexSpec::parse(name, n) else { continue };
                for w in c.spaces.windows(2) {
                    let a = ReferenceElement::get(w[0], n).unwrap();
                    let b = ReferenceElement::get(w[1], n).unwrap();
                    reference_derivative(&a, &b).unwrap();
                }
            }
        }
    }
}
