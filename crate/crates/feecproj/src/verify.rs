//! Verification suites. Each check names the property it witnesses, the
//! module that owns it, its measured value and its tolerance.

use crate::chains::{deformation_bound, WeightedChain};
use crate::config::{RunConfig, Thresholds};
use crate::error::{FeecError, Result};
use crate::extension::{collar_band_norms, extension_weak_residual, ExtendedField, FnField, FormField, PiecewiseField};
use crate::forms::{weak_derivative_residual, Continuity, PiecewiseForm, PolyForm};
use crate::geometry::random_barycentric;
use crate::inverse::{boundary_ratio, measure_inverse_constants};
use crate::ledger::SAFETY;
use crate::linalg::{axpy, dist, norm, Mat, Vec3};
use crate::mesh::Triangulation;
use crate::mollify::Mollifier;
use crate::poly::{rat, rat_int, Rat};
use crate::problem::Problem;
use crate::projection::{broken_gram, broken_space, commutator, gram_matrix, induced_norm, Projection, Smoother};
use crate::quadrature::{ball_volume, simplex_rule, MAX_DEGREE};
use crate::spaces::{random_poly_form, FeSpace, ReferenceElement, SpaceSpec};
use crate::study::{default_epsilons, interpolation_error_study, StudyBands};
use nalgebra::{DMatrix, DVector};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Random instances per exact-calculus property.
pub const CALCULUS_INSTANCES: usize = 100;

/// Accepted range of a measured value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
}

impl Bound {
    pub fn holds(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost(t) => v <= t,
            Bound::AtLeast(t) => v >= t,
            Bound::Within(lo, hi) => v >= lo && v <= hi,
        }
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AtMost(t) => write!(f, "<= {t:e}"),
            Bound::AtLeast(t) => write!(f, ">= {t:e}"),
            Bound::Within(lo, hi) => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Module whose invariant this is.
    pub module: String,
    /// The invariant in words.
    pub invariant: String,
    pub value: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, module: &str, invariant: &str, value: f64, bound: Bound) -> Check {
        Check {
            name: name.into(),
            module: module.into(),
            invariant: invariant.into(),
            value,
            pass: bound.holds(value),
            bound,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Calculus,
    Spaces,
    Geometry,
    Mollifier,
    Projection,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Calculus, Suite::Spaces, Suite::Geometry, Suite::Mollifier, Suite::Projection];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::Calculus => "calculus",
            Suite::Spaces => "spaces",
            Suite::Geometry => "geometry",
            Suite::Mollifier => "mollifier",
            Suite::Projection => "projection",
        }
    }

    /// Suites selected by a command-line name; `all` selects every suite.
    pub fn parse(s: &str) -> Result<Vec<Suite>> {
        if s == "all" {
            return Ok(Suite::ALL.to_vec());
        }
        Suite::ALL
            .iter()
            .find(|x| x.name() == s)
            .map(|x| vec![*x])
            .ok_or_else(|| FeecError::InvalidConfig(format!("unknown suite '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl SuiteResult {
    fn new(suite: Suite, checks: Vec<Check>) -> SuiteResult {
        SuiteResult {
            suite,
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Run one suite. `problem` is built on first use and shared by later
/// suites of the same run.
pub fn run_suite(suite: Suite, cfg: &RunConfig, problem: &mut Option<Problem>) -> Result<SuiteResult> {
    if suite == Suite::Calculus {
        return Ok(SuiteResult::new(suite, calculus_checks(&cfg.thresholds, cfg.seed)));
    }
    if problem.is_none() {
        *problem = Some(cfg.problem()?);
    }
    let pb = problem.as_ref().expect("built above");
    let t = &cfg.thresholds;
    let checks = match suite {
        Suite::Calculus => unreachable!(),
        Suite::Spaces => space_checks(pb, t, cfg.seed)?,
        Suite::Geometry => geometry_checks(pb, t, cfg.seed)?,
        Suite::Mollifier => mollifier_checks(pb, t, cfg.seed)?,
        Suite::Projection => {
            let mut c = projection_checks(pb, t, cfg.seed, cfg.quad_degree)?;
            c.extend(epsilon_slope_checks(pb, t, cfg.seed)?);
            c
        }
    };
    Ok(SuiteResult::new(suite, checks))
}

fn exact_check(name: &str, module: &str, invariant: &str, failures: usize, t: &Thresholds) -> Check {
    Check::new(name, module, invariant, failures as f64, Bound::AtMost(t.exact))
}

fn small_rat(rng: &mut ChaCha8Rng) -> Rat {
    rat(rng.gen_range(-4..=4), rng.gen_range(1..=3))
}

fn rat_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Rat>> {
    (0..rows).map(|_| (0..cols).map(|_| small_rat(rng)).collect()).collect()
}

/// Random point with coordinates on a grid of step 1/8 in `[-1, 1]^n`.
fn grid_point(n: usize, rng: &mut ChaCha8Rng) -> Vec3 {
    std::array::from_fn(|i| if i < n { rng.gen_range(-8..=8) as f64 / 8.0 } else { 0.0 })
}

/// Up to three random weighted k-simplices in `R^n`.
fn random_chain(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<WeightedChain> {
    let count = rng.gen_range(1..=3);
    let terms = (0..count)
        .map(|_| (rng.gen_range(-3..=3) as f64 / 2.0, (0..=k).map(|_| grid_point(n, rng)).collect()))
        .collect();
    WeightedChain::new(n, k, terms)
}

/// Largest Euclidean norm of `ω` over positive-weight quadrature nodes
/// exact for `ω` and the vertices of the chain's simplices.
fn node_max(c: &WeightedChain, omega: &PolyForm) -> Result<f64> {
    let k = c.k;
    let f = omega.to_float();
    let deg = omega.degree().unwrap_or(0) as usize;
    let rule = if k > 0 { Some(simplex_rule(k, deg.max(1))?) } else { None };
    let mut best = 0.0f64;
    for (_, verts) in c.terms() {
        let mut pts: Vec<Vec3> = verts.clone();
        if let Some(rule) = &rule {
            for u in &rule.points {
                let mut x = verts[0];
                for i in 0..k {
                    for d in 0..3 {
                        x[d] += u[i] * (verts[i + 1][d] - verts[0][d]);
                    }
                }
                pts.push(x);
            }
        }
        for x in &pts {
            best = best.max(norm(&f.eval(x)));
        }
    }
    Ok(best)
}

/// Exact and floating-point identities of polynomial forms and chains.
pub fn calculus_checks(t: &Thresholds, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let forms = "polydiff-forms";

    let mut bad = 0;
    for _ in 0..CALCULUS_INSTANCES {
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(0..=n);
        let w = random_poly_form(n, k, rng.gen_range(1..=3), &mut rng);
        if !w.d().d().is_zero() {
            bad += 1;
        }
    }
    checks.push(exact_check("d_squared", forms, "d(dω) = 0 exactly", bad, t));

    let mut bad = 0;
    for _ in 0..CALCULUS_INSTANCES {
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(0..=n);
        let l = rng.gen_range(0..=n - k);
        let a = random_poly_form(n, k, rng.gen_range(0..=2), &mut rng);
        let b = random_poly_form(n, l, rng.gen_range(0..=2), &mut rng);
        let lhs = a.wedge(&b).expect("degrees fit").d();
        let sign = if k % 2 == 0 { rat_int(1) } else { rat_int(-1) };
        let rhs = a
            .d()
            .wedge(&b)
            .and_then(|x| x.add(&a.wedge(&b.d())?.scale(&sign)))
            .expect("degrees fit");
        if lhs != rhs {
            bad += 1;
        }
    }
    checks.push(exact_check(
        "leibniz",
        forms,
        "d(a∧b) = da∧b + (−1)^k a∧db exactly",
        bad,
        t,
    ));

    let (mut bad_fun, mut bad_d) = (0, 0);
    for _ in 0..CALCULUS_INSTANCES {
        let (m, p, n) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3));
        let k = rng.gen_range(0..=n);
        let w = random_poly_form(n, k, rng.gen_range(0..=2), &mut rng);
        let (phi, phi_b) = (rat_matrix(n, p, &mut rng), rat_matrix(n, 1, &mut rng));
        let (psi, psi_b) = (rat_matrix(p, m, &mut rng), rat_matrix(p, 1, &mut rng));
        let phi_b: Vec<Rat> = phi_b.into_iter().map(|r| r[0].clone()).collect();
        let psi_b: Vec<Rat> = psi_b.into_iter().map(|r| r[0].clone()).collect();
        let comp: Vec<Vec<Rat>> = (0..n)
            .map(|i| {
                (0..m)
                    .map(|j| (0..p).fold(Rat::zero(), |acc, l| acc + &phi[i][l] * &psi[l][j]))
                    .collect()
            })
            .collect();
        let comp_b: Vec<Rat> = (0..n)
            .map(|i| (0..p).fold(phi_b[i].clone(), |acc, l| acc + &phi[i][l] * &psi_b[l]))
            .collect();
        let once = w.pullback_affine(p, &phi, &phi_b);
        if once.pullback_affine(m, &psi, &psi_b) != w.pullback_affine(m, &comp, &comp_b) {
            bad_fun += 1;
        }
        if once.d() != w.d().pullback_affine(p, &phi, &phi_b) {
            bad_d += 1;
        }
    }
    checks.push(exact_check(
        "pullback_functoriality",
        forms,
        "(φ∘ψ)^* ω = ψ^* φ^* ω exactly for affine maps",
        bad_fun,
        t,
    ));
    checks.push(exact_check(
        "pullback_commutes_with_d",
        forms,
        "d φ^* ω = φ^* dω exactly for affine maps",
        bad_d,
        t,
    ));

    let mut bad = 0;
    for _ in 0..CALCULUS_INSTANCES {
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(0..=n);
        let r = rng.gen_range(1..=if n == 3 { 2 } else { 3 });
        let spec = if rng.gen_bool(0.5) { SpaceSpec::full(r, k) } else { SpaceSpec::minus(r, k) };
        let Ok(el) = ReferenceElement::get(spec, n) else {
            bad += 1;
            continue;
        };
        let coeffs: Vec<Rat> = (0..el.dim()).map(|_| small_rat(&mut rng)).collect();
        let mut w = PolyForm::zero(n, k);
        for (c, b) in coeffs.iter().zip(&el.basis) {
            w = w.add(&b.scale(c)).expect("same degree");
        }
        if (0..el.dim()).any(|i| el.dof_value(i, &w) != coeffs[i]) {
            bad += 1;
        }
    }
    checks.push(exact_check(
        "unisolvence",
        "feec-spaces",
        "the degrees of freedom recover the coefficients of every local function exactly",
        bad,
        t,
    ));

    let chains = "dof-chains";
    let mut bad = 0;
    let mut stokes = 0.0f64;
    for _ in 0..CALCULUS_INSTANCES {
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(1..=n);
        let Ok(c) = random_chain(n, k, &mut rng) else { continue };
        if !c.boundary().boundary().is_empty() {
            bad += 1;
        }
        let w = random_poly_form(n, k - 1, rng.gen_range(0..=3), &mut rng);
        stokes = stokes.max((c.boundary().integrate(&w) - c.integrate(&w.d())).abs());
    }
    checks.push(exact_check("boundary_squared", chains, "∂∂c = 0 for random chains", bad, t));
    checks.push(Check::new(
        "stokes",
        chains,
        "∫_{∂c} ω = ∫_c dω for polynomial ω",
        stokes,
        Bound::AtMost(t.stokes),
    ));

    let mut ratio = 0.0f64;
    for _ in 0..CALCULUS_INSTANCES {
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(0..=n);
        let Ok(c) = random_chain(n, k, &mut rng) else { continue };
        let w = random_poly_form(n, k, rng.gen_range(0..=2), &mut rng);
        let Ok(m) = node_max(&c, &w) else { continue };
        let rhs = c.mass() * m;
        if rhs > 0.0 {
            ratio = ratio.max(c.integrate(&w).abs() / rhs);
        }
    }
    checks.push(Check::new(
        "duality",
        chains,
        "|∫_c ω| ≤ mass(c) · node-max |ω|",
        ratio,
        Bound::AtMost(1.0 + t.duality_slack),
    ));

    let mut ratio = 0.0f64;
    for _ in 0..CALCULUS_INSTANCES {
        let n = rng.gen_range(1..=3);
        let k = rng.gen_range(0..=n);
        let Ok(c) = random_chain(n, k, &mut rng) else { continue };
        let delta = rng.gen_range(0.01..0.2);
        let mut m = Mat::identity(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] += delta * rng.gen_range(-1.0..1.0);
            }
        }
        let b: Vec3 = std::array::from_fn(|i| if i < n { delta * rng.gen_range(-1.0..1.0) } else { 0.0 });
        let moved = c.pushforward_affine(&m, &b);
        let disp = c
            .terms()
            .iter()
            .flat_map(|(_, v)| v.iter())
            .map(|p| {
                let q = m.apply(p);
                dist(&[q[0] + b[0], q[1] + b[1], q[2] + b[2]], p)
            })
            .fold(0.0, f64::max);
        // affine coefficients: |ω| is convex, so its supremum over the
        // bounding box is attained at a corner
        let w = random_poly_form(n, k, 1, &mut rng);
        let (wf, dwf) = (w.to_float(), w.d().to_float());
        let pts: Vec<Vec3> = c.terms().iter().chain(moved.terms()).flat_map(|(_, v)| v.clone()).collect();
        let lo: Vec3 = std::array::from_fn(|i| pts.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min));
        let hi: Vec3 = std::array::from_fn(|i| pts.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max));
        let mut sup = 0.0f64;
        for corner in 0..(1usize << n) {
            let x: Vec3 = std::array::from_fn(|i| if i < n && corner & (1 << i) != 0 { hi[i] } else { lo[i] });
            sup = sup.max(norm(&wf.eval(&x))).max(norm(&dwf.eval(&x)));
        }
        let bound = deformation_bound(&c, disp, m.spectral_norm()) * sup;
        if bound > 0.0 {
            ratio = ratio.max((moved.integrate(&w) - c.integrate(&w)).abs() / bound);
        }
    }
    checks.push(Check::new(
        "pullback_estimate",
        chains,
        "|∫_{φ_*c} ω − ∫_c ω| ≤ deformation bound · max(‖ω‖_∞, ‖dω‖_∞)",
        ratio,
        Bound::AtMost(1.0 + t.duality_slack),
    ));
    checks
}

/// Interpolation, weak derivatives and DOF chains on the configured complex.
pub fn space_checks(pb: &Problem, t: &Thresholds, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let spaces = &pb.complex.spaces;
    let n = pb.n();
    for (k, sp) in spaces.iter().enumerate() {
        let mut bad = 0;
        for g in 0..sp.dim() {
            let v = sp.interpolate_exact(&sp.basis_form(g));
            if v.iter().enumerate().any(|(h, c)| *c != if g == h { Rat::one() } else { Rat::zero() }) {
                bad += 1;
            }
        }
        for _ in 0..3 {
            let coeffs: Vec<Rat> = (0..sp.dim()).map(|_| small_rat(&mut rng)).collect();
            if sp.interpolate_exact(&sp.to_piecewise(&coeffs)) != coeffs {
                bad += 1;
            }
        }
        checks.push(exact_check(
            &format!("interpolation_idempotent_k{k}"),
            "feec-spaces",
            "I ω = ω exactly on the FE space",
            bad,
            t,
        ));
        let el = sp.reference();
        let c = measure_inverse_constants(el.spec, n, pb.spec.p, pb.spec.effort.inverse_samples, seed)?;
        let replay = match &c.boundary_argmax {
            Some((mask, a)) => (boundary_ratio(el, *mask, a) - c.c_boundary).abs(),
            None => 0.0,
        };
        checks.push(Check::new(
            &format!("boundary_constant_replay_k{k}"),
            "dof-chains",
            "the chain masses of the maximizing DOF reproduce C_∂",
            replay,
            Bound::AtMost(t.boundary_constant_replay),
        ));
    }
    for k in 0..spaces.len().saturating_sub(1) {
        let (a, b) = (&spaces[k], &spaces[k + 1]);
        let d = a.derivative_matrix(b)?;
        let mut worst = 0.0f64;
        for _ in 0..3 {
            let w = random_poly_form(n, k, a.spec.degree() + 2, &mut rng);
            let pw = PiecewiseForm::uniform(&w, pb.mesh.num_cells());
            let ia = DVector::from_vec(a.interpolate(&pw));
            let ib = DVector::from_vec(b.interpolate(&pw.d()));
            let scale = 1.0 + ib.amax();
            worst = worst.max((&d * ia - ib).amax() / scale);
        }
        checks.push(Check::new(
            &format!("interpolation_commutes_k{k}"),
            "feec-spaces",
            "I(dω) = d(Iω) for polynomials of degree r + 2",
            worst,
            Bound::AtMost(t.interpolation_commutation),
        ));
        let mut weak = 0.0f64;
        for g in spread(a.dim(), 3) {
            let f = a.basis_form(g);
            weak = weak.max(weak_derivative_residual(&pb.mesh, &f, &f.d(), 4, seed)?);
        }
        checks.push(Check::new(
            &format!("weak_derivative_k{k}"),
            "polydiff-forms",
            "FE basis forms have their cellwise d as weak derivative",
            weak,
            Bound::AtMost(t.weak_derivative),
        ));
    }
    Ok(checks)
}

/// `count` indices spread over `0..dim`.
fn spread(dim: usize, count: usize) -> Vec<usize> {
    if dim <= count {
        return (0..dim).collect();
    }
    (0..count).map(|i| i * (dim - 1) / (count - 1)).collect()
}

/// Domain plugin, mesh-size field and extension operator.
pub fn geometry_checks(pb: &Problem, t: &Thresholds, seed: u64) -> Result<Vec<Check>> {
    let geo = &pb.geometry;
    let n = pb.n();
    let m = &pb.ledger.measured;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let module = "domain-geometry";
    let mut checks = Vec::new();

    let mut gauge = 0.0f64;
    let mut collar_pts = Vec::new();
    for _ in 0..1000 {
        let (x, _) = geo.sample_boundary(&mut rng);
        gauge = gauge.max((geo.gauge(&x) - 1.0).abs());
    }
    for _ in 0..100 {
        collar_pts.push(geo.sample_exterior_collar(&mut rng).0);
    }
    checks.push(Check::new("gauge_on_boundary", module, "g = 1 on sampled boundary points", gauge, Bound::AtMost(t.gauge_on_boundary)));

    let flat = geo.flattening();
    let (lo, hi) = pb.mesh.bbox();
    let mut round = 0.0f64;
    for _ in 0..1000 {
        let x: Vec3 = std::array::from_fn(|i| if i < n { rng.gen_range(lo[i]..hi[i]) } else { 0.0 });
        round = round.max(dist(&flat.inverse(&flat.forward(&x)), &x));
    }
    checks.push(Check::new(
        "flattening_round_trip",
        module,
        "the flattening map and its inverse compose to the identity",
        round,
        Bound::AtMost(t.flattening_round_trip),
    ));

    checks.push(Check::new(
        "neighborhood_constant",
        "simplicial-mesh",
        "ε_h > 0: every cell has a ball neighborhood inside the extended domain",
        m.eps_h,
        Bound::AtLeast(f64::MIN_POSITIVE),
    ));

    let field = &pb.field;
    let (rlo, rhi) = field.ratio_range(500, seed)?;
    let c_h = field.c_h();
    checks.push(Check::new(
        "size_field_lower",
        module,
        "𝚑(x) ≥ h_T / C_h with C_h = C_mesh²",
        rlo * c_h,
        Bound::AtLeast(1.0),
    ));
    checks.push(Check::new(
        "size_field_upper",
        module,
        "𝚑(x) ≤ C_h h_T with C_h = C_mesh²",
        rhi / c_h,
        Bound::AtMost(1.0),
    ));
    let lip = field.lipschitz_estimate(500, seed)?;
    checks.push(Check::new(
        "size_field_lipschitz",
        module,
        "sampled Lipschitz quotient of 𝚑 ≤ L_h",
        lip / m.l_h,
        Bound::AtMost(1.0 + t.lipschitz_slack),
    ));

    let one = FnField {
        n,
        k: 0,
        f: |_: &Vec3| Some(vec![1.0]),
    };
    let ext = ExtendedField::new(geo, &one);
    let mut worst = 0.0f64;
    for z in &collar_pts {
        if let Ok(v) = ext.eval(z) {
            worst = worst.max((v[0] - 1.0).abs());
        }
    }
    checks.push(Check::new("extension_of_one", module, "E(1) = 1 on the exterior collar", worst, Bound::AtMost(t.exact)));

    let mut weak = 0.0f64;
    for k in 0..n {
        let w = random_poly_form(n, k, 2, &mut rng);
        let pw = PiecewiseForm::uniform(&w, pb.mesh.num_cells());
        weak = weak.max(extension_weak_residual(geo, &pb.mesh, &pw, 2, seed)?);
        if let Some(sp) = pb.complex.spaces.get(k) {
            let f = sp.basis_form(sp.dim() / 2);
            weak = weak.max(extension_weak_residual(geo, &pb.mesh, &f, 2, seed + 1)?);
        }
    }
    checks.push(Check::new(
        "extension_commutes_weakly",
        module,
        "∫E(dω)∧η = (−1)^{k+1}∫Eω∧dη for test forms straddling the boundary",
        weak,
        Bound::AtMost(t.extension_weak),
    ));

    let c_refl = pb.collar.c_reflection(n, pb.spec.p);
    let mut ratio = 0.0f64;
    for i in 0..20 {
        let k = i % (n + 1);
        let w = random_poly_form(n, k, 1, &mut rng);
        let f = PiecewiseField::new(pb.mesh.clone(), &PiecewiseForm::uniform(&w, pb.mesh.num_cells()));
        let (e, int) = collar_band_norms(geo, &f, pb.spec.p, 6)?;
        if int > 0.0 {
            ratio = ratio.max(e / (c_refl * int));
        }
    }
    checks.push(Check::new(
        "extension_local_bound",
        module,
        "‖Eω‖ over the exterior collar ≤ C_{𝒜,p} ‖ω‖ over the interior collar",
        ratio,
        Bound::AtMost(1.0 + t.local_bound_slack),
    ));
    Ok(checks)
}

/// A value of `ε` at which the flow stays inside the extended domain: half
/// the smallest of the geometric admissibility bounds. The Neumann bound,
/// which only concerns `Q`, is left out so the mollifier is visibly at work.
pub fn mollifier_epsilon(pb: &Problem) -> f64 {
    let b = pb.ledger.measured.epsilon_bounds();
    SAFETY * b[..3].iter().map(|x| x.bound).fold(f64::INFINITY, f64::min)
}

fn cell_points(mesh: &Triangulation, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..count)
        .map(|_| {
            let c = rng.gen_range(0..mesh.num_cells());
            let lam = random_barycentric(mesh.n() + 1, rng);
            mesh.cell_coords(c).iter().zip(&lam).fold([0.0; 3], |acc, (p, l)| axpy(*l, p, &acc))
        })
        .collect()
}

/// `R^k_{ε𝚑}`: constants, commutation with `d`, linearity, locality, the
/// local bound and a continuity probe.
pub fn mollifier_checks(pb: &Problem, t: &Thresholds, seed: u64) -> Result<Vec<Check>> {
    let eps = mollifier_epsilon(pb);
    let moll = pb.mollifier(eps)?;
    let n = pb.n();
    let geo = moll.geometry();
    let mesh = pb.mesh.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let module = "mollification";
    let pts = cell_points(&mesh, 100, &mut rng);
    let mut checks = Vec::new();

    let sum: f64 = moll.nodes().iter().map(|(_, w)| w).sum();
    checks.push(Check::new(
        "unit_mass",
        module,
        "the mollifier weights have unit integral",
        (sum - 1.0).abs(),
        Bound::AtMost(t.mollifier_weight_sum),
    ));

    let c0 = FnField {
        n,
        k: 0,
        f: |_: &Vec3| Some(vec![2.5]),
    };
    let e0 = ExtendedField::new(geo, &c0);
    let mut worst = 0.0f64;
    for x in &pts {
        worst = worst.max((moll.eval(&e0, x)?[0] - 2.5).abs() / 2.5);
    }
    checks.push(Check::new(
        "constant_zero_form",
        module,
        "R c = c for a constant 0-form, up to rounding of the weight sum",
        worst,
        Bound::AtMost(t.mollifier_constant_zero_form),
    ));

    let mut worst = 0.0f64;
    for i in 0..n {
        let dxi = FnField {
            n,
            k: 1,
            f: move |_: &Vec3| Some((0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()),
        };
        let interior: Vec<&Vec3> = pts.iter().filter(|x| geo.boundary_distance(x) > eps * moll.field().eval(x).unwrap_or(0.0) * 1.01).collect();
        for x in interior {
            let v = moll.eval(&dxi, x)?;
            worst = worst.max((0..n).map(|j| (v[j] - if i == j { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max));
        }
    }
    checks.push(Check::new(
        "constant_one_form",
        module,
        "R dx^i = dx^i away from the boundary: the ε y⊗∇𝚑 term cancels by symmetry",
        worst,
        Bound::AtMost(t.mollifier_constant_one_form),
    ));

    let mut whitney = 0.0f64;
    let mut poly = 0.0f64;
    for k in 0..n {
        if let Some(sp) = pb.complex.spaces.get(k) {
            for g in spread(sp.dim(), 3) {
                whitney = whitney.max(moll.commutation_residual(&sp.basis_form(g), &pts)?);
            }
        }
        let w = random_poly_form(n, k, 2, &mut rng);
        poly = poly.max(moll.commutation_residual(&PiecewiseForm::uniform(&w, mesh.num_cells()), &pts)?);
    }
    checks.push(Check::new(
        "commutes_with_d_fe",
        module,
        "d(Rω) = R(dω) for FE basis forms at 100 points",
        whitney,
        Bound::AtMost(t.mollifier_commutation_whitney),
    ));
    checks.push(Check::new(
        "commutes_with_d_polynomial",
        module,
        "d(Rω) = R(dω) for polynomial forms at 100 points",
        poly,
        Bound::AtMost(t.mollifier_commutation_polynomial),
    ));

    let k = 1.min(n);
    let a = PiecewiseField::new(mesh.clone(), &PiecewiseForm::uniform(&random_poly_form(n, k, 1, &mut rng), mesh.num_cells()));
    let b = PiecewiseField::new(mesh.clone(), &PiecewiseForm::uniform(&random_poly_form(n, k, 1, &mut rng), mesh.num_cells()));
    let (ea, eb) = (ExtendedField::new(geo, &a), ExtendedField::new(geo, &b));
    let combo = FnField {
        n,
        k,
        f: |z: &Vec3| {
            let (u, v) = (ea.eval(z).ok()?, eb.eval(z).ok()?);
            Some(u.iter().zip(&v).map(|(p, q)| 2.0 * p - 3.0 * q).collect())
        },
    };
    let (mut lin, mut local_bad) = (0.0f64, 0usize);
    for x in pts.iter().take(20) {
        let (ra, rb, rc) = (moll.eval(&ea, x)?, moll.eval(&eb, x)?, moll.eval(&combo, x)?);
        let scale = 1.0 + ra.iter().chain(&rb).map(|v| v.abs()).fold(0.0, f64::max);
        for c in 0..ra.len() {
            lin = lin.max((rc[c] - (2.0 * ra[c] - 3.0 * rb[c])).abs() / scale);
        }
        let r = eps * moll.field().eval(x)?;
        let cut = FnField {
            n,
            k,
            f: |z: &Vec3| {
                let v = ea.eval(z).ok()?;
                Some(if dist(z, x) <= r { v } else { vec![0.0; v.len()] })
            },
        };
        if moll.eval(&cut, x)? != ra {
            local_bad += 1;
        }
    }
    checks.push(Check::new(
        "linearity",
        module,
        "R(2a − 3b) = 2Ra − 3Rb",
        lin,
        Bound::AtMost(t.mollifier_linearity),
    ));
    checks.push(exact_check(
        "locality",
        module,
        "Rω(x) is unchanged, bit for bit, when ω is zeroed outside B_{ε𝚑(x)}(x)",
        local_bad,
        t,
    ));

    checks.push(Check::new(
        "local_bound",
        module,
        "node-max |Rω| on T ≤ (1+εL_h)^k vol(B₁) C_h^{n/p} (ε h_T)^{−n/p} ‖ω‖_{L^p}",
        local_bound_ratio(pb, &moll, &mut rng)?,
        Bound::AtMost(1.0 + t.local_bound_slack),
    ));
    checks.push(Check::new(
        "continuity_probe",
        module,
        "difference quotients of Rω across cell interfaces stay stable as the segment shrinks (diagnostic)",
        continuity_ratio(pb, &moll, &mut rng)?,
        Bound::AtMost(t.continuity_shrink_ratio),
    ));
    Ok(checks)
}

/// Largest ratio of the two sides of the local bound over 10 random forms.
/// The right side uses `‖ω‖_{L^p(T)}`, which is at most the norm over the
/// neighborhood `B_{C_h ε h_T}(T)`, so the check is conservative.
fn local_bound_ratio(pb: &Problem, moll: &Mollifier, rng: &mut ChaCha8Rng) -> Result<f64> {
    let n = pb.n();
    let (p, eps) = (pb.spec.p, moll.eps());
    let m = &pb.ledger.measured;
    let mesh = &pb.mesh;
    let rule = simplex_rule(n, 6)?;
    let geo = moll.geometry();
    let mut worst = 0.0f64;
    for i in 0..10 {
        let k = i % (n + 1);
        let c = rng.gen_range(0..mesh.num_cells());
        let w = random_poly_form(n, k, 1, rng);
        let f = PiecewiseField::new(mesh.clone(), &PiecewiseForm::uniform(&w, mesh.num_cells()));
        let e = ExtendedField::new(geo, &f);
        let chart = mesh.chart(c);
        let mut pts: Vec<Vec3> = rule.points.iter().map(|u| chart.map(u)).collect();
        let mut lp = 0.0;
        for (x, q) in pts.iter().zip(&rule.weights) {
            lp += q * chart.det.abs() * norm(&f.eval(x)?).powf(p);
        }
        let lp = lp.powf(1.0 / p);
        pts.extend(mesh.cell_coords(c));
        let mut lhs = 0.0f64;
        for x in &pts {
            lhs = lhs.max(norm(&moll.eval(&e, x)?));
        }
        let h = mesh.diameter(n, c);
        let rhs = (1.0 + eps * m.l_h).powi(k as i32)
            * ball_volume(n)
            * m.c_h.powf(n as f64 / p)
            * (eps * h).powf(-(n as f64) / p)
            * lp;
        if rhs > 0.0 {
            worst = worst.max(lhs / rhs);
        }
    }
    Ok(worst)
}

/// 90th percentile of `K(δ/5) / K(δ)` for difference quotients `K` of
/// `Rω` along segments through random interior facets, with `ω`
/// discontinuous across cells. A jump at the facet gives 5; a continuous
/// `Rω` gives about 1. The discrete sum only changes when a node crosses an
/// interface, so the probe uses the densest ball rule and steps
/// `δ = ε𝚑/2` above its node spacing; the percentile discards segments
/// where a single heavy node crossing dominates.
fn continuity_ratio(pb: &Problem, moll: &Mollifier, rng: &mut ChaCha8Rng) -> Result<f64> {
    let moll = Mollifier::new(moll.field().clone(), moll.eps(), MAX_DEGREE)?;
    let n = pb.n();
    let mesh = &pb.mesh;
    let k = 1.min(n);
    let cells: Vec<PolyForm> = (0..mesh.num_cells()).map(|_| random_poly_form(n, k, 0, rng)).collect();
    let f = PiecewiseField::new(mesh.clone(), &PiecewiseForm::new(cells, Continuity::None));
    let e = ExtendedField::new(moll.geometry(), &f);
    let facets: Vec<usize> = (0..mesh.num_simplices(n - 1)).filter(|&i| !mesh.is_boundary_facet(i)).collect();
    if facets.is_empty() {
        return Ok(1.0);
    }
    let mut ratios = Vec::new();
    for _ in 0..100 {
        let fi = facets[rng.gen_range(0..facets.len())];
        let lam = random_barycentric(n, rng);
        let x = mesh.simplex_coords(n - 1, fi).iter().zip(&lam).fold([0.0; 3], |acc, (p, l)| axpy(*l, p, &acc));
        let v: Vec3 = {
            let r: Vec3 = std::array::from_fn(|i| if i < n { rng.gen_range(-1.0..1.0) } else { 0.0 });
            let l = norm(&r).max(1e-12);
            std::array::from_fn(|i| r[i] / l)
        };
        let base = 0.5 * moll.eps() * moll.field().eval(&x)?;
        let quotient = |delta: f64| -> Result<f64> {
            let a = moll.eval(&e, &axpy(delta, &v, &x))?;
            let b = moll.eval(&e, &axpy(-delta, &v, &x))?;
            Ok(a.iter().zip(&b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max) / (2.0 * delta))
        };
        let (coarse, fine) = (quotient(base)?, quotient(0.2 * base)?);
        if !fine.is_finite() {
            return Ok(f64::INFINITY);
        }
        if coarse > 1e-8 {
            ratios.push(fine / coarse);
        }
    }
    if ratios.is_empty() {
        return Ok(1.0);
    }
    ratios.sort_by(f64::total_cmp);
    Ok(ratios[ratios.len() * 9 / 10])
}

/// Per-degree results of the projection build.
pub struct ProjectionData {
    pub projections: Vec<Projection>,
    pub norms: Vec<f64>,
    pub q_commutator: Vec<f64>,
    pub pi_commutator: Vec<f64>,
}

/// Assemble `Q`, `J` and `π` for every degree of the complex at the
/// problem's `ε`.
pub fn build_projections(pb: &Problem, quad_degree: Option<usize>) -> Result<ProjectionData> {
    let moll = pb.mollifier(pb.eps())?;
    let mut projections = Vec::new();
    let mut norms = Vec::new();
    for sp in &pb.complex.spaces {
        let broken = broken_space(sp)?;
        let smoother = Smoother::new(&moll, quad_degree.unwrap_or_else(|| Smoother::default_degree(sp)));
        let mats = smoother.assemble(sp, Some(&broken))?;
        let gram = gram_matrix(sp)?;
        let proj = Projection::build(&mats, &gram)?;
        norms.push(induced_norm(proj.pi_broken.as_ref().expect("assembled"), &gram, &broken_gram(&broken)?)?);
        projections.push(proj);
    }
    let mut q_commutator = Vec::new();
    let mut pi_commutator = Vec::new();
    for k in 0..projections.len().saturating_sub(1) {
        let d = pb.complex.derivative(k)?;
        q_commutator.push(commutator(&d, &projections[k].q, &projections[k + 1].q));
        pi_commutator.push(commutator(&d, &projections[k].pi, &projections[k + 1].pi));
    }
    Ok(ProjectionData {
        projections,
        norms,
        q_commutator,
        pi_commutator,
    })
}

/// Idempotency, commutation, norm ceilings, the Neumann cross-check, the
/// callable path and the constant ledger.
pub fn projection_checks(pb: &Problem, t: &Thresholds, seed: u64, quad_degree: Option<usize>) -> Result<Vec<Check>> {
    let module = "smoothed-projection";
    let data = build_projections(pb, quad_degree)?;
    let eps = pb.eps();
    let n = pb.n() as f64;
    let m = &pb.ledger.measured;
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moll = pb.mollifier(eps)?;
    for (k, (proj, sp)) in data.projections.iter().zip(&pb.complex.spaces).enumerate() {
        checks.push(Check::new(
            &format!("neumann_norm_k{k}"),
            module,
            "‖Id − Q‖ < 1 in the L² Gram norm",
            proj.neumann_norm,
            Bound::AtMost(1.0),
        ));
        checks.push(Check::new(
            &format!("neumann_series_k{k}"),
            module,
            "the 20-term Neumann series agrees with the direct inverse",
            proj.neumann_gap,
            Bound::AtMost(t.neumann_gap),
        ));
        checks.push(Check::new(
            &format!("idempotent_k{k}"),
            module,
            "π² = π on FE coefficients",
            proj.idempotency_residual(),
            Bound::AtMost(t.idempotency),
        ));
        checks.push(Check::new(
            &format!("reproduces_fe_k{k}"),
            module,
            "π ω = ω for FE functions",
            proj.inverse_residual(),
            Bound::AtMost(t.idempotency),
        ));
        let ceiling = m.c_pi(k, eps) * eps.powf(-n / pb.spec.p);
        checks.push(Check::new(
            &format!("norm_below_ceiling_k{k}"),
            module,
            "‖π‖ (L² Gram) ≤ C_π ε^{−n/p}, reported as the ratio",
            data.norms[k] / ceiling,
            Bound::AtMost(1.0),
        ));
        checks.push(Check::new(
            &format!("callable_path_k{k}"),
            module,
            "J applied to Q of an FE function given as a callable recovers its coefficients",
            callable_gap(sp, &proj.j, &moll, quad_degree, &mut rng)?,
            Bound::AtMost(t.callable_path),
        ));
    }
    for k in 0..data.pi_commutator.len() {
        checks.push(Check::new(
            &format!("q_commutes_k{k}"),
            module,
            "D Q_k = Q_{k+1} D",
            data.q_commutator[k],
            Bound::AtMost(t.commutation),
        ));
        checks.push(Check::new(
            &format!("pi_commutes_k{k}"),
            module,
            "D π_k = π_{k+1} D",
            data.pi_commutator[k],
            Bound::AtMost(t.commutation),
        ));
    }
    checks.push(exact_check(
        "ledger_recomputes",
        module,
        "every derived constant equals its formula re-evaluated from the measured inputs",
        usize::from(!pb.ledger.recomputes()),
        t,
    ));
    Ok(checks)
}

fn callable_gap(sp: &FeSpace, j: &DMatrix<f64>, moll: &Mollifier, quad_degree: Option<usize>, rng: &mut ChaCha8Rng) -> Result<f64> {
    let coeffs: Vec<f64> = (0..sp.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let field = PiecewiseField::from_fe(sp, &coeffs);
    let smoother = Smoother::new(moll, quad_degree.unwrap_or_else(|| Smoother::default_degree(sp)));
    let back = j * DVector::from_vec(smoother.apply(sp, &field)?);
    Ok(back.iter().zip(&coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Fitted exponent of `‖ω − Q_ε ω‖` in `ε`, the ceiling `C_e ε` and
/// reproduction of constants, for every degree.
pub fn epsilon_slope_checks(pb: &Problem, t: &Thresholds, seed: u64) -> Result<Vec<Check>> {
    let module = "smoothed-projection";
    let eps = default_epsilons(pb.ledger.eps_max, 5);
    let mut checks = Vec::new();
    for k in 0..pb.complex.spaces.len() {
        let s = interpolation_error_study(pb, k, &eps, 2, seed, &StudyBands::from_thresholds(t))?;
        checks.push(Check::new(
            &format!("epsilon_slope_k{k}"),
            module,
            "‖ω − Q_ε ω‖ scales like ε over one decade",
            s.slope,
            Bound::Within(t.slope_low, t.slope_high),
        ));
        let worst = s.rows.iter().map(|r| r.value / r.ceiling).fold(0.0, f64::max);
        checks.push(Check::new(
            &format!("interpolation_error_ceiling_k{k}"),
            module,
            "‖ω − Q_ε ω‖_T ≤ C_e ε ‖ω‖ on the patch, reported as the ratio",
            worst,
            Bound::AtMost(1.0),
        ));
        checks.push(Check::new(
            &format!("constant_forms_k{k}"),
            module,
            "Q_ε reproduces constant forms on cells away from the boundary",
            s.constant_ratio,
            Bound::AtMost(t.constant_form),
        ));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Bound::AtMost(1.0).holds(1.0));
        assert!(!Bound::AtMost(1.0).holds(f64::NAN));
        assert!(Bound::Within(0.8, 1.2).holds(1.0));
        assert!(!Bound::AtLeast(1.0).holds(0.5));
    }

    #[test]
    fn suite_names() {
        assert_eq!(Suite::parse("all").unwrap().len(), 5);
        assert_eq!(Suite::parse("mollifier").unwrap(), vec![Suite::Mollifier]);
        assert!(Suite::parse("everything").is_err());
    }

    #[test]
    fn spread_indices() {
        assert_eq!(spread(10, 3), vec![0, 4, 9]);
        assert_eq!(spread(1, 3), vec![0]);
        assert_eq!(spread(2, 3), vec![0, 1]);
    }

    #[test]
    fn calculus_suite_passes() {
        let checks = calculus_checks(&Thresholds::default(), 7);
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
    }
}
