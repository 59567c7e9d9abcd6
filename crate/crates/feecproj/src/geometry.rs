//! Domain plugins. A domain is a polytope `Ω` together with a
//! piecewise-linear flattening `Φ` onto a set `D` that is star-shaped about
//! a centre `c`; for star-shaped domains `Φ` is the identity. The gauge of
//! `D` drives the collar `Ψ`, the reflection `𝒜` and the extension `E`.

use crate::error::{FeecError, Result};
use crate::linalg::{add, axpy, dist, dot, hull_distance, norm, point_simplex_distance, sub, Mat, Vec3};
use crate::mesh::{generate, Triangulation};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BinaryHeap;

/// Tolerance under which a point counts as lying on a piece boundary.
const PIECE_TOL: f64 = 1e-12;

/// One affine piece `x ↦ L x + s` of a piecewise-linear map, valid on the
/// polyhedron `{a·x ≤ b}`.
#[derive(Clone, Debug)]
pub struct PlPiece {
    pub halfspaces: Vec<(Vec3, f64)>,
    pub lin: Mat,
    pub lin_inv: Mat,
    pub shift: Vec3,
}

impl PlPiece {
    fn new(n: usize, halfspaces: Vec<(Vec3, f64)>, lin: Mat, shift: Vec3) -> Self {
        let lin_inv = lin.inverse().expect("invertible piece");
        let _ = n;
        PlPiece {
            halfspaces,
            lin,
            lin_inv,
            shift,
        }
    }

    /// Largest violation `a·x − b` over the defining half-spaces.
    pub fn violation(&self, x: &Vec3) -> f64 {
        self.halfspaces
            .iter()
            .map(|(a, b)| dot(a, x) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        add(&self.lin.apply(x), &self.shift)
    }

    pub fn unapply(&self, w: &Vec3) -> Vec3 {
        self.lin_inv.apply(&sub(w, &self.shift))
    }

    /// Half-spaces cutting out the image of the piece.
    pub fn image_halfspaces(&self) -> Vec<(Vec3, f64)> {
        let lt = self.lin_inv.transpose();
        self.halfspaces
            .iter()
            .map(|(a, b)| {
                let a2 = lt.apply(a);
                (a2, b + dot(&a2, &self.shift))
            })
            .collect()
    }
}

/// A piecewise-linear homeomorphism of `R^n`.
#[derive(Clone, Debug)]
pub struct Flattening {
    n: usize,
    pieces: Vec<PlPiece>,
}

impl Flattening {
    pub fn identity(n: usize) -> Self {
        Flattening {
            n,
            pieces: vec![PlPiece::new(n, Vec::new(), Mat::identity(n), [0.0; 3])],
        }
    }

    /// The shear `(x, y, z) ↦ (x, y', z)` that straightens the crossed
    /// bricks: affine on the triangles of the Kuhn-split unit squares of the
    /// `(y, z)` plane, on half-strips above and below them, and the identity
    /// for `|y| ≥ 1`.
    pub fn crossed_bricks() -> Self {
        let h = |ay: f64, az: f64, b: f64| ([0.0, ay, az], b);
        let shear = |alpha: f64, gamma: f64| {
            let mut m = Mat::identity(3);
            m.a[1][1] = alpha;
            m.a[1][2] = gamma;
            m
        };
        let table: Vec<(Vec<(Vec3, f64)>, f64, f64, f64)> = vec![
            (vec![h(0.0, -1.0, 0.0), h(1.0, 0.0, 1.0), h(-1.0, 1.0, 0.0)], 1.0, 0.0, 0.0),
            (vec![h(-1.0, 0.0, 0.0), h(0.0, 1.0, 1.0), h(1.0, -1.0, 0.0)], 1.75, -0.75, 0.0),
            (vec![h(0.0, -1.0, 1.0), h(1.0, 0.0, 1.0), h(-1.0, 1.0, -1.0)], 1.75, 0.0, -0.75),
            (vec![h(-1.0, 0.0, 0.0), h(0.0, 1.0, 0.0), h(1.0, -1.0, 1.0)], 1.0, 0.75, 0.0),
            (vec![h(0.0, -1.0, 0.0), h(1.0, 0.0, 0.0), h(-1.0, 1.0, 1.0)], 1.0, -0.75, 0.0),
            (vec![h(-1.0, 0.0, 1.0), h(0.0, 1.0, 1.0), h(1.0, -1.0, -1.0)], 0.25, 0.0, -0.75),
            (vec![h(0.0, -1.0, 1.0), h(1.0, 0.0, 0.0), h(-1.0, 1.0, 0.0)], 0.25, 0.75, 0.0),
            (vec![h(-1.0, 0.0, 1.0), h(0.0, 1.0, 0.0), h(1.0, -1.0, 0.0)], 1.0, 0.0, 0.0),
            (vec![h(0.0, -1.0, -1.0), h(-1.0, 0.0, 0.0), h(1.0, 0.0, 1.0)], 1.75, 0.0, -0.75),
            (vec![h(0.0, 1.0, -1.0), h(-1.0, 0.0, 0.0), h(1.0, 0.0, 1.0)], 1.75, 0.0, -0.75),
            (vec![h(0.0, -1.0, -1.0), h(-1.0, 0.0, 1.0), h(1.0, 0.0, 0.0)], 0.25, 0.0, -0.75),
            (vec![h(0.0, 1.0, -1.0), h(-1.0, 0.0, 1.0), h(1.0, 0.0, 0.0)], 0.25, 0.0, -0.75),
            (vec![h(-1.0, 0.0, -1.0)], 1.0, 0.0, 0.0),
            (vec![h(1.0, 0.0, -1.0)], 1.0, 0.0, 0.0),
        ];
        let pieces = table
            .into_iter()
            .map(|(hs, alpha, gamma, delta)| PlPiece::new(3, hs, shear(alpha, gamma), [0.0, delta, 0.0]))
            .collect();
        Flattening { n: 3, pieces }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pieces(&self) -> &[PlPiece] {
        &self.pieces
    }

    pub fn is_identity(&self) -> bool {
        self.pieces.len() == 1
    }

    /// Lowest-index piece containing `x` (nearest piece if none does, which
    /// only happens through rounding).
    pub fn piece_at(&self, x: &Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (j, p) in self.pieces.iter().enumerate() {
            let v = p.violation(x);
            if v <= PIECE_TOL {
                return j;
            }
            if v < best.0 {
                best = (v, j);
            }
        }
        best.1
    }

    /// Lowest-index piece whose image contains `w`.
    pub fn image_piece_at(&self, w: &Vec3) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (j, p) in self.pieces.iter().enumerate() {
            let v = p.violation(&p.unapply(w));
            if v <= PIECE_TOL {
                return j;
            }
            if v < best.0 {
                best = (v, j);
            }
        }
        best.1
    }

    pub fn forward(&self, x: &Vec3) -> Vec3 {
        self.pieces[self.piece_at(x)].apply(x)
    }

    pub fn inverse(&self, w: &Vec3) -> Vec3 {
        let p = &self.pieces[self.image_piece_at(w)];
        p.unapply(w)
    }

    pub fn jacobian(&self, x: &Vec3) -> Mat {
        self.pieces[self.piece_at(x)].lin
    }

    /// Largest operator norms of the linear parts of `Φ` and `Φ^{-1}`.
    pub fn lipschitz(&self) -> (f64, f64) {
        self.pieces.iter().fold((0.0f64, 0.0f64), |(a, b), p| {
            (a.max(p.lin.spectral_norm()), b.max(p.lin_inv.spectral_norm()))
        })
    }
}

/// The cone from the centre over one boundary facet of `D`, on which the
/// gauge is linear.
#[derive(Clone, Debug)]
pub struct GaugeFacet {
    /// Vertices in flattened coordinates.
    pub verts: Vec<Vec3>,
    /// Vertices in physical coordinates.
    pub phys: Vec<Vec3>,
    /// Outward unit normal and offset of the facet plane `a·w = β`.
    pub a: Vec3,
    pub beta: f64,
    /// `β − a·c > 0`, so that `g(w) = a·(w − c)/s` on the cone.
    pub s: f64,
    /// Inward unit normals of the cone sides, all through the centre.
    pub sides: Vec<Vec3>,
    /// Piece of the flattening containing the facet.
    pub piece: usize,
}

impl GaugeFacet {
    pub fn gauge_gradient(&self) -> Vec3 {
        [self.a[0] / self.s, self.a[1] / self.s, self.a[2] / self.s]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    StarShaped,
    CrossedBricks,
}

/// Points of `R^n` relative to the collar.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Interior,
    Boundary,
    ExteriorCollar,
    Outside,
}

/// A reflected point with the Jacobian of the reflection there.
#[derive(Clone, Copy, Debug)]
pub struct Reflection {
    pub point: Vec3,
    pub jac: Mat,
    pub gauge: f64,
    pub facet: usize,
}

#[derive(Clone, Debug)]
pub struct DomainGeometry {
    pub name: String,
    pub kind: DomainKind,
    n: usize,
    center: Vec3,
    width: f64,
    volume: f64,
    flat: Flattening,
    facets: Vec<GaugeFacet>,
    facet_boxes: Vec<(Vec3, Vec3)>,
    diameter: f64,
    convex: bool,
}

fn hyperplane_normal(n: usize, dirs: &[Vec3]) -> Vec3 {
    match n {
        1 => [1.0, 0.0, 0.0],
        2 => [-dirs[0][1], dirs[0][0], 0.0],
        _ => {
            let (u, v) = (dirs[0], dirs[1]);
            [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
        }
    }
}

fn unit(v: Vec3) -> Vec3 {
    let l = norm(&v);
    [v[0] / l, v[1] / l, v[2] / l]
}

/// Centre and analytic volume of the named domains.
fn domain_data(name: &str) -> Result<(DomainKind, Vec3, f64)> {
    Ok(match name {
        "unit_interval" => (DomainKind::StarShaped, [0.5, 0.0, 0.0], 1.0),
        "unit_square" => (DomainKind::StarShaped, [0.5, 0.5, 0.0], 1.0),
        "l_shape" => (DomainKind::StarShaped, [0.25, 0.25, 0.0], 0.75),
        "unit_cube" => (DomainKind::StarShaped, [0.5, 0.5, 0.5], 1.0),
        "reference_triangle" => (DomainKind::StarShaped, [1.0 / 3.0, 1.0 / 3.0, 0.0], 0.5),
        "reference_tetrahedron" => (DomainKind::StarShaped, [0.25, 0.25, 0.25], 1.0 / 6.0),
        "crossed_bricks" => (DomainKind::CrossedBricks, [0.5, 0.0, -0.625], 4.0),
        other => return Err(FeecError::InvalidConfig(format!("unknown domain {other}"))),
    })
}

impl DomainGeometry {
    /// Geometry of a named domain with collar width `w ∈ (0, 1]`.
    pub fn named(name: &str, width: f64) -> Result<Self> {
        if !(width > 0.0 && width <= 1.0) {
            return Err(FeecError::CollarTooWide(width));
        }
        let (kind, center, volume) = domain_data(name)?;
        let coarse = generate(name, 0)?;
        let flat = match kind {
            DomainKind::StarShaped => Flattening::identity(coarse.n()),
            DomainKind::CrossedBricks => Flattening::crossed_bricks(),
        };
        Self::from_boundary(name, kind, &coarse, flat, center, width, volume)
    }

    fn from_boundary(
        name: &str,
        kind: DomainKind,
        mesh: &Triangulation,
        flat: Flattening,
        center: Vec3,
        width: f64,
        volume: f64,
    ) -> Result<Self> {
        let n = mesh.n();
        let mut facets = Vec::new();
        for &f in mesh.boundary_facets() {
            let cell = mesh.cofaces(n - 1, f)[0];
            let cb = crate::mesh::barycenter(&mesh.cell_coords(cell));
            let piece = flat.piece_at(&cb);
            let p = &flat.pieces[piece];
            let phys = mesh.simplex_coords(n - 1, f);
            let verts: Vec<Vec3> = phys.iter().map(|x| p.apply(x)).collect();
            let dirs: Vec<Vec3> = verts[1..].iter().map(|v| sub(v, &verts[0])).collect();
            let mut a = unit(hyperplane_normal(n, &dirs));
            let inside = p.apply(&cb);
            if dot(&a, &sub(&verts[0], &inside)) < 0.0 {
                a = [-a[0], -a[1], -a[2]];
            }
            let beta = dot(&a, &verts[0]);
            let s = beta - dot(&a, &center);
            if s <= 1e-9 {
                return Err(FeecError::NotStarShaped(format!(
                    "facet {f} is not visible from the centre (support {s:.3e})"
                )));
            }
            let sides = (0..n)
                .map(|i| {
                    let others: Vec<Vec3> = (0..n).filter(|&j| j != i).map(|j| sub(&verts[j], &center)).collect();
                    let mut v = unit(hyperplane_normal(n, &others));
                    if dot(&v, &sub(&verts[i], &center)) < 0.0 {
                        v = [-v[0], -v[1], -v[2]];
                    }
                    v
                })
                .collect();
            facets.push(GaugeFacet {
                verts,
                phys,
                a,
                beta,
                s,
                sides,
                piece,
            });
        }
        let facet_boxes = facets.iter().map(|f| bbox(&f.phys, n)).collect();
        let (lo, hi) = mesh.bbox();
        let diameter = dist(&lo, &hi);
        let convex = kind == DomainKind::StarShaped
            && facets.iter().all(|f| {
                mesh.coords().iter().all(|x| dot(&f.a, x) - f.beta <= 1e-12)
            });
        let geo = DomainGeometry {
            name: name.to_string(),
            kind,
            n,
            center,
            width,
            volume,
            flat,
            facets,
            facet_boxes,
            diameter,
            convex,
        };
        geo.check_gauge_homogeneity()?;
        Ok(geo)
    }

    /// The gauge must be degree-one homogeneous about the centre; a cone
    /// lookup that fails or disagrees along rays signals a domain that is
    /// not star-shaped about it.
    fn check_gauge_homogeneity(&self) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut d = [0.0; 3];
            for v in d.iter_mut().take(self.n) {
                *v = rng.gen_range(-1.0..1.0);
            }
            if norm(&d) < 1e-3 {
                continue;
            }
            let w = add(&self.center, &d);
            let g1 = self.gauge_flat(&w).map(|x| x.0);
            let w2 = axpy(2.5, &d, &self.center);
            let g2 = self.gauge_flat(&w2).map(|x| x.0);
            match (g1, g2) {
                (Some(a), Some(b)) if (b - 2.5 * a).abs() <= 1e-9 * b.abs().max(1.0) => {}
                _ => return Err(FeecError::NotStarShaped(format!("gauge not homogeneous along {d:?}"))),
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn flattening(&self) -> &Flattening {
        &self.flat
    }

    pub fn facets(&self) -> &[GaugeFacet] {
        &self.facets
    }

    pub fn facet_box(&self, i: usize) -> &(Vec3, Vec3) {
        &self.facet_boxes[i]
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    /// Gauge in flattened coordinates and the facet whose cone holds `w`.
    pub fn gauge_flat(&self, w: &Vec3) -> Option<(f64, usize)> {
        let d = sub(w, &self.center);
        let scale = norm(&d);
        if scale == 0.0 {
            return Some((0.0, 0));
        }
        let mut best: Option<(f64, usize, f64)> = None;
        for (i, f) in self.facets.iter().enumerate() {
            let worst = f.sides.iter().map(|s| dot(s, &d)).fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 * scale {
                return Some((dot(&f.a, &d) / f.s, i));
            }
            if best.is_none_or(|b| worst > b.2) {
                best = Some((dot(&f.a, &d) / f.s, i, worst));
            }
        }
        // rounding at cone edges
        best.filter(|b| b.2 >= -1e-9 * scale).map(|b| (b.0, b.1))
    }

    /// Gauge of a physical point.
    pub fn gauge(&self, z: &Vec3) -> f64 {
        self.gauge_flat(&self.flat.forward(z)).map_or(f64::INFINITY, |g| g.0)
    }

    pub fn classify(&self, z: &Vec3) -> Region {
        let g = self.gauge(z);
        if (g - 1.0).abs() <= 1e-12 {
            Region::Boundary
        } else if g < 1.0 {
            Region::Interior
        } else if g < 1.0 + self.width {
            Region::ExteriorCollar
        } else {
            Region::Outside
        }
    }

    /// `Ψ(x, t) = Φ^{-1}(c + (1 + w t)(Φ(x) − c))` for `x ∈ ∂Ω`.
    pub fn collar_point(&self, x: &Vec3, t: f64) -> Vec3 {
        let w = self.flat.forward(x);
        let s = 1.0 + self.width * t;
        let v = axpy(s, &sub(&w, &self.center), &self.center);
        self.flat.inverse(&v)
    }

    /// The gauge reflection `w ↦ c + (w − c)(2/g − 1)` in flattened
    /// coordinates, with its Jacobian.
    pub fn reflect_flat(&self, w: &Vec3) -> Result<(Vec3, Mat, f64, usize)> {
        let (g, fi) = self.gauge_flat(w).ok_or(FeecError::EvaluationOutsideExtendedDomain)?;
        if !(g > 0.0 && g < 2.0) {
            return Err(FeecError::EvaluationOutsideExtendedDomain);
        }
        let d = sub(w, &self.center);
        let f = 2.0 / g - 1.0;
        let v = axpy(f, &d, &self.center);
        Ok((v, self.reflection_jacobian(fi, &d, g), g, fi))
    }

    /// `D𝒜_D = (2/g − 1) I − (2/g²)(w − c) ⊗ ∇g` on the cone of facet `fi`.
    pub fn reflection_jacobian(&self, fi: usize, d: &Vec3, g: f64) -> Mat {
        let n = self.n;
        let gg = self.facets[fi].gauge_gradient();
        let mut m = Mat::zeros(n, n);
        for l in 0..n {
            for j in 0..n {
                m.a[l][j] = if l == j { 2.0 / g - 1.0 } else { 0.0 } - 2.0 / (g * g) * d[l] * gg[j];
            }
        }
        m
    }

    /// Second derivatives `∂_i∂_j 𝒜_D^l` on the cone of facet `fi`, indexed
    /// `[l][i][j]`.
    pub fn reflection_hessian(&self, fi: usize, d: &Vec3, g: f64) -> [[[f64; 3]; 3]; 3] {
        let n = self.n;
        let gg = self.facets[fi].gauge_gradient();
        let mut h = [[[0.0; 3]; 3]; 3];
        for (l, hl) in h.iter_mut().enumerate().take(n) {
            for i in 0..n {
                for j in 0..n {
                    let mut v = 4.0 / (g * g * g) * d[l] * gg[i] * gg[j];
                    if l == j {
                        v -= 2.0 / (g * g) * gg[i];
                    }
                    if l == i {
                        v -= 2.0 / (g * g) * gg[j];
                    }
                    hl[i][j] = v;
                }
            }
        }
        h
    }

    /// Collar reflection of a physical point; defined for `0 < g < 2`.
    pub fn reflect(&self, z: &Vec3) -> Result<Reflection> {
        let src = &self.flat.pieces[self.flat.piece_at(z)];
        let w = src.apply(z);
        let (v, jd, g, fi) = self.reflect_flat(&w)?;
        let tgt = &self.flat.pieces[self.flat.image_piece_at(&v)];
        let point = tgt.unapply(&v);
        let jac = tgt.lin_inv.mul(&jd).mul(&src.lin);
        Ok(Reflection {
            point,
            jac,
            gauge: g,
            facet: fi,
        })
    }

    /// The reflection of `z` with its second derivatives `∂_i∂_j 𝒜^l`,
    /// indexed `[l][i][j]`.
    pub fn reflect_with_hessian(&self, z: &Vec3) -> Result<(Reflection, [[[f64; 3]; 3]; 3])> {
        let n = self.n;
        let src = &self.flat.pieces[self.flat.piece_at(z)];
        let w = src.apply(z);
        let (v, jd, g, fi) = self.reflect_flat(&w)?;
        let tgt = &self.flat.pieces[self.flat.image_piece_at(&v)];
        let hd = self.reflection_hessian(fi, &sub(&w, &self.center), g);
        let mut h = [[[0.0; 3]; 3]; 3];
        for (l, hl) in h.iter_mut().enumerate().take(n) {
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            for c in 0..n {
                                acc += tgt.lin_inv.a[l][a] * hd[a][b][c] * src.lin.a[b][i] * src.lin.a[c][j];
                            }
                        }
                    }
                    hl[i][j] = acc;
                }
            }
        }
        let refl = Reflection {
            point: tgt.unapply(&v),
            jac: tgt.lin_inv.mul(&jd).mul(&src.lin),
            gauge: g,
            facet: fi,
        };
        Ok((refl, h))
    }

    /// Where the extension reads its values: `z` itself on `Ω̄` (points
    /// within `1e−12` of the boundary count as inside), the reflected point
    /// with the pullback Jacobian on the exterior collar.
    pub fn extension_source(&self, z: &Vec3) -> Result<Option<Reflection>> {
        match self.classify(z) {
            Region::Interior | Region::Boundary => Ok(None),
            Region::ExteriorCollar => self.reflect(z).map(Some),
            Region::Outside => Err(FeecError::EvaluationOutsideExtendedDomain),
        }
    }

    /// `E^k ω(z)` for a form given by a sampler on `Ω̄`.
    pub fn extend_eval(
        &self,
        omega: &dyn Fn(&Vec3) -> Option<Vec<f64>>,
        k: usize,
        z: &Vec3,
    ) -> Result<Vec<f64>> {
        match self.extension_source(z)? {
            None => omega(z).ok_or(FeecError::EvaluationOutsideExtendedDomain),
            Some(r) => {
                let v = omega(&r.point).ok_or(FeecError::EvaluationOutsideExtendedDomain)?;
                Ok(crate::linalg::pullback_covector(&r.jac, k, &v))
            }
        }
    }

    /// Uniform random point on `∂Ω` (facets weighted by their area in
    /// flattened coordinates, then mapped back).
    pub fn sample_boundary(&self, rng: &mut impl Rng) -> (Vec3, usize) {
        let areas: Vec<f64> = self
            .facets
            .iter()
            .map(|f| crate::chains::simplex_measure(&f.verts, self.n))
            .collect();
        let total: f64 = areas.iter().sum();
        let mut u = rng.gen_range(0.0..total);
        let mut fi = 0;
        for (i, a) in areas.iter().enumerate() {
            fi = i;
            if u < *a {
                break;
            }
            u -= a;
        }
        let f = &self.facets[fi];
        let lam = random_barycentric(self.n, rng);
        let mut w = [0.0; 3];
        for (l, v) in lam.iter().zip(&f.verts) {
            w = axpy(*l, v, &w);
        }
        (self.flat.pieces[f.piece].unapply(&w), fi)
    }

    /// Bounding boxes of facets that come within `pad` of the box.
    pub fn facets_near_box(&self, lo: &Vec3, hi: &Vec3, pad: f64) -> Vec<usize> {
        (0..self.facets.len())
            .filter(|&i| {
                let (flo, fhi) = &self.facet_boxes[i];
                (0..self.n).all(|d| flo[d] <= hi[d] + pad && fhi[d] >= lo[d] - pad)
            })
            .collect()
    }

    /// Distance from a physical point to `∂Ω`.
    pub fn boundary_distance(&self, x: &Vec3) -> f64 {
        self.facets
            .iter()
            .map(|f| point_simplex_distance(x, &f.phys, self.n))
            .fold(f64::INFINITY, f64::min)
    }

    /// The outer collar surface `{g = 1 + w}` as physical simplices.
    pub fn outer_surface(&self) -> Vec<Vec<Vec3>> {
        let s = 1.0 + self.width;
        let mut out = Vec::new();
        for f in &self.facets {
            let scaled: Vec<Vec3> = f.verts.iter().map(|v| axpy(s, &sub(v, &self.center), &self.center)).collect();
            if self.flat.is_identity() {
                out.push(scaled);
                continue;
            }
            // split the scaled facet along the pieces of the flattening
            for p in self.flat.pieces() {
                let hs = p.image_halfspaces();
                let mut parts = vec![scaled.clone()];
                for (a, b) in &hs {
                    parts = parts
                        .into_iter()
                        .flat_map(|tri| clip_polytope_simplex(&tri, a, *b))
                        .collect();
                }
                for part in parts {
                    out.push(part.iter().map(|v| p.unapply(v)).collect());
                }
            }
        }
        out
    }

    /// Checks that the mesh triangulates this domain.
    pub fn check_mesh(&self, mesh: &Triangulation) -> Result<()> {
        if mesh.n() != self.n {
            return Err(FeecError::GeometryMismatch(format!(
                "mesh dimension {} vs domain dimension {}",
                mesh.n(),
                self.n
            )));
        }
        for x in mesh.coords() {
            let g = self.gauge(x);
            if g > 1.0 + 1e-9 {
                return Err(FeecError::GeometryMismatch(format!("vertex {:?} outside the domain", &x[..self.n])));
            }
        }
        let v = mesh.total_volume();
        if (v - self.volume).abs() > 1e-10 * self.volume {
            return Err(FeecError::GeometryMismatch(format!(
                "mesh volume {v} differs from the domain volume {}",
                self.volume
            )));
        }
        Ok(())
    }
}

fn bbox(pts: &[Vec3], n: usize) -> (Vec3, Vec3) {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for i in 0..n {
        lo[i] = pts.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
        hi[i] = pts.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
    }
    (lo, hi)
}

pub fn random_barycentric(m: usize, rng: &mut impl Rng) -> Vec<f64> {
    // sorted uniforms give a uniform point of the simplex spanned by m points
    let mut cuts: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(0.0..1.0)).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Intersection of a simplex with `a·x ≤ b`, as a list of simplices.
fn clip_polytope_simplex(s: &[Vec3], a: &Vec3, b: f64) -> Vec<Vec<Vec3>> {
    let vals: Vec<f64> = s.iter().map(|p| dot(a, p) - b).collect();
    let tol = 1e-13;
    if vals.iter().all(|&v| v <= tol) {
        return vec![s.to_vec()];
    }
    if vals.iter().all(|&v| v >= -tol) {
        return Vec::new();
    }
    for i in 0..s.len() {
        for j in 0..s.len() {
            if vals[i] < -tol && vals[j] > tol {
                let t = vals[i] / (vals[i] - vals[j]);
                let p = axpy(t, &sub(&s[j], &s[i]), &s[i]);
                let mut s1 = s.to_vec();
                s1[j] = p;
                let mut s2 = s.to_vec();
                s2[i] = p;
                let mut out = clip_polytope_simplex(&s1, a, b);
                out.extend(clip_polytope_simplex(&s2, a, b));
                return out;
            }
        }
    }
    Vec::new()
}

/// Sampled Lipschitz data of the collar and reflection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollarConstants {
    /// `sup ‖D𝒜‖` over the exterior collar.
    pub reflection_norm: f64,
    /// `sup ‖(D𝒜)^{-1}‖`, which bounds `D𝒜^{-1}` on the interior collar.
    pub reflection_inverse_norm: f64,
    /// Largest difference quotient of `𝒜` over sampled pairs.
    pub reflection_quotient: f64,
    /// `Lip(𝒜)`: the larger of the Jacobian bound and the quotients.
    pub lip_reflection: f64,
    /// `L_Ψ = 1 + sup ‖𝒜(x) − x‖ / dist(x, ∂Ω)`.
    pub l_psi: f64,
    /// Bi-Lipschitz constants of `Ψ` with respect to `|Δt| + ‖Δx‖`.
    pub sandwich_lower: f64,
    pub sandwich_upper: f64,
    pub samples: usize,
}

impl CollarConstants {
    /// `C_{𝒜,p} = max(1, ‖D𝒜‖)^n ‖D𝒜^{-1}‖^{n/p}`, enough for every form
    /// degree.
    pub fn c_reflection(&self, n: usize, p: f64) -> f64 {
        let e = if p.is_infinite() { 0.0 } else { n as f64 / p };
        self.reflection_norm.max(1.0).powi(n as i32) * self.reflection_inverse_norm.powf(e)
    }

    /// `C_{E,p} = 1 + C_{𝒜,p}`.
    pub fn c_extension(&self, n: usize, p: f64) -> f64 {
        1.0 + self.c_reflection(n, p)
    }
}

impl DomainGeometry {
    /// Sample the exterior collar: `Ψ(x, t)` with `x` on the boundary and
    /// `t ∈ (0, 1)`.
    pub fn sample_exterior_collar(&self, rng: &mut impl Rng) -> (Vec3, Vec3, f64) {
        let (x, _) = self.sample_boundary(rng);
        let t = rng.gen_range(1e-6..1.0);
        (self.collar_point(&x, t), x, t)
    }

    /// Estimate the collar constants from `samples` random points and pairs.
    pub fn collar_constants(&self, samples: usize, seed: u64) -> CollarConstants {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n;
        let mut jn = 0.0f64;
        let mut jin = 0.0f64;
        let mut lpsi = 1.0f64;
        // Jacobian sup: random points plus facet vertices on both ends of
        // the collar
        let mut pts: Vec<Vec3> = Vec::new();
        for f in &self.facets {
            for v in &f.verts {
                let d = sub(v, &self.center);
                for s in [1.0 + 1e-9, 1.0 + self.width * 0.999] {
                    pts.push(self.flat.inverse(&axpy(s, &d, &self.center)));
                }
            }
        }
        for _ in 0..samples {
            pts.push(self.sample_exterior_collar(&mut rng).0);
        }
        for z in &pts {
            if let Ok(r) = self.reflect(z) {
                jn = jn.max(r.jac.spectral_norm());
                if let Some(inv) = r.jac.inverse() {
                    jin = jin.max(inv.spectral_norm());
                }
                let dz = self.boundary_distance(z);
                if dz > 1e-9 * self.diameter {
                    lpsi = lpsi.max(1.0 + dist(&r.point, z) / dz);
                }
            }
        }
        // difference quotients over nearby pairs
        let mut dq = 0.0f64;
        let mut lower = f64::INFINITY;
        let mut upper = 0.0f64;
        for _ in 0..samples {
            let (x1, _) = self.sample_boundary(&mut rng);
            let t1 = rng.gen_range(0.0..1.0);
            let scale = 10f64.powf(rng.gen_range(-4.0..-0.5)) * self.diameter;
            let mut x2 = x1;
            for v in x2.iter_mut().take(n) {
                *v += rng.gen_range(-1.0..1.0) * scale;
            }
            // project the perturbed point back to the boundary radially
            let g2 = self.gauge(&x2);
            if !g2.is_finite() || g2 <= 0.0 {
                continue;
            }
            let w2 = self.flat.forward(&x2);
            let x2 = self.flat.inverse(&axpy(1.0 / g2, &sub(&w2, &self.center), &self.center));
            let t2 = (t1 + rng.gen_range(-1.0..1.0) * scale).clamp(0.0, 1.0);
            let p1 = self.collar_point(&x1, t1);
            let p2 = self.collar_point(&x2, t2);
            let den = (t1 - t2).abs() + dist(&x1, &x2);
            if den > 0.0 {
                let r = dist(&p1, &p2) / den;
                lower = lower.min(r);
                upper = upper.max(r);
            }
            if t1 > 0.0 && t2 > 0.0 {
                if let (Ok(a1), Ok(a2)) = (self.reflect(&p1), self.reflect(&p2)) {
                    let d = dist(&p1, &p2);
                    if d > 0.0 {
                        dq = dq.max(dist(&a1.point, &a2.point) / d);
                    }
                }
            }
        }
        CollarConstants {
            reflection_norm: jn,
            reflection_inverse_norm: jin,
            reflection_quotient: dq,
            lip_reflection: jn.max(dq),
            l_psi: lpsi,
            sandwich_lower: lower,
            sandwich_upper: upper,
            samples,
        }
    }

    /// Inner-metric comparability `L_Ω`: exactly 1 for convex domains,
    /// otherwise the largest ratio of grid-graph path length to Euclidean
    /// distance. The grid estimate is a heuristic.
    pub fn inner_metric_constant(&self, spacing: f64) -> f64 {
        if self.convex {
            return 1.0;
        }
        let n = self.n;
        let (lo, hi) = bbox(&self.facets.iter().flat_map(|f| f.phys.clone()).collect::<Vec<_>>(), n);
        let dims: Vec<usize> = (0..3)
            .map(|i| if i < n { ((hi[i] - lo[i]) / spacing).round() as usize + 1 } else { 1 })
            .collect();
        let idx = |a: usize, b: usize, c: usize| (a * dims[1] + b) * dims[2] + c;
        let total = dims[0] * dims[1] * dims[2];
        let mut pts = vec![[0.0; 3]; total];
        let mut inside = vec![false; total];
        for a in 0..dims[0] {
            for b in 0..dims[1] {
                for c in 0..dims[2] {
                    let p = [
                        lo[0] + a as f64 * spacing,
                        lo[1] + b as f64 * spacing,
                        lo[2] + c as f64 * spacing,
                    ];
                    let i = idx(a, b, c);
                    pts[i] = p;
                    inside[i] = self.gauge(&p) <= 1.0 + 1e-12;
                }
            }
        }
        let mut offsets = Vec::new();
        for da in -1i64..=1 {
            for db in -1i64..=1 {
                for dc in -1i64..=1 {
                    if (da, db, dc) == (0, 0, 0) || (n < 2 && db != 0) || (n < 3 && dc != 0) {
                        continue;
                    }
                    offsets.push((da, db, dc));
                }
            }
        }
        // segment stays in Ω̄ if a few interior samples do
        let seg_inside = |p: &Vec3, q: &Vec3| {
            (1..4).all(|s| {
                let m = axpy(s as f64 / 4.0, &sub(q, p), p);
                self.gauge(&m) <= 1.0 + 1e-12
            })
        };
        let nodes: Vec<usize> = (0..total).filter(|&i| inside[i]).collect();
        let mut ratio = 1.0f64;
        let stride = (nodes.len() / 24).max(1);
        for &src in nodes.iter().step_by(stride) {
            let mut distv = vec![f64::INFINITY; total];
            distv[src] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(Node(0.0, src));
            while let Some(Node(d, u)) = heap.pop() {
                if d > distv[u] {
                    continue;
                }
                let c = u % dims[2];
                let b = (u / dims[2]) % dims[1];
                let a = u / (dims[1] * dims[2]);
                for &(da, db, dc) in &offsets {
                    let (na, nb, nc) = (a as i64 + da, b as i64 + db, c as i64 + dc);
                    if na < 0 || nb < 0 || nc < 0 || na >= dims[0] as i64 || nb >= dims[1] as i64 || nc >= dims[2] as i64 {
                        continue;
                    }
                    let v = idx(na as usize, nb as usize, nc as usize);
                    if !inside[v] || !seg_inside(&pts[u], &pts[v]) {
                        continue;
                    }
                    let nd = d + dist(&pts[u], &pts[v]);
                    if nd < distv[v] {
                        distv[v] = nd;
                        heap.push(Node(nd, v));
                    }
                }
            }
            for &v in &nodes {
                let e = dist(&pts[src], &pts[v]);
                if e > 2.5 * spacing && distv[v].is_finite() {
                    ratio = ratio.max(distv[v] / e);
                }
            }
        }
        ratio
    }
}

#[derive(PartialEq)]
struct Node(f64, usize);

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Node {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.partial_cmp(&self.0).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// `ε_h`: the largest `ε` with `B_{ε h_T}(T) ⊆ Ω^e` and
/// `B_{ε h_T}(T) ∩ Ω̄ ⊆ 𝒯(T)` for every cell, from exact simplex distances
/// to the outer collar surface and to the cells outside each star.
pub fn neighborhood_constant(mesh: &Triangulation, geo: &DomainGeometry) -> Result<f64> {
    geo.check_mesh(mesh)?;
    let n = mesh.n();
    let surface = geo.outer_surface();
    let surf_boxes: Vec<(Vec3, Vec3)> = surface.iter().map(|s| bbox(s, n)).collect();
    let mut eps = f64::INFINITY;
    for c in 0..mesh.num_cells() {
        let pts = mesh.cell_coords(c);
        let h = mesh.diameter(n, c);
        let (lo, hi) = mesh.cell_bbox(c);
        let mut best = f64::INFINITY;
        // outer surface, nearest boxes first
        let mut order: Vec<(f64, usize)> = surf_boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (box_gap(&lo, &hi, &b.0, &b.1, n), i))
            .collect();
        order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (gap, i) in order {
            if gap >= best {
                break;
            }
            best = best.min(hull_distance(&pts, &surface[i], n));
        }
        // cells sharing no vertex with c
        let verts = mesh.cell_vertices(c);
        let mut others: Vec<(f64, usize)> = (0..mesh.num_cells())
            .filter(|&o| !mesh.cell_vertices(o).iter().any(|v| verts.contains(v)))
            .map(|o| {
                let (olo, ohi) = mesh.cell_bbox(o);
                (box_gap(&lo, &hi, &olo, &ohi, n), o)
            })
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (gap, o) in others {
            if gap >= best {
                break;
            }
            best = best.min(hull_distance(&pts, &mesh.cell_coords(o), n));
        }
        eps = eps.min(best / h);
    }
    Ok(eps)
}

fn box_gap(alo: &Vec3, ahi: &Vec3, blo: &Vec3, bhi: &Vec3, n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        let g = (blo[i] - ahi[i]).max(alo[i] - bhi[i]).max(0.0);
        s += g * g;
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gauge_and_reflection() {
        let g = DomainGeometry::named("unit_square", 0.3).unwrap();
        assert!((g.gauge(&[1.1, 0.5, 0.0]) - 1.2).abs() < 1e-14);
        let r = g.reflect(&[1.1, 0.5, 0.0]).unwrap();
        assert!(dist(&r.point, &[0.9, 0.5, 0.0]) < 1e-14);
        // boundary points are fixed
        let r = g.reflect(&[1.0, 0.3, 0.0]).unwrap();
        assert!(dist(&r.point, &[1.0, 0.3, 0.0]) < 1e-15);
        // involution
        let z = [1.05, 0.8, 0.0];
        let once = g.reflect(&z).unwrap().point;
        let twice = g.reflect(&once).unwrap().point;
        assert!(dist(&twice, &z) < 1e-12);
    }

    #[test]
    fn crossed_bricks_flattening() {
        let f = Flattening::crossed_bricks();
        assert_eq!(f.forward(&[0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            assert!(dist(&f.inverse(&f.forward(&x)), &x) < 1e-12);
        }
        // the shared face {y = 0, 0 < x < 1, −1 < z < 0} lands on y' = 0.75 z
        for i in 0..10 {
            let x = [0.05 + 0.09 * i as f64, 0.0, -0.95 + 0.09 * i as f64];
            let w = f.forward(&x);
            assert!((w[1] - 0.75 * w[2]).abs() < 1e-15);
        }
    }

    #[test]
    fn crossed_bricks_is_star_shaped_after_flattening() {
        let g = DomainGeometry::named("crossed_bricks", 0.2).unwrap();
        let m = generate("crossed_bricks", 1).unwrap();
        g.check_mesh(&m).unwrap();
        assert!(g.gauge(&[0.5, -0.5, 0.5]) < 1.0);
        assert!(g.gauge(&[-0.5, -0.5, 0.5]) > 1.0);
    }

    #[test]
    fn collar_maps_sides_correctly() {
        for name in ["unit_square", "l_shape", "unit_cube", "crossed_bricks"] {
            let g = DomainGeometry::named(name, 0.2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..200 {
                let (x, _) = g.sample_boundary(&mut rng);
                assert!(dist(&g.collar_point(&x, 0.0), &x) < 1e-12);
                let t = rng.gen_range(0.01..1.0);
                assert_eq!(g.classify(&g.collar_point(&x, -t)), Region::Interior, "{name}");
                let out = g.collar_point(&x, t);
                assert_eq!(g.classify(&out), Region::ExteriorCollar, "{name}");
                let back = g.reflect(&out).unwrap().point;
                assert!(dist(&back, &g.collar_point(&x, -t)) < 1e-10, "{name}");
            }
        }
    }

    #[test]
    fn reflection_jacobian_matches_differences() {
        let g = DomainGeometry::named("crossed_bricks", 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (z, _, _) = g.sample_exterior_collar(&mut rng);
            let r = g.reflect(&z).unwrap();
            let h = 1e-7;
            for j in 0..3 {
                let mut zp = z;
                zp[j] += h;
                let mut zm = z;
                zm[j] -= h;
                let (Ok(a), Ok(b)) = (g.reflect(&zp), g.reflect(&zm)) else { continue };
                if a.facet != r.facet || b.facet != r.facet {
                    continue;
                }
                for l in 0..3 {
                    let fd = (a.point[l] - b.point[l]) / (2.0 * h);
                    // piece changes of the flattening show up as kinks
                    if (fd - r.jac.a[l][j]).abs() > 1e-5 {
                        let pa = g.flattening().piece_at(&zp) == g.flattening().piece_at(&zm);
                        assert!(!pa, "{fd} vs {}", r.jac.a[l][j]);
                    }
                }
            }
        }
    }

    #[test]
    fn width_limits() {
        assert_eq!(DomainGeometry::named("unit_square", 1.5).unwrap_err(), FeecError::CollarTooWide(1.5));
        assert!(DomainGeometry::named("unit_square", 0.0).is_err());
    }

    #[test]
    fn reference_triangle_neighborhood() {
        let w = 0.2;
        let g = DomainGeometry::named("reference_triangle", w).unwrap();
        let m = generate("reference_triangle", 0).unwrap();
        let e = neighborhood_constant(&m, &g).unwrap();
        // the scaled hypotenuse is nearest: w · dist(c, hypotenuse) / h_T
        let analytic = w * (1.0 / 3.0) / 2f64.sqrt() / 2f64.sqrt();
        assert!((e - analytic).abs() < 1e-12, "{e} vs {analytic}");
    }

    #[test]
    fn inner_metric() {
        let sq = DomainGeometry::named("unit_square", 0.2).unwrap();
        assert_eq!(sq.inner_metric_constant(0.05), 1.0);
        let l = DomainGeometry::named("l_shape", 0.2).unwrap();
        let est = l.inner_metric_constant(0.05);
        assert!(est > 1.2 && est < 1.6, "{est}");
    }
}
