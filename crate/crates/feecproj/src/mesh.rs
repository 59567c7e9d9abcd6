//! Simplicial triangulations: closure, adjacency, stars, reference charts,
//! shape diagnostics, point location, refinement and generators.

use crate::alternator::{alternators, indices};
use crate::error::{FeecError, Result};
use crate::linalg::{dist, gram_volume, sub, Mat, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

/// An oriented simplex named by its sorted vertex ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Simplex {
    pub id: usize,
    pub dim: usize,
    pub vertices: Vec<usize>,
    /// Sign relative to the sorted vertex order; for cells the signed volume
    /// `orientation · det(M_T)` is positive.
    pub orientation: i8,
}

/// The affine map `A_T(u) = M_T u + b_T` from `Δ^n` onto a cell, vertex 0 of
/// the reference simplex going to the lowest vertex id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceChart {
    pub cell: usize,
    pub m: Mat,
    pub b: Vec3,
    pub m_inv: Mat,
    pub det: f64,
}

impl ReferenceChart {
    pub fn map(&self, u: &[f64]) -> Vec3 {
        let v = self.m.apply(u);
        [v[0] + self.b[0], v[1] + self.b[1], v[2] + self.b[2]]
    }

    pub fn pullback_point(&self, x: &[f64]) -> Vec3 {
        let d = [x[0] - self.b[0], x.get(1).map_or(0.0, |v| v - self.b[1]), x.get(2).map_or(0.0, |v| v - self.b[2])];
        self.m_inv.apply(&d)
    }

    /// Barycentric coordinates `(λ_0, …, λ_n)` of `x`.
    pub fn barycentric(&self, x: &[f64]) -> Vec<f64> {
        let u = self.pullback_point(x);
        let n = self.m.rows;
        let mut l = Vec::with_capacity(n + 1);
        l.push(1.0 - u[..n].iter().sum::<f64>());
        l.extend_from_slice(&u[..n]);
        l
    }
}

/// A half-space `a·x ≤ β` with unit normal, tagged by the facet it bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfSpace {
    pub a: Vec3,
    pub beta: f64,
    pub facet: usize,
}

impl HalfSpace {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut s = -self.beta;
        for (i, xi) in x.iter().enumerate().take(3) {
            s += self.a[i] * xi;
        }
        s
    }
}

#[derive(Clone, Debug)]
struct Locator {
    lo: Vec3,
    cell: Vec3,
    dims: [usize; 3],
    buckets: Vec<Vec<usize>>,
}

/// Mesh file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub n: usize,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct Triangulation {
    n: usize,
    coords: Vec<Vec3>,
    simplices: Vec<Vec<Simplex>>,
    lookup: Vec<HashMap<Vec<usize>, usize>>,
    cell_faces: Vec<Vec<Vec<usize>>>,
    cofaces: Vec<Vec<Vec<usize>>>,
    star_cells: Vec<Vec<Vec<usize>>>,
    star_count: Vec<Vec<usize>>,
    diam: Vec<Vec<f64>>,
    vol: Vec<Vec<f64>>,
    vertex_size: Vec<f64>,
    charts: Vec<ReferenceChart>,
    halfspaces: Vec<Vec<HalfSpace>>,
    boundary_facets: Vec<usize>,
    locator: Locator,
}

fn simplex_volume(pts: &[Vec3], n: usize) -> f64 {
    let m = pts.len() - 1;
    if m == 0 {
        return 1.0;
    }
    let cols: Vec<Vec3> = pts[1..].iter().map(|p| sub(p, &pts[0])).collect();
    let j = Mat::from_cols(n, &cols);
    gram_volume(&j) / (1..=m).map(|i| i as f64).product::<f64>()
}

fn diameter(pts: &[Vec3]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max(dist(&pts[i], &pts[j]));
        }
    }
    d
}

/// Build a triangulation from vertex coordinates and cell vertex lists.
pub fn build_triangulation(vertices: &[Vec<f64>], cells: &[Vec<usize>]) -> Result<Triangulation> {
    if vertices.is_empty() || cells.is_empty() {
        return Err(FeecError::InvalidConfig("empty mesh".into()));
    }
    let n = vertices[0].len();
    if !(1..=3).contains(&n) {
        return Err(FeecError::InvalidConfig(format!("unsupported dimension {n}")));
    }
    let mut coords = Vec::with_capacity(vertices.len());
    for v in vertices {
        if v.len() != n {
            return Err(FeecError::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(FeecError::InvalidConfig("non-finite vertex".into()));
        }
        coords.push(crate::linalg::to_vec3(v));
    }
    let nv = coords.len();

    // sorted cells, checked for distinct ids and volume
    let mut sorted_cells = Vec::with_capacity(cells.len());
    for (c, cell) in cells.iter().enumerate() {
        if cell.len() != n + 1 || cell.iter().any(|&v| v >= nv) {
            return Err(FeecError::InvalidConfig(format!("cell {c} is not an {n}-simplex")));
        }
        let mut s = cell.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != n + 1 {
            return Err(FeecError::DegenerateCell { cell: c });
        }
        sorted_cells.push(s);
    }

    let mut simplices: Vec<Vec<Simplex>> = vec![Vec::new(); n + 1];
    let mut lookup: Vec<HashMap<Vec<usize>, usize>> = vec![HashMap::new(); n + 1];
    let mut cell_faces = Vec::with_capacity(sorted_cells.len());
    let mut charts = Vec::with_capacity(sorted_cells.len());

    for (c, cell) in sorted_cells.iter().enumerate() {
        if lookup[n].contains_key(cell) {
            return Err(FeecError::NonConformingMesh(format!("cell {c} repeated")));
        }
        let pts: Vec<Vec3> = cell.iter().map(|&v| coords[v]).collect();
        let cols: Vec<Vec3> = pts[1..].iter().map(|p| sub(p, &pts[0])).collect();
        let m = Mat::from_cols(n, &cols);
        let det = m.det();
        let h = diameter(&pts);
        if det.abs() <= 1e-14 * h.powi(n as i32) {
            return Err(FeecError::DegenerateCell { cell: c });
        }
        let m_inv = m.inverse().ok_or(FeecError::DegenerateCell { cell: c })?;
        charts.push(ReferenceChart {
            cell: c,
            m,
            b: pts[0],
            m_inv,
            det,
        });
        let mut per_dim = Vec::with_capacity(n + 1);
        for dim in 0..=n {
            let mut ids = Vec::new();
            for mask in alternators(dim + 1, n + 1) {
                let verts: Vec<usize> = indices(mask).iter().map(|&i| cell[i]).collect();
                let next = simplices[dim].len();
                let id = *lookup[dim].entry(verts.clone()).or_insert_with(|| {
                    simplices[dim].push(Simplex {
                        id: next,
                        dim,
                        vertices: verts.clone(),
                        orientation: 1,
                    });
                    next
                });
                ids.push(id);
            }
            per_dim.push(ids);
        }
        let id = per_dim[n][0];
        simplices[n][id].orientation = if det > 0.0 { 1 } else { -1 };
        debug_assert_eq!(id, c);
        cell_faces.push(per_dim);
    }

    // every vertex must be used
    if simplices[0].len() != nv {
        return Err(FeecError::InvalidConfig("unreferenced vertex".into()));
    }
    // vertex ids of 0-simplices coincide with vertex indices for convenience
    let mut remap = vec![0usize; nv];
    for s in &simplices[0] {
        remap[s.id] = s.vertices[0];
    }
    if remap.iter().enumerate().any(|(i, &v)| i != v) {
        let mut verts: Vec<Simplex> = (0..nv)
            .map(|v| Simplex {
                id: v,
                dim: 0,
                vertices: vec![v],
                orientation: 1,
            })
            .collect();
        let mut inverse = vec![0usize; nv];
        for (old, &v) in remap.iter().enumerate() {
            inverse[old] = v;
        }
        for faces in cell_faces.iter_mut() {
            for id in faces[0].iter_mut() {
                *id = inverse[*id];
            }
        }
        lookup[0] = verts.iter().map(|s| (s.vertices.clone(), s.id)).collect();
        std::mem::swap(&mut simplices[0], &mut verts);
    }

    // cells containing each simplex
    let mut cofaces: Vec<Vec<Vec<usize>>> = (0..=n).map(|d| vec![Vec::new(); simplices[d].len()]).collect();
    for (c, faces) in cell_faces.iter().enumerate() {
        for (dim, ids) in faces.iter().enumerate() {
            for &id in ids {
                cofaces[dim][id].push(c);
            }
        }
    }
    let mut boundary_facets = Vec::new();
    if n >= 1 {
        for (f, cs) in cofaces[n - 1].iter().enumerate() {
            match cs.len() {
                1 => boundary_facets.push(f),
                2 => {}
                k => {
                    return Err(FeecError::NonConformingMesh(format!(
                        "facet {f} shared by {k} cells"
                    )))
                }
            }
        }
    }

    let mut diam = Vec::with_capacity(n + 1);
    let mut vol = Vec::with_capacity(n + 1);
    for dim in 0..=n {
        let mut dd = Vec::with_capacity(simplices[dim].len());
        let mut vv = Vec::with_capacity(simplices[dim].len());
        for s in &simplices[dim] {
            let pts: Vec<Vec3> = s.vertices.iter().map(|&v| coords[v]).collect();
            dd.push(diameter(&pts));
            vv.push(simplex_volume(&pts, n));
        }
        diam.push(dd);
        vol.push(vv);
    }
    let vertex_size: Vec<f64> = (0..nv)
        .map(|v| {
            let cs = &cofaces[0][v];
            cs.iter().map(|&c| diam[n][c]).sum::<f64>() / cs.len() as f64
        })
        .collect();

    // stars: all simplices sharing a vertex
    let mut vertex_simplices: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nv];
    for dim in 0..=n {
        for s in &simplices[dim] {
            for &v in &s.vertices {
                vertex_simplices[v].push((dim, s.id));
            }
        }
    }
    let mut star_cells = Vec::with_capacity(n + 1);
    let mut star_count = Vec::with_capacity(n + 1);
    for dim in 0..=n {
        let mut sc = Vec::with_capacity(simplices[dim].len());
        let mut cnt = Vec::with_capacity(simplices[dim].len());
        for s in &simplices[dim] {
            let mut set: BTreeSet<(usize, usize)> = BTreeSet::new();
            for &v in &s.vertices {
                set.extend(vertex_simplices[v].iter().cloned());
            }
            cnt.push(set.len());
            sc.push(set.iter().filter(|(d, _)| *d == n).map(|(_, id)| *id).collect());
        }
        star_cells.push(sc);
        star_count.push(cnt);
    }

    let halfspaces = sorted_cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let ch = &charts[c];
            (0..=n)
                .map(|i| {
                    // λ_i ≥ 0 with ∇λ_0 = −Σ rows of M^{-1}, ∇λ_i = row i−1
                    let mut g = [0.0; 3];
                    for j in 0..n {
                        g[j] = if i == 0 {
                            -(0..n).map(|r| ch.m_inv.a[r][j]).sum::<f64>()
                        } else {
                            ch.m_inv.a[i - 1][j]
                        };
                    }
                    let gn = crate::linalg::norm(&g);
                    // facet opposite local vertex i; it contains local vertex (i+1) mod (n+1)
                    let p = coords[cell[(i + 1) % (n + 1)]];
                    let a = [-g[0] / gn, -g[1] / gn, -g[2] / gn];
                    let beta = crate::linalg::dot(&a, &p);
                    let verts: Vec<usize> = (0..=n).filter(|&j| j != i).map(|j| cell[j]).collect();
                    let facet = if n >= 1 { lookup[n - 1][&verts] } else { 0 };
                    HalfSpace { a, beta, facet }
                })
                .collect()
        })
        .collect();

    let locator = build_locator(n, &coords, &sorted_cells);
    let mesh = Triangulation {
        n,
        coords,
        simplices,
        lookup,
        cell_faces,
        cofaces,
        star_cells,
        star_count,
        diam,
        vol,
        vertex_size,
        charts,
        halfspaces,
        boundary_facets,
        locator,
    };
    mesh.check_geometric_conformity()?;
    Ok(mesh)
}

fn build_locator(n: usize, coords: &[Vec3], cells: &[Vec<usize>]) -> Locator {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in coords {
        for i in 0..n {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let per_axis = ((cells.len() as f64).powf(1.0 / n as f64).ceil() as usize).clamp(1, 64);
    let mut dims = [1usize; 3];
    let mut cell = [1.0; 3];
    for i in 0..n {
        dims[i] = per_axis;
        let span = (hi[i] - lo[i]).max(1e-300);
        cell[i] = span / per_axis as f64;
    }
    let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
    for (c, vs) in cells.iter().enumerate() {
        let mut blo = [0usize; 3];
        let mut bhi = [0usize; 3];
        for i in 0..n {
            let cmin = vs.iter().map(|&v| coords[v][i]).fold(f64::INFINITY, f64::min);
            let cmax = vs.iter().map(|&v| coords[v][i]).fold(f64::NEG_INFINITY, f64::max);
            let margin = 1e-9 * (cmax - cmin).max(cell[i]);
            blo[i] = (((cmin - margin - lo[i]) / cell[i]).floor().max(0.0) as usize).min(dims[i] - 1);
            bhi[i] = (((cmax + margin - lo[i]) / cell[i]).floor().max(0.0) as usize).min(dims[i] - 1);
        }
        for a in blo[0]..=bhi[0] {
            for b in blo[1]..=bhi[1] {
                for d in blo[2]..=bhi[2] {
                    buckets[(a * dims[1] + b) * dims[2] + d].push(c);
                }
            }
        }
    }
    Locator {
        lo,
        cell,
        dims,
        buckets,
    }
}

impl Triangulation {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coords(&self) -> &[Vec3] {
        &self.coords
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn num_cells(&self) -> usize {
        self.simplices[self.n].len()
    }

    pub fn num_simplices(&self, dim: usize) -> usize {
        self.simplices[dim].len()
    }

    pub fn simplices(&self, dim: usize) -> &[Simplex] {
        &self.simplices[dim]
    }

    pub fn simplex(&self, dim: usize, id: usize) -> &Simplex {
        &self.simplices[dim][id]
    }

    pub fn find_simplex(&self, vertices: &[usize]) -> Option<usize> {
        let mut v = vertices.to_vec();
        v.sort_unstable();
        self.lookup.get(v.len().wrapping_sub(1))?.get(&v).copied()
    }

    pub fn cell_vertices(&self, c: usize) -> &[usize] {
        &self.simplices[self.n][c].vertices
    }

    pub fn cell_coords(&self, c: usize) -> Vec<Vec3> {
        self.cell_vertices(c).iter().map(|&v| self.coords[v]).collect()
    }

    pub fn simplex_coords(&self, dim: usize, id: usize) -> Vec<Vec3> {
        self.simplices[dim][id].vertices.iter().map(|&v| self.coords[v]).collect()
    }

    /// Face ids of cell `c` of dimension `dim`, in local lexicographic order.
    pub fn cell_faces(&self, c: usize, dim: usize) -> &[usize] {
        &self.cell_faces[c][dim]
    }

    /// Cells containing the given simplex.
    pub fn cofaces(&self, dim: usize, id: usize) -> &[usize] {
        &self.cofaces[dim][id]
    }

    /// Cells meeting the simplex (the cells of its star `𝒯(T)`).
    pub fn star_cells(&self, dim: usize, id: usize) -> &[usize] {
        &self.star_cells[dim][id]
    }

    /// Number of simplices of all dimensions meeting the simplex, `|𝒯(T)|`.
    pub fn star_size(&self, dim: usize, id: usize) -> usize {
        self.star_count[dim][id]
    }

    pub fn diameter(&self, dim: usize, id: usize) -> f64 {
        self.diam[dim][id]
    }

    /// Size used in shape comparisons: the diameter, or `h_V` for vertices.
    pub fn size(&self, dim: usize, id: usize) -> f64 {
        if dim == 0 {
            self.vertex_size[id]
        } else {
            self.diam[dim][id]
        }
    }

    pub fn volume(&self, dim: usize, id: usize) -> f64 {
        self.vol[dim][id]
    }

    pub fn vertex_sizes(&self) -> &[f64] {
        &self.vertex_size
    }

    pub fn total_volume(&self) -> f64 {
        self.vol[self.n].iter().sum()
    }

    pub fn h_max(&self) -> f64 {
        self.diam[self.n].iter().cloned().fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        self.diam[self.n].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn chart(&self, c: usize) -> &ReferenceChart {
        &self.charts[c]
    }

    /// Half-spaces `a·x ≤ β` cutting out the cell; entry `i` is the facet
    /// opposite local vertex `i`.
    pub fn cell_halfspaces(&self, c: usize) -> &[HalfSpace] {
        &self.halfspaces[c]
    }

    pub fn boundary_facets(&self) -> &[usize] {
        &self.boundary_facets
    }

    pub fn is_boundary_facet(&self, f: usize) -> bool {
        self.cofaces[self.n - 1][f].len() == 1
    }

    /// Bounding box `(lo, hi)` of a set of cells.
    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for i in 0..self.n {
            lo[i] = self.coords.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
            hi[i] = self.coords.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
        }
        (lo, hi)
    }

    pub fn cell_bbox(&self, c: usize) -> (Vec3, Vec3) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        let pts = self.cell_coords(c);
        for i in 0..self.n {
            lo[i] = pts.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
            hi[i] = pts.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max);
        }
        (lo, hi)
    }

    /// Cells whose bounding box meets the box `[lo − pad, hi + pad]`, ascending.
    pub fn cells_near_box(&self, lo: &Vec3, hi: &Vec3, pad: f64) -> Vec<usize> {
        let l = &self.locator;
        let mut blo = [0usize; 3];
        let mut bhi = [0usize; 3];
        for i in 0..self.n {
            let a = ((lo[i] - pad - l.lo[i]) / l.cell[i]).floor();
            let b = ((hi[i] + pad - l.lo[i]) / l.cell[i]).floor();
            if b < 0.0 || a > (l.dims[i] - 1) as f64 {
                return Vec::new();
            }
            blo[i] = a.max(0.0) as usize;
            bhi[i] = (b.max(0.0) as usize).min(l.dims[i] - 1);
        }
        let mut out = BTreeSet::new();
        for a in blo[0]..=bhi[0] {
            for b in blo[1]..=bhi[1] {
                for d in blo[2]..=bhi[2] {
                    for &c in &l.buckets[(a * l.dims[1] + b) * l.dims[2] + d] {
                        out.insert(c);
                    }
                }
            }
        }
        out.into_iter()
            .filter(|&c| {
                let (clo, chi) = self.cell_bbox(c);
                (0..self.n).all(|i| clo[i] <= hi[i] + pad && chi[i] >= lo[i] - pad)
            })
            .collect()
    }

    /// Locate `x`: the lowest-id cell whose barycentric coordinates are all
    /// `≥ −tol`.
    pub fn locate_point(&self, x: &[f64], tol: f64) -> Result<(usize, Vec<f64>)> {
        let mut p = [0.0; 3];
        p[..self.n].copy_from_slice(&x[..self.n]);
        let pad = (tol.max(0.0) * 4.0 + 1e-12) * self.h_max();
        for c in self.cells_near_box(&p, &p, pad) {
            let l = self.charts[c].barycentric(&p);
            if l.iter().all(|&v| v >= -tol) {
                return Ok((c, l));
            }
        }
        Err(FeecError::NotFound)
    }

    /// Shape constant: the max of `h_T^n/|T|` over cells and of `h_T/h_S`
    /// over all simplices `T` and `S` meeting `T`.
    pub fn shape_constant(&self) -> f64 {
        let n = self.n;
        let mut c = 0.0f64;
        for t in 0..self.num_cells() {
            c = c.max(self.diam[n][t].powi(n as i32) / self.vol[n][t]);
        }
        c.max(self.neighbor_ratio())
    }

    fn neighbor_ratio(&self) -> f64 {
        let n = self.n;
        // smallest size over all simplices containing each vertex
        let mut vmin = vec![f64::INFINITY; self.num_vertices()];
        for dim in 0..=n {
            for s in &self.simplices[dim] {
                let h = self.size(dim, s.id);
                for &v in &s.vertices {
                    vmin[v] = vmin[v].min(h);
                }
            }
        }
        let mut r = 0.0f64;
        for dim in 0..=n {
            for s in &self.simplices[dim] {
                let m = s.vertices.iter().map(|&v| vmin[v]).fold(f64::INFINITY, f64::min);
                r = r.max(self.size(dim, s.id) / m);
            }
        }
        r
    }

    /// `C_N = max_T |𝒯(T)|`.
    pub fn star_constant(&self) -> usize {
        self.star_count.iter().flat_map(|v| v.iter().cloned()).max().unwrap_or(0)
    }

    /// `max ‖M_T‖₂ / h_T` and `max ‖M_T^{-1}‖₂ · h_T`.
    pub fn chart_constants(&self) -> (f64, f64) {
        let n = self.n;
        let mut cm = 0.0f64;
        let mut cinv = 0.0f64;
        for (c, ch) in self.charts.iter().enumerate() {
            let h = self.diam[n][c];
            cm = cm.max(ch.m.spectral_norm() / h);
            cinv = cinv.max(ch.m_inv.spectral_norm() * h);
        }
        (cm, cinv)
    }

    fn check_geometric_conformity(&self) -> Result<()> {
        let n = self.n;
        let tol = 1e-10;
        for c in 0..self.num_cells() {
            let (lo, hi) = self.cell_bbox(c);
            let own = self.cell_vertices(c);
            let pad = 1e-9 * self.diam[n][c];
            // vertices inside a cell they do not belong to
            for other in self.cells_near_box(&lo, &hi, pad) {
                if other == c {
                    continue;
                }
                for &v in self.cell_vertices(other) {
                    if own.contains(&v) {
                        continue;
                    }
                    let l = self.charts[c].barycentric(&self.coords[v]);
                    if l.iter().all(|&x| x >= -tol) {
                        return Err(FeecError::NonConformingMesh(format!(
                            "vertex {v} lies in cell {c} without being one of its vertices"
                        )));
                    }
                }
                let bc = barycenter(&self.cell_coords(other));
                let l = self.charts[c].barycentric(&bc);
                if l.iter().all(|&x| x > tol) {
                    return Err(FeecError::NonConformingMesh(format!(
                        "cells {c} and {other} overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_file(&self) -> MeshFile {
        MeshFile {
            n: self.n,
            vertices: self.coords.iter().map(|p| p[..self.n].to_vec()).collect(),
            cells: (0..self.num_cells()).map(|c| self.cell_vertices(c).to_vec()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("mesh serializes")
    }

    pub fn from_json(s: &str) -> Result<Triangulation> {
        let f: MeshFile = serde_json::from_str(s)?;
        if f.vertices.iter().any(|v| v.len() != f.n) {
            return Err(FeecError::InvalidConfig("vertex length differs from n".into()));
        }
        build_triangulation(&f.vertices, &f.cells)
    }

    /// Uniform red refinement: edges are halved; triangles split into 4 and
    /// tetrahedra into 8.
    pub fn refine(&self) -> Result<Triangulation> {
        let n = self.n;
        let mut verts: Vec<Vec<f64>> = self.coords.iter().map(|p| p[..n].to_vec()).collect();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec<f64>>| -> usize {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                let p: Vec<f64> = (0..n).map(|i| 0.5 * (verts[a][i] + verts[b][i])).collect();
                verts.push(p);
                verts.len() - 1
            })
        };
        let mut cells = Vec::new();
        for c in 0..self.num_cells() {
            let v = self.cell_vertices(c).to_vec();
            match n {
                1 => {
                    let m = midpoint(v[0], v[1], &mut verts);
                    cells.push(vec![v[0], m]);
                    cells.push(vec![m, v[1]]);
                }
                2 => {
                    let m01 = midpoint(v[0], v[1], &mut verts);
                    let m02 = midpoint(v[0], v[2], &mut verts);
                    let m12 = midpoint(v[1], v[2], &mut verts);
                    cells.push(vec![v[0], m01, m02]);
                    cells.push(vec![m01, v[1], m12]);
                    cells.push(vec![m02, m12, v[2]]);
                    cells.push(vec![m01, m12, m02]);
                }
                _ => {
                    let x = |i: usize, j: usize, verts: &mut Vec<Vec<f64>>, f: &mut dyn FnMut(usize, usize, &mut Vec<Vec<f64>>) -> usize| f(v[i], v[j], verts);
                    let mut f = |a: usize, b: usize, vs: &mut Vec<Vec<f64>>| midpoint(a, b, vs);
                    let x01 = x(0, 1, &mut verts, &mut f);
                    let x02 = x(0, 2, &mut verts, &mut f);
                    let x03 = x(0, 3, &mut verts, &mut f);
                    let x12 = x(1, 2, &mut verts, &mut f);
                    let x13 = x(1, 3, &mut verts, &mut f);
                    let x23 = x(2, 3, &mut verts, &mut f);
                    cells.push(vec![v[0], x01, x02, x03]);
                    cells.push(vec![x01, v[1], x12, x13]);
                    cells.push(vec![x02, x12, v[2], x23]);
                    cells.push(vec![x03, x13, x23, v[3]]);
                    cells.push(vec![x01, x02, x03, x13]);
                    cells.push(vec![x01, x02, x12, x13]);
                    cells.push(vec![x02, x03, x13, x23]);
                    cells.push(vec![x02, x12, x13, x23]);
                }
            }
        }
        build_triangulation(&verts, &cells)
    }

    pub fn refine_times(&self, levels: usize) -> Result<Triangulation> {
        let mut m = self.clone();
        for _ in 0..levels {
            m = m.refine()?;
        }
        Ok(m)
    }
}

pub fn barycenter(pts: &[Vec3]) -> Vec3 {
    let k = pts.len() as f64;
    let mut b = [0.0; 3];
    for p in pts {
        for i in 0..3 {
            b[i] += p[i] / k;
        }
    }
    b
}

/// Kuhn split of the unit cube with lower corner `o` into six tetrahedra,
/// appending vertices to `verts` through `index`.
fn kuhn_cube(o: [f64; 3], index: &mut dyn FnMut([i64; 3]) -> usize, cells: &mut Vec<Vec<usize>>) {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let base = [o[0] as i64, o[1] as i64, o[2] as i64];
    for p in perms {
        let mut cur = base;
        let mut tet = vec![index(cur)];
        for &axis in &p {
            cur[axis] += 1;
            tet.push(index(cur));
        }
        cells.push(tet);
    }
}

fn lattice_mesh(cubes: &[[f64; 3]], scale: f64) -> Result<Triangulation> {
    let mut verts: Vec<Vec<f64>> = Vec::new();
    let mut ids: HashMap<[i64; 3], usize> = HashMap::new();
    let mut cells = Vec::new();
    for o in cubes {
        let mut index = |p: [i64; 3]| -> usize {
            *ids.entry(p).or_insert_with(|| {
                verts.push(p.iter().map(|&c| c as f64 * scale).collect());
                verts.len() - 1
            })
        };
        kuhn_cube(*o, &mut index, &mut cells);
    }
    build_triangulation(&verts, &cells)
}

/// Reference simplex `Δ^n` as a one-cell mesh.
pub fn reference_simplex(n: usize) -> Result<Triangulation> {
    let mut verts = vec![vec![0.0; n]];
    for i in 0..n {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        verts.push(v);
    }
    build_triangulation(&verts, &[(0..=n).collect()])
}

/// Named coarse meshes, uniformly refined `level` times.
pub fn generate(domain: &str, level: usize) -> Result<Triangulation> {
    let coarse = match domain {
        "unit_interval" => build_triangulation(&[vec![0.0], vec![1.0]], &[vec![0, 1]])?,
        "unit_square" => build_triangulation(
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]],
            &[vec![0, 1, 2], vec![0, 2, 3]],
        )?,
        "l_shape" => {
            let mut verts = Vec::new();
            let mut cells = Vec::new();
            let mut ids: HashMap<(i64, i64), usize> = HashMap::new();
            for (i, j) in [(0i64, 0i64), (1, 0), (0, 1)] {
                let mut idx = |a: i64, b: i64| -> usize {
                    *ids.entry((a, b)).or_insert_with(|| {
                        verts.push(vec![a as f64 * 0.5, b as f64 * 0.5]);
                        verts.len() - 1
                    })
                };
                let v00 = idx(i, j);
                let v10 = idx(i + 1, j);
                let v11 = idx(i + 1, j + 1);
                let v01 = idx(i, j + 1);
                cells.push(vec![v00, v10, v11]);
                cells.push(vec![v00, v11, v01]);
            }
            build_triangulation(&verts, &cells)?
        }
        "unit_cube" => lattice_mesh(&[[0.0, 0.0, 0.0]], 1.0)?,
        "crossed_bricks" => lattice_mesh(
            &[
                [-1.0, 0.0, -1.0],
                [0.0, 0.0, -1.0],
                [0.0, -1.0, -1.0],
                [0.0, -1.0, 0.0],
            ],
            1.0,
        )?,
        "reference_triangle" => reference_simplex(2)?,
        "reference_tetrahedron" => reference_simplex(3)?,
        other => return Err(FeecError::InvalidConfig(format!("unknown domain {other}"))),
    };
    coarse.refine_times(level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_counts() {
        let m = generate("unit_square", 0).unwrap();
        assert_eq!(m.num_vertices(), 4);
        assert_eq!(m.num_simplices(1), 5);
        assert_eq!(m.num_cells(), 2);
        assert_eq!(m.boundary_facets().len(), 4);
    }

    #[test]
    fn reference_triangle_face_lattice() {
        let m = reference_simplex(2).unwrap();
        let total: usize = (0..=2).map(|d| m.num_simplices(d)).sum();
        assert_eq!(total, 7);
        assert!((m.shape_constant() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hanging_vertex_is_rejected() {
        let v = vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![1.0, 0.0],
            vec![1.0, -1.0],
        ];
        // second triangle shares only half of the bottom edge
        let r = build_triangulation(&v, &[vec![0, 1, 2], vec![3, 4, 1]]);
        assert!(matches!(r, Err(FeecError::NonConformingMesh(_))), "{r:?}");
    }

    #[test]
    fn degenerate_cell_is_rejected() {
        let v = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]];
        assert_eq!(
            build_triangulation(&v, &[vec![0, 1, 2]]).unwrap_err(),
            FeecError::DegenerateCell { cell: 0 }
        );
    }

    #[test]
    fn refinement_counts_and_shape() {
        let m = generate("unit_square", 2).unwrap();
        assert_eq!(m.num_cells(), 32);
        assert!((m.shape_constant() - 4.0).abs() < 1e-12);
        let c = generate("crossed_bricks", 0).unwrap();
        assert_eq!(c.num_cells(), 24);
        assert!((c.total_volume() - 4.0).abs() < 1e-12);
        let r = generate("unit_cube", 1).unwrap();
        assert_eq!(r.num_cells(), 48);
        assert!((r.total_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn locate_ties_and_exterior() {
        let m = generate("unit_square", 0).unwrap();
        // midpoint of the shared diagonal belongs to both cells
        let (c, _) = m.locate_point(&[0.5, 0.5], 1e-12).unwrap();
        assert_eq!(c, 0);
        assert_eq!(m.locate_point(&[2.0, 0.5], 1e-9), Err(FeecError::NotFound));
        for c in 0..m.num_cells() {
            let b = barycenter(&m.cell_coords(c));
            assert_eq!(m.locate_point(&b, 0.0).unwrap().0, c);
        }
    }

    #[test]
    fn json_roundtrip() {
        let m = generate("l_shape", 1).unwrap();
        let back = Triangulation::from_json(&m.to_json()).unwrap();
        assert_eq!(back.to_file(), m.to_file());
        assert!((m.total_volume() - 0.75).abs() < 1e-14);
    }
}
