//! Mesh-size functions: the piecewise-affine interpolant `𝙷` of the vertex
//! sizes and its mollification `𝚑 = μ_ρ ∗ E⁰𝙷`.

use crate::error::{FeecError, Result};
use crate::geometry::{random_barycentric, DomainGeometry};
use crate::linalg::{axpy, dist, Mat, Vec3};
use crate::mesh::Triangulation;
use crate::quadrature::{bump, graded_ball_rule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Value, gradient and Hessian of `𝚑` at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeJet {
    pub value: f64,
    pub grad: Vec3,
    pub hess: [[f64; 3]; 3],
}

/// Kernel node: position in `B_1`, weight `C_μ w μ(u)`, and the factors
/// turning it into `∇μ` and `∇²μ` weights.
#[derive(Clone, Debug)]
struct KernelNode {
    u: Vec3,
    w: f64,
    grad: Vec3,
    hess: [[f64; 3]; 3],
}

#[derive(Clone, Debug)]
pub struct MeshSizeField {
    mesh: Arc<Triangulation>,
    geometry: Arc<DomainGeometry>,
    rho: f64,
    uniform: Option<f64>,
    nodes: Vec<KernelNode>,
    c_mesh: f64,
}

/// Default smoothing radius `ρ = h_min ε_h / (4 (1 + Lip 𝒜))`.
pub fn default_radius(h_min: f64, eps_h: f64, lip_reflection: f64) -> f64 {
    0.25 * h_min * eps_h / (1.0 + lip_reflection)
}

/// Ball-rule degree used for the size field.
pub fn size_rule_degree(n: usize) -> usize {
    if n == 3 {
        12
    } else {
        20
    }
}

fn kernel_nodes(n: usize) -> Result<Vec<KernelNode>> {
    let rule = graded_ball_rule(n, size_rule_degree(n))?;
    let raw: Vec<(Vec3, f64)> = rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(u, w)| (*u, w * bump(u[0] * u[0] + u[1] * u[1] + u[2] * u[2])))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    // normalize with the same rule so constants are reproduced exactly
    let c_mu = 1.0 / raw.iter().map(|(_, w)| w).sum::<f64>();
    Ok(raw
        .into_iter()
        .map(|(u, w)| {
            let s = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
            let a = 1.0 - s;
            let mut g = [0.0; 3];
            let mut h = [[0.0; 3]; 3];
            for i in 0..n {
                g[i] = -2.0 * u[i] / (a * a);
                for j in 0..n {
                    h[i][j] = 4.0 * u[i] * u[j] / a.powi(4) - 8.0 * u[i] * u[j] / a.powi(3);
                    if i == j {
                        h[i][j] -= 2.0 / (a * a);
                    }
                }
            }
            KernelNode {
                u,
                w: c_mu * w,
                grad: g,
                hess: h,
            }
        })
        .collect())
}

impl MeshSizeField {
    /// Build `𝚑` with radius `rho`; the radius must satisfy
    /// `ρ (1 + Lip 𝒜) < h_min ε_h`.
    pub fn build(
        mesh: Arc<Triangulation>,
        geometry: Arc<DomainGeometry>,
        rho: f64,
        eps_h: f64,
        lip_reflection: f64,
    ) -> Result<Self> {
        let limit = mesh.h_min() * eps_h / (1.0 + lip_reflection);
        if !(rho > 0.0 && rho < limit) {
            return Err(FeecError::RadiusTooLarge { rho, bound: limit });
        }
        let hv = mesh.vertex_sizes();
        let uniform = hv
            .iter()
            .all(|h| (h - hv[0]).abs() <= 1e-14 * hv[0])
            .then_some(hv[0]);
        let nodes = kernel_nodes(mesh.n())?;
        let c_mesh = mesh.shape_constant();
        Ok(MeshSizeField {
            mesh,
            geometry,
            rho,
            uniform,
            nodes,
            c_mesh,
        })
    }

    pub fn mesh(&self) -> &Arc<Triangulation> {
        &self.mesh
    }

    pub fn geometry(&self) -> &Arc<DomainGeometry> {
        &self.geometry
    }

    pub fn radius(&self) -> f64 {
        self.rho
    }

    /// The common size when all vertex sizes agree; then `𝚑` is constant.
    pub fn uniform(&self) -> Option<f64> {
        self.uniform
    }

    pub fn c_mesh(&self) -> f64 {
        self.c_mesh
    }

    /// `C_h = C_mesh²`.
    pub fn c_h(&self) -> f64 {
        self.c_mesh * self.c_mesh
    }

    /// `𝙷` at a point of `Ω̄`.
    pub fn coarse(&self, x: &Vec3) -> Result<f64> {
        let (c, lam) = self
            .mesh
            .locate_point(x, 1e-10)
            .map_err(|_| FeecError::EvaluationOutsideExtendedDomain)?;
        let hv = self.mesh.vertex_sizes();
        Ok(self.mesh.cell_vertices(c).iter().zip(&lam).map(|(v, l)| l * hv[*v]).sum())
    }

    /// `E⁰𝙷`: `𝙷` on `Ω̄`, `𝙷∘𝒜` on the exterior collar.
    pub fn extended_coarse(&self, z: &Vec3) -> Result<f64> {
        match self.geometry.extension_source(z)? {
            None => self.coarse(z),
            Some(r) => self.coarse(&r.point),
        }
    }

    pub fn eval(&self, x: &Vec3) -> Result<f64> {
        if let Some(h) = self.uniform {
            return Ok(h);
        }
        let mut s = 0.0;
        for nd in &self.nodes {
            s += nd.w * self.extended_coarse(&axpy(self.rho, &nd.u, x))?;
        }
        Ok(s)
    }

    /// `𝚑`, `∇𝚑` and `∇²𝚑` from the kernel derivatives.
    pub fn jet(&self, x: &Vec3) -> Result<SizeJet> {
        let mut jet = SizeJet {
            value: 0.0,
            grad: [0.0; 3],
            hess: [[0.0; 3]; 3],
        };
        if let Some(h) = self.uniform {
            jet.value = h;
            return Ok(jet);
        }
        let n = self.mesh.n();
        // 𝚑(x) = ∫ μ_ρ(z − x) F(z) dz, so each x-derivative brings −1/ρ
        let g = -1.0 / self.rho;
        let hh = 1.0 / (self.rho * self.rho);
        for nd in &self.nodes {
            let f = nd.w * self.extended_coarse(&axpy(self.rho, &nd.u, x))?;
            jet.value += f;
            for i in 0..n {
                jet.grad[i] += g * f * nd.grad[i];
                for j in 0..n {
                    jet.hess[i][j] += hh * f * (nd.hess[i][j] + nd.grad[i] * nd.grad[j]);
                }
            }
        }
        Ok(jet)
    }

    pub fn gradient(&self, x: &Vec3) -> Result<Vec3> {
        Ok(self.jet(x)?.grad)
    }

    /// Smallest and largest ratio `𝚑(x)/h_T` over random points of cells;
    /// the field is in range when both lie in `[C_h^{-1}, C_h]`.
    pub fn ratio_range(&self, samples: usize, seed: u64) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.mesh.n();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for _ in 0..samples {
            let c = rng.gen_range(0..self.mesh.num_cells());
            let x = self.random_point(c, &mut rng);
            let r = self.eval(&x)? / self.mesh.diameter(n, c);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        Ok((lo, hi))
    }

    fn random_point(&self, c: usize, rng: &mut impl Rng) -> Vec3 {
        let lam = random_barycentric(self.mesh.n() + 1, rng);
        let pts = self.mesh.cell_coords(c);
        lam.iter().zip(&pts).fold([0.0; 3], |acc, (l, p)| axpy(*l, p, &acc))
    }

    /// Largest sampled difference quotient of `𝚑` over nearby pairs.
    pub fn lipschitz_estimate(&self, samples: usize, seed: u64) -> Result<f64> {
        if self.uniform.is_some() {
            return Ok(0.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.mesh.n();
        let mut best = 0.0f64;
        for _ in 0..samples {
            let c = rng.gen_range(0..self.mesh.num_cells());
            let x = self.random_point(c, &mut rng);
            let mut y = x;
            let step = 0.1 * self.mesh.diameter(n, c);
            for v in y.iter_mut().take(n) {
                *v += rng.gen_range(-step..step);
            }
            if self.geometry.gauge(&y) > 1.0 {
                continue;
            }
            let d = dist(&x, &y);
            if d > 0.0 {
                best = best.max((self.eval(&x)? - self.eval(&y)?).abs() / d);
            }
        }
        Ok(best)
    }

    /// `Lip(𝙷)` exactly: the largest gradient of the affine pieces.
    pub fn coarse_lipschitz(&self) -> f64 {
        let hv = self.mesh.vertex_sizes();
        let n = self.mesh.n();
        (0..self.mesh.num_cells())
            .map(|c| {
                let vs = self.mesh.cell_vertices(c);
                let ch = self.mesh.chart(c);
                // gradient of the affine interpolant: M^{-T} (h_i − h_0)
                let d: Vec3 = std::array::from_fn(|i| if i < n { hv[vs[i + 1]] - hv[vs[0]] } else { 0.0 });
                let g = ch.m_inv.transpose().apply(&d);
                crate::linalg::norm(&g)
            })
            .fold(0.0, f64::max)
    }

    /// `Id + ε y ⊗ ∇𝚑` written out for callers that already hold `∇𝚑`.
    pub fn flow_jacobian(n: usize, eps: f64, y: &Vec3, grad: &Vec3) -> Mat {
        let mut m = Mat::identity(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] += eps * y[i] * grad[j];
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::neighborhood_constant;
    use crate::mesh::{build_triangulation, generate};

    fn setup(mesh: Triangulation) -> MeshSizeField {
        let geo = Arc::new(DomainGeometry::named("unit_square", 0.2).unwrap());
        let eps_h = neighborhood_constant(&mesh, &geo).unwrap();
        let lip = 1.0;
        let rho = default_radius(mesh.h_min(), eps_h, lip);
        MeshSizeField::build(Arc::new(mesh), geo, rho, eps_h, lip).unwrap()
    }

    fn graded_square() -> Triangulation {
        // a 3×3 grid with one column squeezed
        let xs = [0.0, 0.3, 0.5, 1.0];
        let ys = [0.0, 0.4, 0.7, 1.0];
        let mut verts = Vec::new();
        for y in ys {
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

    #[test]
    fn uniform_mesh_is_constant() {
        let f = setup(generate("unit_square", 2).unwrap());
        let h = f.uniform().unwrap();
        assert!((h - 0.25 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(f.eval(&[0.3, 0.7, 0.0]).unwrap(), h);
        assert_eq!(f.gradient(&[0.3, 0.7, 0.0]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn radius_limit() {
        let mesh = generate("unit_square", 1).unwrap();
        let geo = Arc::new(DomainGeometry::named("unit_square", 0.2).unwrap());
        let err = MeshSizeField::build(Arc::new(mesh), geo, 1.0, 0.1, 1.0).unwrap_err();
        assert!(matches!(err, FeecError::RadiusTooLarge { .. }));
    }

    #[test]
    fn graded_field_bounds_and_gradient() {
        let f = setup(graded_square());
        assert!(f.uniform().is_none());
        let (lo, hi) = f.ratio_range(300, 1).unwrap();
        assert!(lo >= 1.0 / f.c_h() && hi <= f.c_h(), "{lo} {hi}");
        // central differences of the quadrature value against the kernel
        // gradient
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst = 0.0f64;
        for _ in 0..40 {
            let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), 0.0];
            let g = f.gradient(&x).unwrap();
            let step = 1e-6;
            for i in 0..2 {
                let mut xp = x;
                xp[i] += step;
                let mut xm = x;
                xm[i] -= step;
                let fd = (f.eval(&xp).unwrap() - f.eval(&xm).unwrap()) / (2.0 * step);
                worst = worst.max((fd - g[i]).abs() / f.coarse_lipschitz());
            }
        }
        // the kernel rule integrates across the kinks of 𝙷, which limits the
        // agreement to about 5e-5 of Lip(𝙷)
        assert!(worst < 1e-4, "{worst:e}");
        assert!(f.coarse_lipschitz() <= f.c_mesh());
        let lip = f.lipschitz_estimate(300, 2).unwrap();
        assert!(lip <= 2.0 * f.c_mesh() * (1.0 + 1e-6), "{lip}");
    }
}
