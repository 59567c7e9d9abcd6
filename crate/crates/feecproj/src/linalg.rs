//! Fixed-capacity dense matrices of size at most 3×3 and covector pullbacks.

use crate::alternator::{alternators, indices};

pub type Vec3 = [f64; 3];

/// A `rows × cols` matrix with `rows, cols ≤ 3`, zero padded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub a: [[f64; 3]; 3],
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            a: [[0.0; 3]; 3],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.a[i][i] = 1.0;
        }
        m
    }

    /// Matrix whose columns are the given vectors (first `rows` entries used).
    pub fn from_cols(rows: usize, cols: &[Vec3]) -> Self {
        let mut m = Mat::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            for i in 0..rows {
                m.a[i][j] = c[i];
            }
        }
        m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        debug_assert_eq!(self.cols, o.rows);
        let mut m = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for j in 0..o.cols {
                let mut s = 0.0;
                for l in 0..self.cols {
                    s += self.a[i][l] * o.a[l][j];
                }
                m.a[i][j] = s;
            }
        }
        m
    }

    pub fn apply(&self, v: &[f64]) -> Vec3 {
        let mut out = [0.0; 3];
        for i in 0..self.rows {
            let mut s = 0.0;
            for j in 0..self.cols {
                s += self.a[i][j] * v[j];
            }
            out[i] = s;
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut m = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.a[j][i] = self.a[i][j];
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Mat {
        let mut m = *self;
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.a[i][j] *= s;
            }
        }
        m
    }

    pub fn add(&self, o: &Mat) -> Mat {
        let mut m = *self;
        for i in 0..self.rows {
            for j in 0..self.cols {
                m.a[i][j] += o.a[i][j];
            }
        }
        m
    }

    pub fn det(&self) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        let a = &self.a;
        match self.rows {
            0 => 1.0,
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    /// Inverse of a square matrix, `None` when singular.
    pub fn inverse(&self) -> Option<Mat> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let n = self.rows;
        let a = &self.a;
        let mut m = Mat::zeros(n, n);
        match n {
            0 => {}
            1 => m.a[0][0] = 1.0 / a[0][0],
            2 => {
                m.a[0][0] = a[1][1] / d;
                m.a[0][1] = -a[0][1] / d;
                m.a[1][0] = -a[1][0] / d;
                m.a[1][1] = a[0][0] / d;
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                        let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                        m.a[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d;
                    }
                }
            }
        }
        Some(m)
    }

    /// Determinant of the square submatrix picked by row and column masks.
    pub fn minor(&self, rows: u8, cols: u8) -> f64 {
        let r = indices(rows);
        let c = indices(cols);
        debug_assert_eq!(r.len(), c.len());
        let mut m = Mat::zeros(r.len(), r.len());
        for (i, &ri) in r.iter().enumerate() {
            for (j, &cj) in c.iter().enumerate() {
                m.a[i][j] = self.a[ri][cj];
            }
        }
        m.det()
    }

    /// Largest singular value.
    pub fn spectral_norm(&self) -> f64 {
        let ata = self.transpose().mul(self);
        let n = ata.rows;
        if n == 0 {
            return 0.0;
        }
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| ata.a[i][j]);
        let eig = nalgebra::SymmetricEigen::new(m);
        eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max).max(0.0).sqrt()
    }

    /// Largest Euclidean column length.
    pub fn max_column_norm(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self.a[i][j].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// k-th compound: entry `(τ, σ)` is the minor on rows `τ`, columns `σ`,
    /// with both index sets in lexicographic order.
    pub fn compound(&self, k: usize) -> Vec<Vec<f64>> {
        let rs = alternators(k, self.rows);
        let cs = alternators(k, self.cols);
        rs.iter()
            .map(|&t| cs.iter().map(|&s| self.minor(t, s)).collect())
            .collect()
    }
}

/// Derivative of the k-th compound of `a` in the direction `da`: each minor
/// is differentiated column by column.
pub fn compound_derivative(a: &Mat, da: &Mat, k: usize) -> Vec<Vec<f64>> {
    let rs = alternators(k, a.rows);
    let cs = alternators(k, a.cols);
    rs.iter()
        .map(|&t| {
            cs.iter()
                .map(|&s| {
                    let r = indices(t);
                    let c = indices(s);
                    let mut acc = 0.0;
                    for replaced in 0..c.len() {
                        let mut m = Mat::zeros(r.len(), r.len());
                        for (i, &ri) in r.iter().enumerate() {
                            for (j, &cj) in c.iter().enumerate() {
                                m.a[i][j] = if j == replaced { da.a[ri][cj] } else { a.a[ri][cj] };
                            }
                        }
                        acc += m.det();
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Pull a k-covector on `R^rows` back along the linear map `a : R^cols → R^rows`.
///
/// Components are in lexicographic alternator order on both sides.
pub fn pullback_covector(a: &Mat, k: usize, omega: &[f64]) -> Vec<f64> {
    let rs = alternators(k, a.rows);
    let cs = alternators(k, a.cols);
    cs.iter()
        .map(|&s| {
            rs.iter()
                .zip(omega)
                .map(|(&t, w)| if *w == 0.0 { 0.0 } else { w * a.minor(t, s) })
                .sum()
        })
        .collect()
}

/// Pullback through a precomputed compound matrix (`compound[τ][σ]`).
pub fn pullback_with_compound(compound: &[Vec<f64>], omega: &[f64], out: &mut [f64]) {
    for (s, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, w) in omega.iter().enumerate() {
            acc += w * compound[t][s];
        }
        *o = acc;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn axpy(s: f64, a: &Vec3, b: &Vec3) -> Vec3 {
    [s * a[0] + b[0], s * a[1] + b[1], s * a[2] + b[2]]
}

pub fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm(&sub(a, b))
}

pub fn to_vec3(x: &[f64]) -> Vec3 {
    let mut v = [0.0; 3];
    v[..x.len().min(3)].copy_from_slice(&x[..x.len().min(3)]);
    v
}

/// Volume of the k-parallelotope spanned by the columns, `sqrt(det(JᵀJ))`.
pub fn gram_volume(j: &Mat) -> f64 {
    j.transpose().mul(j).det().max(0.0).sqrt()
}

/// Euclidean distance between the convex hulls of two small point sets.
///
/// The minimum-norm point of the Minkowski difference lies in the relative
/// interior of a face spanned by at most `n + 1` difference points, so the
/// affine-hull minimisers of all such subsets with non-negative weights
/// contain the answer.
pub fn hull_distance(a: &[Vec3], b: &[Vec3], n: usize) -> f64 {
    let pts: Vec<Vec3> = a.iter().flat_map(|p| b.iter().map(move |q| sub(p, q))).collect();
    min_norm_in_hull(&pts, n)
}

/// Norm of the minimum-norm point of `conv(pts)`.
pub fn min_norm_in_hull(pts: &[Vec3], n: usize) -> f64 {
    let mut best = pts.iter().map(|p| norm(p)).fold(f64::INFINITY, f64::min);
    let np = pts.len();
    let mut subset = Vec::with_capacity(n + 1);
    fn rec(
        pts: &[Vec3],
        start: usize,
        max: usize,
        subset: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if subset.len() >= 2 {
            if let Some(v) = affine_min_norm(pts, subset) {
                *best = best.min(v);
            }
        }
        if subset.len() == max {
            return;
        }
        for i in start..pts.len() {
            subset.push(i);
            rec(pts, i + 1, max, subset, best);
            subset.pop();
        }
    }
    if np > 1 {
        rec(pts, 0, (n + 1).min(np), &mut subset, &mut best);
    }
    best
}

/// Minimum norm over the affine hull of the chosen points if the minimiser
/// has non-negative barycentric weights.
fn affine_min_norm(pts: &[Vec3], idx: &[usize]) -> Option<f64> {
    let s = idx.len();
    let p0 = pts[idx[0]];
    let e: Vec<Vec3> = idx[1..].iter().map(|&i| sub(&pts[i], &p0)).collect();
    // normal equations for min |p0 + E c|
    let m = s - 1;
    let mut g = nalgebra::DMatrix::<f64>::zeros(m, m);
    let mut rhs = nalgebra::DVector::<f64>::zeros(m);
    for i in 0..m {
        for j in 0..m {
            g[(i, j)] = dot(&e[i], &e[j]);
        }
        rhs[i] = -dot(&e[i], &p0);
    }
    let scale = (0..m).map(|i| g[(i, i)]).fold(0.0, f64::max);
    let lu = g.clone().lu();
    if scale == 0.0 || lu.determinant().abs() <= 1e-12 * scale.powi(m as i32) {
        return None;
    }
    let c = lu.solve(&rhs)?;
    let tol = 1e-12;
    let w0 = 1.0 - c.iter().sum::<f64>();
    if w0 < -tol || c.iter().any(|&v| v < -tol) {
        return None;
    }
    let mut q = p0;
    for (i, ei) in e.iter().enumerate() {
        q = axpy(c[i], ei, &q);
    }
    Some(norm(&q))
}

/// Distance from a point to a simplex given by its vertices.
pub fn point_simplex_distance(x: &Vec3, s: &[Vec3], n: usize) -> f64 {
    hull_distance(std::slice::from_ref(x), s, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let m = Mat {
            rows: 3,
            cols: 3,
            a: [[2.0, 1.0, 0.5], [0.0, 1.5, -1.0], [0.3, 0.2, 1.0]],
        };
        let p = m.mul(&m.inverse().unwrap());
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((p.a[i][j] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn top_compound_is_determinant() {
        let m = Mat {
            rows: 2,
            cols: 2,
            a: [[2.0, 1.0, 0.0], [3.0, 4.0, 0.0], [0.0; 3]],
        };
        assert_eq!(m.compound(2), vec![vec![5.0]]);
        assert_eq!(pullback_covector(&m, 2, &[1.0]), vec![5.0]);
    }

    #[test]
    fn hull_distances() {
        let tri = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!((point_simplex_distance(&[1.0, 1.0, 0.0], &tri, 2) - 0.5f64.sqrt()).abs() < 1e-14);
        assert_eq!(point_simplex_distance(&[0.2, 0.2, 0.0], &tri, 2), 0.0);
        assert!((point_simplex_distance(&[-1.0, -1.0, 0.0], &tri, 2) - 2f64.sqrt()).abs() < 1e-14);
        let seg = [[2.0, -1.0, 0.0], [2.0, 3.0, 0.0]];
        assert!((hull_distance(&tri, &seg, 2) - 1.0).abs() < 1e-14);
        // skew segments in space
        let a = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let b = [[0.5, -1.0, 2.0], [0.5, 1.0, 2.0]];
        assert!((hull_distance(&a, &b, 3) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_of_shear() {
        let m = Mat {
            rows: 2,
            cols: 2,
            a: [[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0; 3]],
        };
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((m.spectral_norm() - golden).abs() < 1e-12);
    }
}
