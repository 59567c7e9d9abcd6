//! Empirical studies: how `Q_ε` approaches the identity as `ε → 0`, and
//! how `‖π‖` behaves under uniform refinement.

use crate::config::Thresholds;
use crate::error::{FeecError, Result};
use crate::forms::PiecewiseForm;
use crate::mesh::Triangulation;
use crate::problem::{Problem, ProblemSpec};
use crate::projection::{broken_gram, broken_space, cell_gram, gram_matrix, induced_norm, Projection, Smoother};
use crate::spaces::{constant_form, FeSpace};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Acceptance bands of the studies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyBands {
    /// Accepted range of the fitted exponent of `‖ω − Q_ε ω‖` in `ε`.
    pub slope: (f64, f64),
    /// Largest accepted growth of `‖π‖` from one level to the next.
    pub level_ratio: f64,
    /// Slack on `2^{n/2}` for the growth of `‖π‖` when `ε` halves.
    pub halving_factor: f64,
}

impl Default for StudyBands {
    fn default() -> Self {
        StudyBands::from_thresholds(&Thresholds::default())
    }
}

impl StudyBands {
    pub fn from_thresholds(t: &Thresholds) -> Self {
        StudyBands {
            slope: (t.slope_low, t.slope_high),
            level_ratio: t.level_ratio,
            halving_factor: t.halving_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    /// `ε` or the refinement level.
    pub x: f64,
    pub value: f64,
    pub ceiling: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonStudy {
    pub k: usize,
    pub rows: Vec<StudyRow>,
    pub slope: f64,
    pub slope_pass: bool,
    /// Largest error ratio for a constant form, over all `ε`. For `k > 0`
    /// only cells with no vertex on the boundary count: the reflection
    /// flips components of a constant form, so near the boundary its
    /// extension is no longer constant.
    pub constant_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessStudy {
    pub k: usize,
    pub eps: f64,
    pub rows: Vec<StudyRow>,
    /// Largest `‖π‖_{l+1} / ‖π‖_l`.
    pub max_ratio: f64,
    pub ratio_pass: bool,
    /// `‖π‖` at `ε` and `ε/2` on the first level, and the bound
    /// `2^{n/2}` times the halving factor for their ratio.
    pub halving: (f64, f64, f64),
    pub halving_pass: bool,
}

/// `ε_max · 10^{−j/4}` for `j = 0..count`.
pub fn default_epsilons(eps_max: f64, count: usize) -> Vec<f64> {
    (0..count).map(|j| eps_max * 10f64.powf(-(j as f64) / 4.0)).collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `max_T ‖e‖_{L²(T)} / ‖ω‖_{L²(𝒯(T))}` for coefficient vectors `e`, `ω`.
fn local_ratio(space: &FeSpace, grams: &[DMatrix<f64>], cells: &[usize], omega: &DVector<f64>, err: &DVector<f64>) -> f64 {
    let mesh = space.mesh();
    let n = mesh.n();
    let local = |v: &DVector<f64>, c: usize| {
        let idx = space.local_dofs(c);
        let x = DVector::from_iterator(idx.len(), idx.iter().map(|&g| v[g]));
        (x.transpose() * &grams[c] * &x)[(0, 0)].max(0.0)
    };
    let mut worst = 0.0f64;
    for &c in cells {
        let patch: f64 = mesh.star_cells(n, c).iter().map(|&t| local(omega, t)).sum();
        if patch > 0.0 {
            worst = worst.max((local(err, c) / patch).sqrt());
        }
    }
    worst
}

/// Cells with no vertex on the boundary.
pub fn interior_cells(mesh: &Triangulation) -> Vec<usize> {
    let n = mesh.n();
    let mut on_boundary = vec![false; mesh.num_vertices()];
    for &f in mesh.boundary_facets() {
        for &v in &mesh.simplex(n - 1, f).vertices {
            on_boundary[v] = true;
        }
    }
    (0..mesh.num_cells())
        .filter(|&c| mesh.cell_vertices(c).iter().all(|&v| !on_boundary[v]))
        .collect()
}

/// Error of `Q_ε` on degree `k` at each `ε`, over the FE basis and
/// `random` random FE functions.
pub fn interpolation_error_study(
    pb: &Problem,
    k: usize,
    epsilons: &[f64],
    random: usize,
    seed: u64,
    bands: &StudyBands,
) -> Result<EpsilonStudy> {
    if epsilons.len() < 2 {
        return Err(FeecError::InvalidConfig("the study needs at least two values of epsilon".into()));
    }
    let space = pb
        .complex
        .spaces
        .get(k)
        .ok_or_else(|| FeecError::InvalidConfig(format!("no space of degree {k}")))?;
    let m = &pb.ledger.measured;
    for &e in epsilons {
        crate::ledger::check_epsilon(m, e)?;
    }
    let dim = space.dim();
    let grams: Vec<DMatrix<f64>> = (0..pb.mesh.num_cells()).map(|c| cell_gram(space, c)).collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<DVector<f64>> = (0..dim)
        .map(|j| {
            let mut v = DVector::zeros(dim);
            v[j] = 1.0;
            v
        })
        .collect();
    for _ in 0..random {
        samples.push(DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)));
    }
    let comps: Vec<f64> = (0..space.ncomp()).map(|i| 1.0 + i as f64).collect();
    let constant = DVector::from_vec(
        space.interpolate(&PiecewiseForm::uniform(&constant_form(pb.n(), k, &comps), pb.mesh.num_cells())),
    );
    let all: Vec<usize> = (0..pb.mesh.num_cells()).collect();
    let interior = if k == 0 { all.clone() } else { interior_cells(&pb.mesh) };
    let mut rows = Vec::new();
    let mut constant_ratio = 0.0f64;
    for &eps in epsilons {
        let moll = pb.mollifier(eps)?;
        let q = Smoother::new(&moll, Smoother::default_degree(space)).assemble(space, None)?.q;
        let mut value = 0.0f64;
        for w in &samples {
            value = value.max(local_ratio(space, &grams, &all, w, &(w - &q * w)));
        }
        constant_ratio = constant_ratio.max(local_ratio(space, &grams, &interior, &constant, &(&constant - &q * &constant)));
        let ceiling = m.c_e(k, eps) * eps;
        rows.push(StudyRow {
            x: eps,
            value,
            ceiling,
            pass: value <= ceiling,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let slope = loglog_slope(&xs, &ys);
    Ok(EpsilonStudy {
        k,
        slope_pass: slope >= bands.slope.0 && slope <= bands.slope.1,
        rows,
        slope,
        constant_ratio,
    })
}

/// `‖π_k‖` from the broken `L²` space into the FE space, in Gram norms.
pub fn projection_norm(pb: &Problem, k: usize, eps: f64) -> Result<f64> {
    let space = &pb.complex.spaces[k];
    let broken = broken_space(space)?;
    let moll = pb.mollifier(eps)?;
    let mats = Smoother::new(&moll, Smoother::default_degree(space)).assemble(space, Some(&broken))?;
    let gram = gram_matrix(space)?;
    let proj = Projection::build(&mats, &gram)?;
    let pi = proj.pi_broken.as_ref().expect("broken columns were assembled");
    induced_norm(pi, &gram, &broken_gram(&broken)?)
}

/// `‖π_k‖` at a common `ε` on each level. Without an explicit `ε` the
/// smallest admissible value over the levels is used.
pub fn boundedness_study(spec: &ProblemSpec, levels: &[usize], k: usize, bands: &StudyBands) -> Result<BoundednessStudy> {
    if levels.is_empty() {
        return Err(FeecError::InvalidConfig("no refinement levels".into()));
    }
    let mut auto = spec.clone();
    auto.eps = None;
    let problems: Vec<Problem> = levels.iter().map(|&l| Problem::generated(&auto, l)).collect::<Result<_>>()?;
    let eps = match spec.eps {
        Some(e) => e,
        None => problems.iter().map(|p| p.ledger.eps_max).fold(f64::INFINITY, f64::min),
    };
    let n = problems[0].n();
    let mut rows = Vec::new();
    for (pb, &level) in problems.iter().zip(levels) {
        crate::ledger::check_epsilon(&pb.ledger.measured, eps)?;
        if k >= pb.complex.spaces.len() {
            return Err(FeecError::InvalidConfig(format!("no space of degree {k}")));
        }
        let value = projection_norm(pb, k, eps)?;
        let ceiling = pb.ledger.measured.c_pi(k, eps) * eps.powf(-(n as f64) / pb.spec.p);
        rows.push(StudyRow {
            x: level as f64,
            value,
            ceiling,
            pass: value <= ceiling,
        });
    }
    let max_ratio = rows.windows(2).map(|w| w[1].value / w[0].value).fold(0.0, f64::max);
    let at_half = projection_norm(&problems[0], k, 0.5 * eps)?;
    let bound = 2f64.powf(n as f64 / 2.0) * bands.halving_factor;
    let halving = (rows[0].value, at_half, bound);
    Ok(BoundednessStudy {
        k,
        eps,
        ratio_pass: max_ratio <= bands.level_ratio,
        max_ratio,
        halving_pass: at_half <= bound * rows[0].value,
        halving,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let x = [1.0, 0.5, 0.25, 0.1];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn epsilons_span_a_decade() {
        let e = default_epsilons(2.0, 5);
        assert_eq!(e[0], 2.0);
        assert!((e[4] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn error_scales_linearly_on_a_coarse_square() {
        let pb = Problem::generated(&ProblemSpec::new("unit_square", "P1-minus"), 2).unwrap();
        assert!(!interior_cells(&pb.mesh).is_empty());
        let eps = default_epsilons(pb.ledger.eps_max, 5);
        let s = interpolation_error_study(&pb, 1, &eps, 2, 3, &StudyBands::default()).unwrap();
        assert!(s.slope_pass, "slope {}", s.slope);
        assert!(s.rows.iter().all(|r| r.pass));
        assert!(s.constant_ratio < 1e-8, "{}", s.constant_ratio);
    }
}
