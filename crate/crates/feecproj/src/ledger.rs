//! Measured geometric and reference constants, the closed formulas built
//! from them, and the admissible range of `ε`.

use crate::error::{FeecError, Result};
use crate::geometry::{neighborhood_constant, CollarConstants, DomainGeometry};
use crate::inverse::measure_inverse_constants;
use crate::quadrature::ball_volume;
use crate::spaces::FeComplex;
use serde::{Deserialize, Serialize};

/// Names of the four admissibility conditions, in the order they are listed.
pub const COLLAR_CONDITION: &str = "C_h ε < ε_h";
pub const INTERPOLATION_CONDITION: &str = "L_Ψ C_h ε < ε_h";
pub const ERROR_CONDITION: &str = "L_Ψ C_M C_h ε < ε_h";
pub const NEUMANN_CONDITION: &str = "C_{e,p} ε < 2";

/// Safety factor applied to the smallest bound.
pub const SAFETY: f64 = 0.5;

/// Constants measured on a mesh, its domain and the reference elements.
///
/// Per-degree entries (`c_interp`, `c_boundary`, `c_flat`) are indexed by
/// the form degree `k` of the complex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredConstants {
    pub n: usize,
    pub p: f64,
    pub c_mesh: f64,
    pub c_n: f64,
    pub eps_h: f64,
    /// `c_M = max ‖M_T‖ / h_T`.
    pub c_m: f64,
    /// `C_M = max ‖M_T^{-1}‖ h_T`.
    pub cap_m: f64,
    pub c_interp: Vec<f64>,
    pub c_boundary: Vec<f64>,
    pub c_flat: Vec<f64>,
    pub c_reflection: f64,
    pub c_extension: f64,
    pub c_extension_inf: f64,
    pub lip_reflection: f64,
    pub l_psi: f64,
    pub l_omega: f64,
    /// `L_h = (1 + Lip 𝒜) C_mesh L_Ω`.
    pub l_h: f64,
    /// `C_h = C_mesh²`, so that `𝚑 ≤ C_h h_T` on every cell.
    pub c_h: f64,
}

/// Sampling effort for the measured constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureEffort {
    pub collar_samples: usize,
    pub inverse_samples: usize,
    pub path_spacing: f64,
}

impl Default for MeasureEffort {
    fn default() -> Self {
        MeasureEffort {
            collar_samples: 400,
            inverse_samples: 60,
            path_spacing: 0.05,
        }
    }
}

impl MeasuredConstants {
    pub fn measure(
        complex: &FeComplex,
        geometry: &DomainGeometry,
        collar: &CollarConstants,
        p: f64,
        effort: &MeasureEffort,
        seed: u64,
    ) -> Result<Self> {
        let mesh = complex.spaces[0].mesh();
        let n = mesh.n();
        let c_mesh = mesh.shape_constant();
        let (c_m, cap_m) = mesh.chart_constants();
        let mut c_interp = Vec::new();
        let mut c_boundary = Vec::new();
        let mut c_flat = Vec::new();
        for (k, sp) in complex.spaces.iter().enumerate() {
            let ic = measure_inverse_constants(sp.spec, n, p, effort.inverse_samples, seed.wrapping_add(k as u64))?;
            c_interp.push(ic.c_interp);
            c_boundary.push(ic.c_boundary);
            c_flat.push(ic.c_flat);
        }
        let l_omega = geometry.inner_metric_constant(effort.path_spacing);
        let lip_reflection = collar.lip_reflection;
        Ok(MeasuredConstants {
            n,
            p,
            c_mesh,
            c_n: mesh.star_constant() as f64,
            eps_h: neighborhood_constant(mesh, geometry)?,
            c_m,
            cap_m,
            c_interp,
            c_boundary,
            c_flat,
            c_reflection: collar.c_reflection(n, p),
            c_extension: collar.c_extension(n, p),
            c_extension_inf: collar.c_extension(n, f64::INFINITY),
            lip_reflection,
            l_psi: collar.l_psi,
            l_omega,
            l_h: (1.0 + lip_reflection) * c_mesh * l_omega,
            c_h: c_mesh * c_mesh,
        })
    }

    fn n_over_p(&self) -> f64 {
        if self.p.is_infinite() {
            0.0
        } else {
            self.n as f64 / self.p
        }
    }

    /// `C_{Q,p} = (1+εL_h)^k vol(B₁) C_h^{n/p} c_M^k C_M^k C_I C_{E,p}`.
    pub fn c_q(&self, k: usize, eps: f64) -> f64 {
        let k32 = k as i32;
        (1.0 + eps * self.l_h).powi(k32)
            * ball_volume(self.n)
            * self.c_h.powf(self.n_over_p())
            * self.c_m.powi(k32)
            * self.cap_m.powi(k32)
            * self.c_interp[k]
            * self.c_extension
    }

    /// `C_{e,p} = c_M^{2k+1} C_M^{2k+2+n/p} C_I C_h (1 + c_M C_M L_h ε)^k
    /// (1 + C_∂) C_{E,∞} C_♭`.
    pub fn c_e(&self, k: usize, eps: f64) -> f64 {
        let k32 = k as i32;
        self.c_m.powi(2 * k32 + 1)
            * self.cap_m.powf(2.0 * k as f64 + 2.0 + self.n_over_p())
            * self.c_interp[k]
            * self.c_h
            * (1.0 + self.c_m * self.cap_m * self.l_h * eps).powi(k32)
            * (1.0 + self.c_boundary[k])
            * self.c_extension_inf
            * self.c_flat[k]
    }

    /// `C_{π,p} = 2 C_{Q,p} C_N^{1/p}`.
    pub fn c_pi(&self, k: usize, eps: f64) -> f64 {
        let inv_p = if self.p.is_infinite() { 0.0 } else { 1.0 / self.p };
        2.0 * self.c_q(k, eps) * self.c_n.powf(inv_p)
    }

    fn degrees(&self) -> std::ops::Range<usize> {
        0..self.c_interp.len()
    }

    /// Largest `ε` with `max_k C_{e,p}(ε) ε ≤ 2`, by bisection (the product
    /// is increasing in `ε`).
    fn neumann_bound(&self) -> f64 {
        let f = |e: f64| self.degrees().map(|k| self.c_e(k, e)).fold(0.0, f64::max) * e;
        let c0 = self.degrees().map(|k| self.c_e(k, 0.0)).fold(0.0, f64::max);
        // C_e grows with ε, so f(2 / C_e(0)) ≥ 2
        let mut hi = 2.0 / c0;
        let mut lo = 0.0;
        if f(hi) <= 2.0 {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 2.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// The upper bound on `ε` from each condition.
    pub fn epsilon_bounds(&self) -> Vec<EpsilonBound> {
        let b = |condition: &str, bound: f64| EpsilonBound {
            condition: condition.to_string(),
            bound,
        };
        vec![
            b(COLLAR_CONDITION, self.eps_h / self.c_h),
            b(INTERPOLATION_CONDITION, self.eps_h / (self.l_psi * self.c_h)),
            b(ERROR_CONDITION, self.eps_h / (self.l_psi * self.cap_m * self.c_h)),
            b(NEUMANN_CONDITION, self.neumann_bound()),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBound {
    pub condition: String,
    pub bound: f64,
}

/// The admissible `ε`: the smallest bound times [`SAFETY`], with the
/// condition that binds (the first one listed on ties).
pub fn admissible_epsilon(m: &MeasuredConstants) -> Result<(f64, String)> {
    let bounds = m.epsilon_bounds();
    let mut best: Option<&EpsilonBound> = None;
    for b in &bounds {
        if !(b.bound > 0.0 && b.bound.is_finite()) {
            return Err(FeecError::EmptyAdmissibleRange(format!("{} gives bound {}", b.condition, b.bound)));
        }
        if best.is_none_or(|x| b.bound < x.bound) {
            best = Some(b);
        }
    }
    let b = best.ok_or_else(|| FeecError::EmptyAdmissibleRange("no conditions".into()))?;
    Ok((SAFETY * b.bound, b.condition.clone()))
}

/// Reject an explicit `ε` that breaks a condition, naming it.
pub fn check_epsilon(m: &MeasuredConstants, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(FeecError::InvalidConfig(format!("epsilon must be positive, got {eps}")));
    }
    for b in m.epsilon_bounds() {
        if eps >= b.bound {
            return Err(FeecError::InadmissibleEpsilon(b.condition));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub k: usize,
    pub c_q: f64,
    pub c_e: f64,
    pub c_pi: f64,
}

/// Measured constants, the constants derived from them at the working `ε`,
/// and the admissibility record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantLedger {
    pub measured: MeasuredConstants,
    pub bounds: Vec<EpsilonBound>,
    pub eps_max: f64,
    pub binding: String,
    pub eps: f64,
    pub derived: Vec<DerivedConstants>,
}

impl ConstantLedger {
    /// Build the ledger at `eps`, or at `ε_max` when `eps` is `None`.
    pub fn new(measured: MeasuredConstants, eps: Option<f64>) -> Result<Self> {
        let (eps_max, binding) = admissible_epsilon(&measured)?;
        let eps = match eps {
            Some(e) => {
                check_epsilon(&measured, e)?;
                e
            }
            None => eps_max,
        };
        let derived = Self::derive(&measured, eps);
        Ok(ConstantLedger {
            bounds: measured.epsilon_bounds(),
            measured,
            eps_max,
            binding,
            eps,
            derived,
        })
    }

    fn derive(m: &MeasuredConstants, eps: f64) -> Vec<DerivedConstants> {
        m.degrees()
            .map(|k| DerivedConstants {
                k,
                c_q: m.c_q(k, eps),
                c_e: m.c_e(k, eps),
                c_pi: m.c_pi(k, eps),
            })
            .collect()
    }

    /// Whether every derived entry equals its formula re-evaluated from the
    /// measured inputs, bit for bit.
    pub fn recomputes(&self) -> bool {
        let again = ConstantLedger::new(self.measured.clone(), Some(self.eps));
        match again {
            Ok(l) => l.derived == self.derived && l.eps_max == self.eps_max && l.binding == self.binding,
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(eps_h: f64) -> MeasuredConstants {
        MeasuredConstants {
            n: 2,
            p: 2.0,
            c_mesh: 1.0,
            c_n: 1.0,
            eps_h,
            c_m: 1.0,
            cap_m: 1.0,
            c_interp: vec![1.0; 3],
            c_boundary: vec![0.0; 3],
            c_flat: vec![1.0; 3],
            c_reflection: 0.0,
            c_extension: 1.0,
            c_extension_inf: 1.0,
            lip_reflection: 0.0,
            l_psi: 1.0,
            l_omega: 1.0,
            l_h: 0.0,
            c_h: 1.0,
        }
    }

    #[test]
    fn unit_constants_bind_on_the_collar() {
        let (e, b) = admissible_epsilon(&ones(0.1)).unwrap();
        assert!((e - 0.05).abs() < 1e-15);
        assert_eq!(b, COLLAR_CONDITION);
    }

    #[test]
    fn huge_error_constant_binds_neumann() {
        let mut m = ones(0.1);
        m.c_interp = vec![1e6; 3];
        let (e, b) = admissible_epsilon(&m).unwrap();
        assert_eq!(b, NEUMANN_CONDITION);
        let ce = m.c_e(0, e);
        assert!((e - 1.0 / ce).abs() < 1e-12 * e);
    }

    #[test]
    fn enlarging_constants_never_enlarges_eps() {
        let base = ones(0.1);
        let (e0, _) = admissible_epsilon(&base).unwrap();
        let bumps: Vec<Box<dyn Fn(&mut MeasuredConstants)>> = vec![
            Box::new(|m| m.c_h *= 3.0),
            Box::new(|m| m.l_psi *= 2.0),
            Box::new(|m| m.cap_m *= 2.0),
            Box::new(|m| m.c_flat[1] *= 1e7),
            Box::new(|m| m.l_h += 5.0),
        ];
        for f in bumps {
            let mut m = base.clone();
            f(&mut m);
            assert!(admissible_epsilon(&m).unwrap().0 <= e0);
        }
    }

    #[test]
    fn explicit_eps_names_the_violated_condition() {
        let mut m = ones(0.1);
        m.l_psi = 2.0;
        m.cap_m = 2.0;
        // bounds: 0.1, 0.05, 0.025, then 2/128 from the error constant
        let err = check_epsilon(&m, 0.03).unwrap_err();
        assert_eq!(err, FeecError::InadmissibleEpsilon(ERROR_CONDITION.into()));
        assert_eq!(err.to_string(), "L_Ψ C_M C_h ε < ε_h violated");
        assert!(check_epsilon(&m, 0.01).is_ok());
    }

    #[test]
    fn ledger_recomputes() {
        let mut m = ones(0.1);
        m.l_h = 0.7;
        m.c_m = 1.3;
        let l = ConstantLedger::new(m, None).unwrap();
        assert!(l.recomputes());
        assert_eq!(l.eps, l.eps_max);
        let expect_q = (1.0 + l.eps * 0.7).powi(2) * std::f64::consts::PI * 1.3f64.powi(2);
        assert!((l.derived[2].c_q - expect_q).abs() < 1e-13);
    }
}
