//! Everything one run needs: mesh, domain, mesh-size field, FE complex and
//! the constant ledger.

use crate::error::{FeecError, Result};
use crate::geometry::{CollarConstants, DomainGeometry};
use crate::ledger::{ConstantLedger, MeasureEffort, MeasuredConstants};
use crate::mesh::{generate, Triangulation};
use crate::meshsize::{default_radius, MeshSizeField};
use crate::mollify::Mollifier;
use crate::spaces::{ComplexSpec, FeComplex};
use std::sync::Arc;

pub const DEFAULT_COLLAR_WIDTH: f64 = 0.2;

/// Inputs of [`Problem::build`].
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub domain: String,
    pub complex: String,
    pub p: f64,
    /// `None` picks the admissible `ε`.
    pub eps: Option<f64>,
    pub seed: u64,
    pub collar_width: f64,
    pub effort: MeasureEffort,
}

impl ProblemSpec {
    pub fn new(domain: &str, complex: &str) -> Self {
        ProblemSpec {
            domain: domain.to_string(),
            complex: complex.to_string(),
            p: 2.0,
            eps: None,
            seed: 7,
            collar_width: DEFAULT_COLLAR_WIDTH,
            effort: MeasureEffort::default(),
        }
    }
}

pub struct Problem {
    pub spec: ProblemSpec,
    pub mesh: Arc<Triangulation>,
    pub geometry: Arc<DomainGeometry>,
    pub collar: CollarConstants,
    pub field: Arc<MeshSizeField>,
    pub complex: FeComplex,
    pub ledger: ConstantLedger,
}

impl Problem {
    /// Set up on a generated mesh.
    pub fn generated(spec: &ProblemSpec, level: usize) -> Result<Problem> {
        Problem::build(spec, generate(&spec.domain, level)?)
    }

    pub fn build(spec: &ProblemSpec, mesh: Triangulation) -> Result<Problem> {
        if !(spec.p >= 1.0) {
            return Err(FeecError::InvalidConfig(format!("p must be at least 1, got {}", spec.p)));
        }
        let geometry = Arc::new(DomainGeometry::named(&spec.domain, spec.collar_width)?);
        geometry.check_mesh(&mesh)?;
        let mesh = Arc::new(mesh);
        let cspec = ComplexSpec::parse(&spec.complex, mesh.n())?;
        let complex = FeComplex::build(mesh.clone(), &cspec)?;
        let collar = geometry.collar_constants(spec.effort.collar_samples, spec.seed);
        let measured = MeasuredConstants::measure(&complex, &geometry, &collar, spec.p, &spec.effort, spec.seed)?;
        let rho = default_radius(mesh.h_min(), measured.eps_h, collar.lip_reflection);
        let field = MeshSizeField::build(mesh.clone(), geometry.clone(), rho, measured.eps_h, collar.lip_reflection)?;
        let ledger = ConstantLedger::new(measured, spec.eps)?;
        Ok(Problem {
            spec: spec.clone(),
            mesh,
            geometry,
            collar,
            field: Arc::new(field),
            complex,
            ledger,
        })
    }

    pub fn n(&self) -> usize {
        self.mesh.n()
    }

    pub fn eps(&self) -> f64 {
        self.ledger.eps
    }

    /// The mollifier at `eps` with ball rule degree `2r + 6`, `r` the
    /// largest polynomial degree in the complex.
    pub fn mollifier(&self, eps: f64) -> Result<Mollifier> {
        Mollifier::new(self.field.clone(), eps, self.default_degree())
    }

    pub fn default_degree(&self) -> usize {
        let r = self.complex.spaces.iter().map(|s| s.spec.r).max().unwrap_or(1);
        (2 * r + 6).min(20)
    }
}
