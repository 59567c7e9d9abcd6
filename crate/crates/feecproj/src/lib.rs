//! Smoothed projections onto finite element differential forms.
//!
//! The crate builds simplicial meshes of a few model domains, the `P_r Λ^k`
//! and `P_r^- Λ^k` finite element complexes on them, a boundary collar with
//! its reflection, and a mollifier whose radius follows the local mesh
//! size. Composing these gives the smoothed interpolant `Q_ε = I R E`; its
//! inverse on the finite element space turns it into a bounded projection
//! `π_ε = J Q_ε` that commutes with the exterior derivative. The
//! [`verify`] suites and [`study`] tables measure those properties, and
//! [`cli`] exposes them as the `feecproj` command.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod alternator;
pub mod chains;
pub mod config;
pub mod cli;
pub mod clip;
pub mod error;
pub mod exact;
pub mod extension;
pub mod forms;
pub mod geometry;
pub mod inverse;
pub mod ledger;
pub mod linalg;
pub mod mesh;
pub mod meshsize;
pub mod mollify;
pub mod poly;
pub mod problem;
pub mod projection;
pub mod quadrature;
pub mod report;
pub mod spaces;
pub mod study;
pub mod verify;

pub use error::{FeecError, Result};
