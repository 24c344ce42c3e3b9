//! POD-Galerkin reduced-order models for boundary-control problems posed on
//! a two-dimensional bifurcation domain.
//!
//! The crate covers the full workflow:
//!
//! * [`geometry`] — parametrized bifurcation mesh template and the affine
//!   decomposition of its channel-stretch deformation;
//! * [`fem`] — Taylor-Hood (quadratic velocity, linear pressure) spaces,
//!   quadrature-based form assembly, boundary data, and norms;
//! * [`ocp`] — full-order optimality-system solvers: a monolithic space-time
//!   system for the time-dependent viscous problem and a Newton iteration for
//!   the steady convective problem, both with boundary control;
//! * [`pod`] — snapshot collection, proper orthogonal decomposition per
//!   variable, supremizer enrichment, and aggregation into one reduced basis;
//! * [`rom`] — offline projection onto the reduced basis and fast online
//!   solves with exact affine parameter dependence;
//! * [`bench`] — error and speedup sweeps comparing reduced and full models;
//! * [`config`], [`io`], [`pipeline`] — run configuration, artifact
//!   persistence, and the offline orchestration used by the CLI.

pub mod bench;
pub mod config;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod instrument;
pub mod io;
pub mod ocp;
pub mod pipeline;
pub mod pod;
pub mod quadrature;
pub mod rom;
pub mod sparse;

pub use error::{Error, Result};
