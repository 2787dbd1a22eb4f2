//! Multi-element generalized polynomial chaos with adaptive refinement driven
//! by a t-model estimate of energy transfer to unresolved modes.
//!
//! The pieces, bottom up:
//! - [`basis`]: Legendre chaos, multi-index sets, quadrature, triple products.
//! - [`system`]: quadratic ODE systems, their Galerkin and t-model projections
//!   and the refinement indicators.
//! - [`mesh`] and [`solver`]: element splitting and the time loop.
//! - [`problems`], [`montecarlo`], [`verify`]: benchmarks and references.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod error;
pub mod mesh;
pub mod montecarlo;
pub mod problems;
pub mod solver;
pub mod system;
pub mod verify;

pub use basis::{MultiIndex, MultiIndexSet, QuadratureRule, TripleProductTensor};
pub use error::{Error, Result};
pub use mesh::{Element, Mesh, MeshSnapshot};
pub use montecarlo::{mc_stats, McConfig, McStats};
pub use problems::{exact_linear_stats, KoVariant, ProblemSpec};
pub use solver::{run_adaptive, run_global_gpc, IndicatorMode, MemoryTime, RefinementConfig, Trajectory};
pub use system::{GalerkinBasis, GalerkinState, QuadraticSystem, RateKind, Var};
pub use verify::CheckReport;
