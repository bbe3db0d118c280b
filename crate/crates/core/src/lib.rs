//! Kinetic relaxation solvers for scalar conservation laws.
//!
//! The solvers evolve a small set of populations `f_q` on a velocity lattice
//! (two- and three-speed 1D sets, upwind sets in 1D/2D/3D, and a nine-speed
//! 2D set) through collide-and-stream steps. The macroscopic field recovered
//! as `U = Σ_q f_q` approximates the scalar conservation law
//! `∂t U + ∂x_d G^d(U) = S(x, U)`, with the source handled by well-balanced
//! population increments and a per-node implicit moment solve.
//!
//! The crate also carries a macroscopic multi-step reconstruction that
//! reproduces the kinetic trajectory from recorded macro fields alone
//! ([`macrofd`]), diagnostics (L2 norms, total variation, entropy-convexity
//! monitor, positivity scans) in [`diagnostics`], and closed-form or
//! fine-grid reference solutions for the benchmark problems in [`reference`].

// The stencil kernels walk several arrays by one index; explicit index
// loops read better there than zipped iterators.
#![allow(clippy::needless_range_loop)]

pub mod diagnostics;
pub mod flux;
pub mod grid;
pub mod lattice;
pub mod macrofd;
pub mod reference;
pub mod solver;

pub use diagnostics::{
    convergence_order, h_monitor, l2_error, positivity_scan, total_variation,
    total_variation_axes, total_variation_grid, total_variation_periodic, DiagError, DiagRow,
    HReport, NormReport, PositivityReport,
};
pub use flux::{
    split_by_sign, verify_split_consistency, Burgers, FluxEntry, FluxError, LinearAdvection,
    ObliqueAdvection, ScalarFlux, SplitCheck, UniformAdvection,
};
pub use grid::{AxisRule, BoundarySpec, FaceRule, Grid};
pub use lattice::{
    d2q9_partition, subcharacteristic_margin, Model, ModelError, ModelKind, Partition,
    SubcharReport,
};
pub use macrofd::{reconstruction_weights, MacroHistory, OracleError, TvBoundReport};
pub use reference::{
    burgers_moc, embid_reference, jump_location, leveque_yee_exact, leveque_yee_exact_nd,
    spekreijse_exact, EmbidReference, ReferenceError, EMBID_DEFAULT_RESOLUTION, MOC_TOL,
};
pub use solver::{
    apply_d2q9_boundaries, collide, moments, newton_moment_solve, stream, Problem, RelaxKind,
    RelaxationMode, Solver, SolverError, SourceTerm, SpeedPolicy, SubcharPolicy,
};
