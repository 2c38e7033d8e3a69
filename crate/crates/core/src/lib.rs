//! Random conductance model on nested fractal graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`ifs`] defines nested fractals by their iterated function systems and
//!   builds the approximating graphs `G_n`.
//! * [`network`] is the exact linear-algebra layer: Laplacians, traces
//!   (Schur complements), effective resistances, green kernels and
//!   expected hitting times.
//! * [`renorm`] finds the invariant boundary conductances and the resistance
//!   scale factor, and builds the deterministic resistance metrics.
//! * [`environment`] samples heavy-tailed conductance fields and Poisson trap
//!   measures from reproducible seeded streams.
//! * [`walk`] simulates the variable- and constant-speed random walks and
//!   fits crossing-time scaling exponents.
//! * [`fin`] approximates the trap-measure time change on finite levels.
//! * [`homogenization`] measures how random resistance metrics concentrate
//!   on the deterministic one.

pub mod environment;
pub mod error;
pub mod fin;
pub mod homogenization;
pub mod ifs;
pub mod network;
pub mod renorm;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
pub use ifs::{
    build_graph, essential_fixed_points, sample_self_similar, verify_nesting, verify_symmetry, AffineMap, CellWord,
    FractalGraph, IfsSpec, NestingReport, SymmetryReport,
};
pub use network::{
    effective_resistance, energy, expected_hitting_time, green_kernel, pairwise_resistance, trace_to, BoundaryForm,
    CellRenormalizer, ConductanceField, FieldOrigin, HittingTime, ResistanceKernel,
};
pub use renorm::{deterministic_field, deterministic_resistance, find_fixed_point, renorm_map, RenormResult};
pub use environment::{
    nu_measure, sample_environment, sample_trap_measure, tail_estimate, CellLaw, ConductanceLaw,
    SeededStream, StreamPurpose, TailEstimate, TrapAtom, TrapMeasure,
};
pub use walk::{
    crossing_oracle, scaling_experiment, simulate_csrw, simulate_vsrw, speed_measure, CrossingSample, Record,
    ScalingConfig, ScalingReport, Statistic, StopReason, StopRule, WalkConfig, WalkMode, WalkResult, WalkRng,
};
pub use fin::{
    fin_stabilization_check, project_traps, simulate_time_changed, FinConfig, FinReport, TimeChangedWalkSetup,
};
pub use homogenization::{
    estimate_c, random_resistance, run_homogenization, CEstimate, CSource, HomogenizationConfig,
    HomogenizationReport,
};
