//! Gravitational N-body dynamics in relative coordinates.
//!
//! The classical equations of motion integrate absolute positions, which
//! makes every trajectory depend on an arbitrary choice of origin. This
//! crate propagates difference coordinates instead: either the N-1
//! differences against a pivot body or all pairwise differences. Both
//! systems are invariant under any time-dependent rigid translation of the
//! frame, and both close without ever reconstructing absolute positions.
//!
//! Alongside the formulations themselves the crate carries their
//! diagnostics: a constant-of-motion identity that ties the mass-weighted
//! pair accelerations to the potential, the lower bound it implies on how
//! much acceleration the pairs must carry at every instant, a consistency
//! check for the tempting but generally inconsistent shortcut of pinning
//! one body at the origin, and conic-section reference fits for motion
//! that should be effectively two-body.
//!
//! Modules:
//! - [`model`]: states, difference coordinates, scenarios, validation.
//! - [`dynamics`]: right-hand sides of every formulation.
//! - [`invariants`]: identity, bound, and origin-pinning checks.
//! - [`integrate`]: RK4/RK45 propagation with a hard collision guard.
//! - [`kepler`]: conic fitting against candidate gravitational parameters.

pub mod dynamics;
pub mod integrate;
pub mod invariants;
pub mod kepler;
pub mod model;

pub use dynamics::{
    bcos3_naive_rhs, body_frame_residual, nbody_accelerations, reduced_bcos_rhs, rs1_rhs, rs2_rhs,
    Bcos3Rhs, BodyFrameCheck, DynamicsError, PairAccelerations, Singularity,
};
pub use integrate::{
    double_integral_solution, propagate, rk45_integrate, rk4_step, IntegrateError,
    IntegratorSettings, Method, Sample, StateKey, TerminationReason, Trajectory,
};
pub use invariants::{
    bcos3_consistency_check, motion_identity, restlessness_check, t_sum_check,
    translation_invariance_residual, two_body_bcos_contradiction, Bcos3Consistency, BcosVerdict,
    InvariantError, InvariantReport, MotionIdentity, RestlessnessReport, TSumCheck,
};
pub use kepler::{
    antipodal_pair_mu, conic_radius, fit_conic, pivot_only_mu, two_body_mu, ConicFit, ConicParams,
    KeplerError, OrbitSample,
};
pub use model::{
    all_pairs, center_of_mass, pair_index, to_relative, validate_initial_conditions, Body,
    Formulation, MethodKind, ModelError, NBodyState, PairDiff, PairKey, RelativeMode,
    RelativeState, Scenario, StepperSpec, ValidationReport, Vec3,
};
