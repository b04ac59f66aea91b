//! Long-run risk-sensitive impulse control on a dyadic time grid.
//!
//! The crate computes the Bellman pair `(w, λ)` of the dyadic impulse control
//! problem with entropic (risk-sensitive) objective by span-contraction value
//! iteration over a one-dimensional state grid, extracts the induced
//! stationary impulse policy, and checks by independent simulation that
//! `λ/δ` matches the long-run entropic rate that policy achieves.
//!
//! Module map:
//!
//! - [`entropic`]: entropic utility, Esscher tilting, entropic Hölder bounds.
//! - [`processes`]: uncontrolled reference processes (diffusion, step, PDMP).
//! - [`norms`]: state grid, ω-norms, span semi-norms, weighted variation.
//! - [`kernel`]: frozen Monte Carlo transition kernel on the grid.
//! - [`bellman`]: Bellman operator, fixed-point solver, contraction diagnostics.
//! - [`control`]: policies, controlled simulation, long-run objective estimates.
//! - [`verify`]: empirical drift, minorisation, noise-moment and γ-sweep checks.

// `!(a < b)` guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod control;
pub mod entropic;
mod error;
pub mod functions;
pub mod kernel;
pub mod norms;
pub mod processes;
pub mod rng;
pub mod verify;

pub use bellman::{
    bellman_apply, contraction_estimate, esscher_tv_diagnostic, operator_t, solve_fixed_point,
    solve_fixed_point_with_anchor, solver_beta, Action, BellmanSolution, BellmanStep, ContractionEstimate,
    ImpulseProblem,
};
pub use control::{
    estimate_longrun_value, extract_policy, simulate_controlled, ControlledRun, DecisionRule,
    LongRunEstimate, RandomShiftPolicy, StationaryPolicy,
};
pub use entropic::{
    entropic_utility, entropic_utility_weighted, esscher_weights, holder_split, HolderSplit,
    RiskParams,
};
pub use error::{Error, Result};
pub use functions::{Reward, ShiftCost, Weight};
pub use kernel::{build_kernel, kernel_entropic_value, FrozenKernel};
pub use norms::{
    beta_omega_norm, beta_span_seminorm, centering_constant, omega_norm, weighted_tv_norm,
    GridFunction, StateGrid,
};
pub use processes::{
    diffusion_noise_mgf_bound, sample_segment, DiffusionModel, PathSegment, PdmpModel,
    ProcessModel, StepProcessModel,
};
pub use rng::{derive_stream, SimRng, StreamPurpose};
pub use verify::{
    holder_suite, lambda_gamma_sweep, span_growth, verify_drift, verify_minorisation,
    verify_noise_bound_example1, DriftEstimate, DriftReport, HolderReport, MinorisationEstimate,
    NoiseBoundCheck, SweepReport,
};
