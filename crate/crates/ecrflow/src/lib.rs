//! Simulation and first-order sensitivity analysis of vector fields with
//! event-selected discontinuities.
//!
//! The crate integrates trajectories of piecewise-smooth vector fields with
//! exact event detection, computes Bouligand derivatives of the flow through
//! saltation-matrix chains and jump-linear variational equations, and
//! certifies exponential stability of periodic orbits crossing multiple
//! discontinuity surfaces. Two phase-oscillator scenario families with
//! closed-form oracles are built in.

pub mod acceptance;
pub mod error;
pub mod flow;
pub mod model;
pub mod oscillators;
pub mod poincare;
pub mod variational;

mod linalg;
mod rk45;
mod roots;

pub use error::{Error, Result};
pub use flow::{
    budgeted_time_to_boundary, compose_local_flow, flow, flow_state, flow_to_boundary,
    smooth_flow, time_to_impact_region, BoundaryDirection, EventRecord, FlowResult,
    IntegratorConfig, Trajectory,
};
pub use linalg::{orthonormal_complement, spectral_norm};
pub use model::{Corner, EventFn, EventModel, TransversalityReport};
pub use poincare::{
    flowbox_chart, impact_map, perturb_model, perturbation_experiment, poincare_derivative,
    poincare_map, stability_test, time_to_impact, PeriodicOrbit, ReturnSpec, Section,
    StabilityReport, Verdict,
};
pub use variational::{
    b_derivative, enumerate_words, per_word_derivative, sampled_field, saltation_chain,
    single_surface_saltation, tangency_reduction_check, DerivativeOptions, SaltationChain, Word,
};
