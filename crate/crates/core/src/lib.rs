//! Ballistic coagulation of two species of clusters on a ring: an exact
//! event-driven simulator, mean-field kinetic equations and their generating
//! function solution, and ensemble statistics.

// `!(x > 0.0)` is how NaN gets rejected; `is_multiple_of` postdates the MSRV.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod ensemble;
pub mod error;
pub mod genfun;
pub mod kinetic;
pub mod majority_ss;
pub mod ring_sim;
pub mod series;
pub mod stats;
pub mod types;

pub use ensemble::{
    collapse_n_inf, particle_size_distribution, run_ensemble, summarize, timescale_fit,
    z_fluctuations, EnsembleConfig, EnsembleSummary, SizeDistribution,
};
pub use error::{Error, Result};
pub use genfun::{
    exact_asymmetric, exact_symmetric, pole_location, selfsim_profile, winding_check,
    winding_number,
};
pub use kinetic::{
    conserved_diagnostics, integrate, integrate_at, rhs_majority, rhs_random, Diagnostics,
    KineticState, SolverConfig,
};
pub use majority_ss::{
    analytic_symmetric, bromwich_invert, integrate_ss, rhs_ss, shoot, BromwichConfig, ProfileGrid,
    SSState,
};
pub use ring_sim::{
    init_realization, run_realization, run_realization_with, Cluster, InitMode, MeetingEvent,
    RealizationResult, RingSimulator, RingState, Sample, SimConfig,
};
pub use series::PowerSeries;
pub use stats::FitResult;
pub use types::{gap_index, moments, ClusterSpectrum, KernelKind, Moments, SeedSpec};
