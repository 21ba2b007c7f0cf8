//! Certification and simulation of sampled-data control loops around
//! infinite-dimensional plants given by spectral data, with zoomed uniform
//! quantizers and bounded packet loss.
//!
//! The usual pipeline:
//!
//! 1. describe the plant as a [`SpectralSystem`] (or take the built-in
//!    [`heat::heat_system`]);
//! 2. pair it with a sampler in a [`Discretization`], which sums the
//!    feedthrough series once;
//! 3. [`certify`] a controller and strategy to get the transient constants
//!    and all operator norms, converged in the truncation order;
//! 4. turn those into [`RateConstants`] for given quantizer resolutions and
//!    read off the admissible loss fraction with [`nu_bound`];
//! 5. [`simulate`] against a [`LossSchedule`] and [`check_envelope`].

// Comparisons are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_loop;
pub mod config;
pub mod error;
pub mod heat;
pub mod loss;
pub mod norms;
pub mod quantizer;
pub mod spectral;
pub mod sysfile;

pub use closed_loop::{
    assemble, check_envelope, simulate, step, write_intersample_csv, write_trace_csv,
    ClosedLoopOperators, Controller, EnvelopeReport, Quantizers, SimulationSpec, SimulationTrace,
    Strategy,
};
pub use error::{Error, Result};
pub use loss::{bernoulli_clipped, greedy_worst, periodic, LossSchedule};
pub use norms::{
    certify, nu_bound, nu_map, op_norm, power_sup, rate_constants, spectral_radius, Certification,
    CertifyOptions, Converged, NormBundle, NuBound, NuMapCell, RateConstants, StabilityCertificate,
};
pub use quantizer::{UniformQuantizer, ZoomState};
pub use spectral::{
    discretize, feedthrough, intersample_state, truncate, varpi, Discretization,
    DiscretizationConfig, DiscretizedPlant, GrowthExponents, Mode, SamplerWeight, SpectralSystem,
    TruncatedPlant,
};
