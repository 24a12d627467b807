//! Belief propagation over the equilibrium constraint graph: message
//! kernels, the sweep engine, Bethe thermodynamics, μ sweeps and
//! BP-guided decimation.

pub mod convolution;
pub mod decimate;
pub mod engine;
pub mod kernels;
pub mod sweep;
pub mod thermo;

pub use convolution::{build_convolution_tables, build_full_table, unit_message_from_table, ConvolutionTable};
pub use decimate::{decimate, DecimateOptions, DecimationReport};
pub use engine::{
    marginals, run_bp, run_bp_clamped, BpError, BpOptions, BpReport, Domain, DomainChoice,
    FactorGraph, Marginals, MessageSet, MirrorFields, UserClamp,
};
pub use sweep::{mu_sweep, transition_report, SweepOptions, SweepResult, TransitionReport};
pub use thermo::{bethe_thermodynamics, LandscapePoint};
