//! Capacitated service-provision games: instance model, exhaustive oracle,
//! random ensembles, selfish dynamics, belief-propagation analysis of the
//! Nash-equilibrium landscape, Max-Sum extremal equilibria, and the
//! mirror-message quenched average for stochastic participation.

pub mod bp;
pub mod dynamics;
pub mod ensemble;
pub mod game;
pub mod io;
pub mod math;
pub mod maxsum;
pub mod mirror;
pub mod oracle;
pub mod semiring;
pub mod testkit;

pub use game::{
    Assignment, BestResponse, Choice, Edge, EdgeId, EdgeState, EdgeStateConfig, GameError,
    GameInstance, ObservableReport, UnitId, UserId, Violation,
};

pub use bp::{BpOptions, LandscapePoint, MessageSet};
pub use ensemble::{ActivityModel, EnsembleParams};
pub use oracle::EquilibriumCensus;
