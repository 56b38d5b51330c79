//! Constructive routing policies that score candidates with explicit
//! one-step consequence features.
//!
//! The crate covers the whole pipeline for TSP, CVRP and CVRPTW:
//!
//! * [`instances`]: problem data, Solomon/TSPLIB parsers and a procedural
//!   CVRPTW generator.
//! * [`mdp`]: the exact construction environment with feasibility masks and
//!   independent solution verification.
//! * [`consequences`]: per-step candidate feature tables, set-relative
//!   centering and the step summary.
//! * [`policy`]: the encoder/decoder scoring pipeline with reverse-mode
//!   gradients.
//! * [`training`], [`inference`], [`oracle`] and [`diagnostics`].

#![allow(clippy::needless_range_loop)]

pub mod autodiff;
pub mod consequences;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod instances;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod training;

pub use error::{Error, Result};
pub use instances::{DistanceRule, RoutingInstance, Task};
pub use mdp::{ConstructionState, RoutingEnv, Solution};
pub use policy::{PolicyConfig, PolicyParams};
