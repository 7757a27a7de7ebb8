//! Numerical laboratory for the entropy formula of the linear heat equation on
//! model manifolds: grids and operators, heat flow with kernel oracles, the W
//! entropy and its dissipation, Harnack-type estimates, the log-Sobolev
//! functional, symmetrization, and volume growth.

pub mod cli;
pub mod entropy;
pub mod error;
pub mod geometry;
pub mod growth;
pub mod harnack;
pub mod heat;
pub mod logsob;
pub mod rearrange;

pub use error::{LabError, Result};
