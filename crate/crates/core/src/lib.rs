//! Privilege scores: the gap between an individual's predicted probability in
//! the observed world and in a warped world where the protected attribute has
//! no causal influence, together with a Shapley decomposition of that gap
//! over the attribute's mediated paths.

pub mod analytics;
pub mod dag;
pub mod dataset;
pub mod error;
pub mod models;
pub mod privilege;
pub mod psc;
pub mod report;
pub mod scm;
pub mod stats;
pub mod study;
pub mod warp;

pub use error::{Error, Result};
