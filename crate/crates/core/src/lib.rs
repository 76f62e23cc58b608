//! Hybrid post recommender: survey-derived demographic weights, category and engagement
//! features, matrix-factorization scores, demographic cold start, and neural
//! (GMF / MLP / NeuMF) rankers with leave-one-out evaluation.

pub mod coldstart;
pub mod domain;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod matrix;
pub mod mf;
pub mod neumf;
pub mod survey;
pub mod synth;

pub use error::{Error, Result};
