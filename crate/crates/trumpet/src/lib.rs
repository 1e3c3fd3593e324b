//! Injective flow generative models.
//!
//! A generator `f = g ∘ h` pairs a bijective latent flow `h: R^d → R^d`
//! with an injective expanding stack `g: R^d → R^D`, so `f` has an exact
//! left inverse on its range, tractable per-layer log-det Jacobians, and a
//! likelihood on the model manifold. On top of that sit two-phase training
//! (reconstruction then maximum likelihood), stochastic log-det estimation,
//! projected-gradient MAP solvers for compressive measurements, and
//! latent-space variational posterior sampling.

pub mod data;
pub mod error;
pub mod layers;
pub mod logdet;
pub mod model;
pub mod train;
pub mod substrate;

pub use error::{Error, Result};
