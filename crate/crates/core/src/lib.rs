//! Finite-element simulation of scaffold-mediated bone regeneration and
//! adjoint-based optimization of the scaffold density distribution.
//!
//! The state couples linear elasticity, diffusion of two bio-active molecule
//! species and per-element growth laws for osteoblasts and bone. See the
//! README for the command-line interface.

pub mod config;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod forward;
pub mod gradient;
pub mod io;
pub mod materials;
pub mod mesh;
pub mod objective;
pub mod optimizer;

pub use error::{Error, Result};
