//! Localized orthogonal decomposition for heterogeneous Stokes flow in 2D.
//!
//! The fine scale is a nonconforming Crouzeix-Raviart / P0 discretization on
//! a red-refined triangulation of the unit square. Coarse divergence-free
//! basis functions are computed on patches around coarse interior faces and
//! used in a Galerkin solve with piecewise constant coarse pressures.

#![no_std]

extern crate alloc;

pub mod basis;
pub mod coeffs;
pub mod cr;
pub mod error;
pub mod mesh;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
