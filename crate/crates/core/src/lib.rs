//! Diffuse-interface solvers for the Allen-Cahn equation and FitzHugh-Nagumo
//! type reaction-diffusion systems, their sharp-interface limits, and the
//! measurement harness that compares the two.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geom;
pub mod grid;
pub mod harness;
pub mod interface;
pub mod nonlinearity;
pub mod pde;
pub mod profile;
pub mod quad;
mod schedule;
pub mod sharp;
