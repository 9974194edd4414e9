//! Mimetic spectral element solvers for steady advection-diffusion problems
//! with an algebraic variational multiscale (VMS) closure.
//!
//! The crate discretises the 1D problem in direct (`H1`) and mixed
//! (`H(div) x L2`) form and the 2D problem in mixed form, on uniform meshes
//! of `[0,1]^d`. Three solvers share each coarse space:
//!
//! * a plain Galerkin solve,
//! * the optimal projection of the exact solution (requires the exact
//!   solution and acts as the reference the other two are measured against),
//! * the VMS solve, which augments Galerkin with a fine-scale closure built
//!   from the discrete fine-scale Greens' function of the symmetric part of
//!   the operator on a degree-enriched fine space.
//!
//! The [`cli`] module wires the solvers into the `msem-vms` binary.

pub mod analysis;
pub mod assembly;
pub mod cli;
pub(crate) mod error;
pub mod greens;
pub mod mesh_spaces;
pub mod polybasis;
pub mod quadrature;
pub mod vms_solver;

pub use error::{Error, Result};
