//! Composite finite element / discontinuous Galerkin discretization of
//! `-div(α ∇u) = f` on the unit square with highly varying coefficients, and a
//! FETI-DP preconditioned conjugate gradient solver for it.
//!
//! Each square subdomain carries its own structured triangulation; meshes
//! may be nonmatching across subdomain edges, where the subdomains are
//! coupled by symmetric interior-penalty terms. The pipeline is
//!
//! geometry → coefficient field → local assembly → dof classification →
//! FETI-DP operators → PCG with Lanczos condition estimate.

pub mod assembly;
pub mod coeffield;
pub mod dofspace;
pub mod error;
pub mod experiment;
pub mod fetidp;
pub mod geometry;
pub mod io;
pub mod oracle;
pub mod pcg;
pub mod sparse;
pub mod timing;

pub use error::{Error, Result};
