//! Synthesis and verification of input filters that keep an LTI plant
//! inside a safe set under actuator injection attacks.

// links the system BLAS/LAPACK used by the semidefinite solver
extern crate openblas_src;

pub mod demo;
pub mod ellipsoid;
pub mod filter;
pub mod lmi;
pub mod lti;
pub mod serde_mat;
pub mod synthesis;
pub mod verify;
