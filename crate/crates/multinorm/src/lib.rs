//! Desk-scale laboratory for multinormed spaces.
//!
//! Builds finite-dimensional normed structures (symbolic norms, pavings
//! of `ℓ_p^N`, per-level tensor norms), computes injective tensor norms
//! and operator norms with certified estimates, constructs free and
//! well-composed instances, and solves lifting and coisometry problems
//! as finite linear programs.

pub mod jsonx;
pub mod lp;
pub mod norm;
pub mod operator;
pub mod space;
pub mod tensor;
