//! Max-plus decompositions of supermartingales: closed-form index
//! processes, optimal stopping rules, exact lattice decompositions and
//! Monte Carlo verification.
//!
//! A nonnegative supermartingale `Z` of class (D) admits a representation
//! `Z_t = E[ sup_{t <= u} L_u | F_t ]` for an index process `L`; the
//! associated max-plus martingale `M_t = E[ sup_{0 <= u} L_u | F_t ]`
//! dominates `Z`, touches it exactly where the running supremum of `L`
//! increases, and is the convex-order minimal martingale doing so. This
//! crate computes `L` in closed form for the standard models, verifies the
//! decomposition exactly on finite lattices, and checks the continuous-time
//! identities by simulation.

pub mod azema_yor;
pub mod closedform;
pub mod convexorder;
pub mod error;
pub mod lattice;
pub mod model;
mod par;
pub mod rng;
pub mod simulate;
pub mod stopping;
pub mod tol;

pub use error::{Error, Result};
