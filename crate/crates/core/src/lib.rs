//! Nonlinear second-order cone programming.
//!
//! Problems have the form
//!
//! ```text
//! minimize f(x)  subject to  g_j(x) ∈ L^{m_j},  j = 1..q
//! ```
//!
//! with `L^m = { (y0, ŷ) : y0 >= ‖ŷ‖ }`. The crate provides the cone
//! primitives, a small expression language with forward-mode derivatives,
//! penalty / augmented Lagrangian / SQP solvers, and analyzers for the
//! constraint qualifications used to study their limit points.

pub mod cone;
pub mod expr;
pub mod rank;
pub mod model;
pub mod cq;
pub mod solvers;
pub mod io;
pub mod corpus;
