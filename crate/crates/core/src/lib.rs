//! Invariant convex bodies for second-order strongly elliptic systems.
//!
//! The crate checks the algebraic conditions under which a convex body is
//! invariant ([`conditions`]), describes the admissible coefficient matrices
//! of each body class ([`structure`]), tests normalized integral transforms
//! ([`transform`]), and solves Dirichlet problems on boxes ([`fd`]) and in a
//! half-space ([`halfspace`]) to audit the statements numerically.

pub mod bodies;
pub mod coefficients;
pub mod conditions;
pub mod error;
pub mod fd;
pub mod halfspace;
pub mod linalg;
pub mod structure;
pub mod transform;

pub use bodies::{ConvexBody, NormalSample};
pub use coefficients::SystemCoefficients;
pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/bodies.md")]
    mod bodies {}
    #[doc = include_str!("../../../book/src/conditions.md")]
    mod conditions {}
    #[doc = include_str!("../../../book/src/structure.md")]
    mod structure {}
    #[doc = include_str!("../../../book/src/transforms.md")]
    mod transforms {}
    #[doc = include_str!("../../../book/src/box_solver.md")]
    mod box_solver {}
    #[doc = include_str!("../../../book/src/halfspace.md")]
    mod halfspace {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
