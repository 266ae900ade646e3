//! Applications built on the square-root drivers.

pub mod cg;
pub mod superres;
pub mod thompson;
