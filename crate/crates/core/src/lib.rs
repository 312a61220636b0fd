//! Finite MDPs with fibered action spaces, their category, zig-zag
//! composition and solvers.

pub mod category;
pub mod gen;
pub mod mdp;
pub mod solve;
mod union_find;
pub mod zigzag;
