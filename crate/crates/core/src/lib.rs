//! Canonical energy measures of p-energy forms, built by the cut-and-fold
//! construction on concrete model spaces, together with executable checks of
//! the calculus those measures satisfy.

pub mod construct;
pub mod forms;
pub mod ks;
pub mod laws;
pub mod pl;
pub mod sampler;
