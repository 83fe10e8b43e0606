//! Ratings, disk decompositions and neural sign-exact decompositions of
//! two-player zero-sum games given as antisymmetric payoff matrices.

pub mod cyclic;
pub mod decomposition;
pub mod elo;
pub mod error;
pub mod evaluation;
pub mod game;
pub mod io;
pub mod neural;
pub mod generators;

pub use error::{Error, ErrorClass, Result};
pub use game::{Mask, PayoffMatrix};
