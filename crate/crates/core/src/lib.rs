//! Free-boundary Allen–Cahn numerics: grid fields, a two-mode solver for the
//! harmonic transition layer, level-set geometry, the level-set flow, and
//! checks of the identities and estimates relating them.

pub mod field;
pub mod expr;
pub mod linalg;
pub mod levelset;
pub mod flow;
pub mod solver;
pub mod verify;
