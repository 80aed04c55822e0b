//! Test support shared by the factaudit crates: reference oracles written
//! independently of the library code, fixed fixtures, hand-traced decoding
//! scripts and random scripted-backend generators.

pub mod fixtures;
pub mod oracles;
pub mod random;
pub mod traces;
