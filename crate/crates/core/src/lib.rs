//! Simulation laboratory for locality-explicit multi-prover interactive
//! proofs: finite fields, non-local boxes, an execution runtime, and the
//! commitment, sumcheck, zero-knowledge and 3-colouring protocols built on it.

pub mod gf;
mod lp;
pub mod nonlocal;
pub mod runtime;
pub mod commit;
pub mod poly;
pub mod bfl;
pub mod zkmip;
pub mod threecol;
