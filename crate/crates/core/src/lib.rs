//! Core algorithms for learning two-hop Horn rules from a knowledge graph and
//! ranking them with a hybrid of statistical confidence and a masked
//! language model's reciprocal-rank score.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the HTTP scorer
//! client and the command-line front end live in the `rulelm` crate.
//!
//! Pipeline, bottom-up:
//!
//! * [`kg`]: interned, deduplicated, indexed triple store plus the seeded
//!   per-relation train/test split.
//! * [`rules`]: closed-path rules `h(X,Z) <= p(X,Y), q(Y,Z)`, their support,
//!   standard confidence, PCA confidence and head coverage, and rule
//!   application.
//! * [`cloze`]: verbalizing predictions as masked prompts, the [`cloze::Scorer`]
//!   contract, a fixture-backed scorer, and the per-rule reciprocal-rank score.
//! * [`ranking`]: the hybrid score, deterministic rule ranking, closed-world
//!   prediction precision and the lambda-by-k sweep.
#![no_std]
#![warn(missing_docs)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod cloze;
mod error;
pub mod kg;
pub mod ranking;
pub mod rules;

pub use error::{Error, Result};
