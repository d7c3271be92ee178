//! Numerical laboratory for finitely generated groups of circle
//! diffeomorphisms.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amalgam;
pub mod circlemap;
pub mod discreteness;
pub mod endsenergy;
pub mod error;
pub mod groupaction;
pub mod jet;
pub mod markov;
pub mod par;
pub mod scenario;
pub mod schreier;
pub mod word;

pub use circlemap::{CircleMap, GeneratorSet, Interval};
pub use error::{Error, Result};
pub use jet::Jet3;
pub use word::{Letter, Word};
