//! Zero-shot Chinese character recognition from stroke- and radical-level
//! decompositions.

#![allow(clippy::needless_range_loop)]

pub mod decomposition;
pub mod dictionary;
pub mod evalharness;
pub mod glyphgen;
pub mod inference;
pub mod nnet;
pub mod seeding;
pub mod trainer;
