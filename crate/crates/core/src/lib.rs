//! Hierarchical multi-level access codes over GF(2^m): finite fields and
//! Cauchy matrices, double- and triple-level constructions with their
//! decoders, cloud scale-out and split, and a simulated shard store.

// Block matrices are indexed by several parallel cloud indices at once.
#![allow(clippy::needless_range_loop)]

pub mod code;
pub mod config;
pub mod dl;
pub mod dynamics;
pub mod gf;
pub mod layered;
pub mod linalg;
pub mod simstore;
pub mod tl;
