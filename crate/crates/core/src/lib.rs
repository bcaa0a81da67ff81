// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bridges;
pub mod engine;
pub mod oracles;
pub mod replicas;
pub mod rng;
pub mod selection;
pub mod stats;
