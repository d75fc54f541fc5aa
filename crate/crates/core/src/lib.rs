//! Symbolic scalar ODE recovery toolkit.
//!
//! The crate covers the whole pipeline: sampling symbolic right-hand sides
//! `f` for `y' = f(y)`, solving and quality-checking their trajectories,
//! storing corpora, encoding trajectories as IEEE-754 bit rows and
//! expressions as one-hot/two-hot target rows, training a small
//! encoder-decoder attention model, and benchmarking predicted equations
//! under noise, irregular sampling and extrapolation.
//!
//! Runnable walkthroughs live in `examples/`; the `symode` binary exposes
//! the same pipeline on the command line.

// `!(x > 0.0)` style tests are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod canonicalize;
pub mod cli;
pub mod codec;
pub mod dataset;
pub mod evalbench;
pub mod expr;
pub mod model;
pub mod sampler;
pub mod seed;
pub mod solver;
