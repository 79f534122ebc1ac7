#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ballwalk;
pub mod chain;
pub mod counterexamples;
pub mod error;
mod flow;
pub mod metric;
pub mod prohorov;
pub mod regime;
pub mod report;

pub use chain::{ChainPair, FiniteMarkovChain};
pub use error::{Error, Result};
pub use metric::{Coupling, Distribution, FiniteMetricSpace, Point};
pub use prohorov::ProhorovResult;
pub use regime::{Regime, RegimeReport};
