//! Closed-form Shapley data valuation for gradient/loss utilities.
//!
//! The utility of a data subset `S` is scored from per-datum last-layer
//! gradients `∇f_i` and losses `l_i` as `||α||² − ||α − mean_{i∈S} x_i||²`
//! with `x_i = l_i·∇f_i` and `α` the dataset mean of the `x_i`. Its Shapley
//! values have a closed form costing `O(n·d)`, which makes valuing every
//! training point once per epoch about as cheap as the epoch itself.
//!
//! * [`shapley`]: exact enumeration, permutation sampling, and the closed form
//! * [`utility`]: the CHG, hardness and gradient subset utilities
//! * [`model`]: linear-softmax models with per-example gradients
//! * [`valuation`]: per-epoch valuation over a training run
//! * [`selection`]: interval-based per-class subset selection
//! * [`experiments`]: synthetic tasks, label noise, evaluation curves
//! * [`report`]: CSV/JSON artifacts

pub mod cli;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod report;
pub mod selection;
pub mod shapley;
pub mod utility;
pub mod valuation;

pub use error::{Error, Result};
pub use linalg::Matrix;
