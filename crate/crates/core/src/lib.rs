//! Poisson + self-feeding mixture point process ("BuSca") toolkit.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anomaly;
pub mod burst;
pub mod classify;
pub mod disentangle;
pub mod error;
pub mod estimate;
pub mod eval;
pub mod goodness;
pub mod hawkes;
pub mod io;
pub mod likelihood;
pub mod model;
pub mod optim;
pub mod series;
pub mod simulate;
pub mod stats;

pub use error::{BuscaError, Result};
pub use model::{ClassificationResult, Label, LabelAssignment, MixtureFit, MixtureParams, Verdict};
pub use series::{counting_function, validate_series, EventSeries};
