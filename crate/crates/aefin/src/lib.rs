//! Frequency-aware forecasting for non-stationary multivariate time series.
//!
//! An input window is split into a *stable* part and a *non-stable* part by
//! keeping the top-K dominant frequency bins of each channel. A
//! parameter-free cross-attention layer lets the non-stable part query the
//! stable one; the fused stable signal goes through a linear backbone, while
//! the non-stable signal goes through a Fourier feature head and a trend
//! MLP. The two forecasts are summed, and training balances squared,
//! absolute, and spectral-magnitude error terms.
//!
//! Batched kernels run data-parallel on rayon by default; building with
//! `--no-default-features` swaps in sequential loops with bit-identical
//! results.

pub mod attention;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod heads;
pub mod loss;
pub mod model;
pub mod parallel;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use model::{aefin_forward, AefinModel, ForecastPair, ModelConfig};
pub use tensor::{Mat, SeriesWindow};
