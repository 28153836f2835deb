//! Windowed training of shift-equivariant convolutional networks on
//! jointly stationary signals.
//!
//! The crate provides four building blocks:
//!
//! * [`signal`]: grid-sampled signals, window operators and generators of
//!   jointly stationary input/output process pairs,
//! * [`net`]: a minimal 1D/2D convolution engine (stride 1, no dilation)
//!   with exact backpropagation,
//! * [`train`]: the windowed loss, a windowed training loop, Monte-Carlo
//!   estimation of the full-signal loss and the generalization-bound
//!   calculator with its verification harness,
//! * [`raster`] / [`mid`]: Gaussian rasterization of 2D point sets,
//!   Lloyd's-algorithm position extraction, and the relay-placement
//!   evaluation built on a path-loss channel model and a minimum spanning
//!   tree power metric.
//!
//! The crate is `no_std` compatible (`alloc` required); all IO, file
//! formats and the CLI live in the companion `winconv` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod error;
pub mod math;
pub mod mid;
pub mod net;
pub mod raster;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
pub use math::{derive_seed, erf, erf_inv, mean_and_stderr, sample_variance_of, SeededRng};
pub use mid::{
    aggregate_width, evaluate_zero_shot, evaluate_zero_shot_with, min_power, mst_mean_edge_power,
    oracle_comm_positions, sample_task_positions, scaled_task_count, zero_shot_trial,
    zero_shot_trial_with, ChannelParams, PowerReport, ScenarioConfig, TrialRecord, WidthRow,
};
pub use net::{
    backward, forward, l1_product, ArchSpec, CNNModel, ConvLayer, Dims, Gradients, Nonlinearity,
    Padding,
};
pub use raster::{
    extract_positions, extract_positions_traced, rasterize, ExtractionConfig, PositionSet,
    RasterConfig,
};
pub use signal::{
    apply_window, empirical_autocovariance, generate_stationary_pair, sample_variance,
    shift_signal, GridSignal, Shape, StationaryPairConfig, WindowSpec,
};
pub use train::{
    estimate_full_loss, theorem_bound, train_windowed, verify_bound, verify_bound_seed,
    windowed_loss, BoundInputs, BoundReport, BoundRow, LossEstimate, Optimizer, OptimizerKind,
    TrainConfig, VerifyConfig,
};
