//! Event representations and the brute-force oracle simulator: histograms,
//! streams, intensity-change quantization, accumulation, and the binary
//! event / dense-array file formats.

mod error;
mod grid;
mod histogram;
mod intensity;
pub mod io;
mod stream;

pub use error::{EventError, Result};
pub use grid::{Image, VectorField};
pub use histogram::{
    accumulate_histograms, quantize_change_map, EventHistogram, NEGATIVE, POSITIVE,
};
pub use intensity::{linear_to_log, rgb_to_grayscale, LOG_EPSILON, LUMA_WEIGHTS};
pub use stream::{
    events_to_histogram, oracle_simulate_events, Event, EventStream, Polarity, ReferenceMode,
};

/// Default contrast threshold, in log-intensity units.
pub const DEFAULT_CONTRAST: f64 = 0.2;

/// Concrete 64-bit aliases.
pub type Image64 = Image<f64>;
pub type VectorField64 = VectorField<f64>;
