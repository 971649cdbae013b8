//! Multi-core fiber φ-OFDR simulator and signal-processing library.
//!
//! The crate models a distributed vibration sensor built from a linearly
//! swept narrow-linewidth laser interrogating every core of a multi-core
//! fiber, and implements the processing chain that suppresses coherent
//! (Rayleigh) fading by amplitude-weighted vectorial averaging across cores:
//!
//! ```text
//! fiber  ──►  engine  ──►  dsp  ──►  stats / demod
//! scatterers  beat signal  range compression,   fading statistics,
//! + events    per core     multi-core averaging vibration demodulation
//! ```
//!
//! * [`fiber`] generates per-core scatterer realizations and evaluates the
//!   core-consistent vibration phase response.
//! * [`engine`] synthesizes beat signals (time-domain path) or range-domain
//!   traces directly (fast path), including laser phase noise and receiver
//!   noise.
//! * [`dsp`] performs windowed range compression, intensity averaging and the
//!   amplitude-weighted differential phase.
//! * [`stats`] characterizes fading: contrast, histograms, CDFs against the
//!   gamma-law oracle, and per-block phase variance.
//! * [`demod`] builds time-distance maps, localizes events and extracts
//!   waveform, SNR and length sensitivity.
//! * [`scenario`] ties everything together behind a TOML scenario file, the
//!   preset scenarios, CSV export and the binary trace archive.
//!
//! Runnable walkthroughs live in `examples/`, one per capability.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demod;
pub mod dsp;
pub mod engine;
pub mod error;
pub mod fiber;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
