//! Desk-scale digital twin of a CBRS spectrum-sharing experiment.
//!
//! The crate synthesizes radar and cellular baseband waveforms, passes them
//! through a constrained FIR multipath emulator, builds labeled IQ datasets
//! and runs a radar detector (CNN or matched filter, followed by majority
//! voting) that drives a base-station vacate/resume loop.
//!
//! Modules, bottom-up:
//!
//! * [`iqcore`]: IQ buffers, `.iq` files, 1024-point windows, FFT and PSD.
//! * [`waveforms`]: radar, OFDM cellular proxy, noise, SNR/SINR mixing.
//! * [`scenario`]: node geometry, path loss, multipath profiles and the
//!   k-means tap approximation.
//! * [`channel`]: FIR emulation, matched-filter correlation, block streaming.
//! * [`dataset`]: labeled record generation, splits and the record file format.
//! * [`detector`]: CNN inference, weights format, vote ring, latency bench.
//! * [`controlplane`]: vacate/resume state machine, KPI proxy, experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod controlplane;
pub mod dataset;
pub mod detector;
pub mod iqcore;
pub mod rng;
pub mod scenario;
pub mod waveforms;

pub use num_complex::{Complex32, Complex64};
