//! Pulse-shape binary multiplex (PSBM) modulation: pulse analysis, sequence
//! designs, whitened ML detection, channel estimation and Monte Carlo BER
//! simulation.
//!
//! The 100% roll-off root raised-cosine pulse sent at twice the Nyquist rate
//! has matched-filter taps exactly `(1/2, 1, 1/2)`. [`link`] holds that
//! discrete equivalent model, [`waveform`] the oversampled reference it is
//! checked against.

pub mod ber;
pub mod detection;
pub mod error;
pub mod isi_map;
pub mod link;
pub mod psk;
pub mod pulse;
pub mod quad;
pub mod rng;
pub mod sequences;
pub mod waveform;

pub use error::{Error, Result};
