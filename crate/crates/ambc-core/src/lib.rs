//! Link-level simulator and receiver implementation for ambient
//! backscatter communication riding on an LTE-like downlink.
//!
//! A zero-energy device modulates its reflection coefficient with slow
//! square-wave FSK (125 / 500 Hz, 40 ms symbols) on top of a live
//! cellular signal. Because the cell's data traffic is bursty, the
//! receiver ignores wideband power entirely and tracks only the
//! cell-specific reference pilots, which are transmitted every slot no
//! matter what: per-slot least-squares channel estimates form a steady
//! 2 kHz series in which the device's FSK is plainly visible. Frames are
//! 120 bits (a 63-bit maximal-length preamble plus 57 data bits, 4.8 s on
//! air) and are recovered by sliding-window agreement correlation with a
//! 0.8 threshold.
//!
//! The crate provides the bit-domain primitives, the downlink grid and
//! waveform synthesis, the device and channel models, the receiver chain,
//! and a reproducible experiment harness with CSV reporting. Two fidelity
//! modes are supported: `grid` works on resource elements directly and is
//! fast enough for hour-scale Monte-Carlo runs, `waveform` synthesizes
//! and demodulates real OFDM samples; matched seeds make the two
//! comparable element by element.

pub mod bitseq;
pub mod channel;
pub mod error;
pub mod harness;
pub mod keyrand;
pub mod lte;
pub mod receiver;
pub mod selftest;
pub mod zed;

pub use error::{Error, Result};
