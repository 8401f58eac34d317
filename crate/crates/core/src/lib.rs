//! Intermittent speech recovery.
//!
//! Simulates speech captured by an energy-harvesting microphone that loses
//! power periodically, then recovers the gap-ridden audio in three stages:
//! spectral interpolation across the gaps, complex-mask enhancement, and a
//! waveform combination that keeps every sample that was actually recorded.

pub mod corpus;
pub mod energy;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod recovery;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use realfft::num_complex::Complex64;
