//! Acoustic pulse-wave recovery and atrial fibrillation screening.
//!
//! A smartphone speaker emits an 18 kHz tone; skin displacement at the wrist
//! phase-modulates the echo. This crate synthesizes such recordings, recovers
//! the channel phase response, finds systolic peaks, computes 26 rhythm
//! features and classifies AF vs normal sinus rhythm.

pub mod beats;
pub mod classifier;
pub mod cpr;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod pipeline;
pub mod recording;
pub mod signal;

pub use error::{Error, Result};
pub use recording::{AudioRecording, Label};
