//! Two-stage air/bone cross-domain voice authentication.
//!
//! A spoken command reaches a head-worn device over two channels at once:
//! air conduction (microphone) and bone conduction (contact accelerometer).
//! This crate scores the temporal consistency of the two channels
//! (stage I), recognizes the speaker from the bone-conduction signal alone
//! (stage II), and accepts only when both stages do. It also ships a
//! synthetic air/bone corpus generator and an evaluation harness so the
//! whole pipeline can be exercised without recorded human data.
//!
//! Module map:
//! - [`signal`]: waveforms, filters, resampling, STFT/CQT, Wiener denoising.
//! - [`synth`]: synthetic speaker models, scene/attack rendering, corpora.
//! - [`init`]: bone-conduction extraction and air/bone synchronization.
//! - [`tcs`]: stage-I temporal consistency scoring.
//! - [`bcsr`]: stage-II bone-conduction speaker recognition.
//! - [`eval`]: EER/ROC metrics and experiment protocols.
//! - [`auth`]: pipeline configuration and the end-to-end decision flow.

pub mod auth;
pub mod bcsr;
pub mod error;
pub mod eval;
pub mod init;
pub mod signal;
pub mod synth;
pub mod tcs;

pub use error::{Error, Result};
