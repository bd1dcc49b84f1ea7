//! Initialization: turn raw microphone and accelerometer captures into a
//! clean, rate-matched, time-aligned air/bone pair.
//!
//! The bone signal is pulled off the best accelerometer axis, normalized,
//! band-passed to 20 Hz–2 kHz, Wiener-denoised, and resampled to the
//! pipeline rate. The pair is then synchronized by frame-level
//! cross-correlation: the delays of the first K frames are averaged and
//! the earlier signal is zero-padded by that amount.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::accel::AccelRecord;
use crate::signal::fft::cross_correlation;
use crate::signal::{
    apply_filter, estimate_noise_profile, resample, wiener_denoise, FilterSpec, Waveform,
};
use crate::synth::AirBonePair;

/// Frame-level synchronization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    /// Number of leading frames whose delay estimates are averaged.
    pub num_frames: usize,
    /// Frame length in samples.
    pub frame_length: usize,
    /// Largest |delay| searched, in samples.
    pub search_window: usize,
}

impl Default for SyncConfig {
    /// 8 frames of 256 ms at 8 kHz, searching ±800 samples (±100 ms).
    fn default() -> Self {
        SyncConfig {
            num_frames: 8,
            frame_length: 2048,
            search_window: 800,
        }
    }
}

impl SyncConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 1 {
            return Err(Error::InvalidParameter {
                name: "num_frames",
                reason: "must be >= 1".into(),
            });
        }
        if self.frame_length < 16 {
            return Err(Error::InvalidParameter {
                name: "frame_length",
                reason: "must be >= 16 samples".into(),
            });
        }
        if self.search_window > self.frame_length / 2 {
            return Err(Error::InvalidParameter {
                name: "search_window",
                reason: format!(
                    "{} exceeds half the frame length {}",
                    self.search_window, self.frame_length
                ),
            });
        }
        Ok(())
    }
}

/// Initialization-stage configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    pub target_rate: u32,
    pub highpass_cutoff: f64,
    pub bc_band_max: f64,
    pub sync: SyncConfig,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            target_rate: 8000,
            highpass_cutoff: 20.0,
            bc_band_max: 2000.0,
            sync: SyncConfig::default(),
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_rate == 0 {
            return Err(Error::InvalidSampleRate(self.target_rate));
        }
        if !(self.highpass_cutoff > 0.0
            && self.highpass_cutoff < self.bc_band_max
            && self.bc_band_max < self.target_rate as f64 / 2.0)
        {
            return Err(Error::InvalidParameter {
                name: "highpass_cutoff/bc_band_max",
                reason: format!(
                    "need 0 < {} < {} < {}",
                    self.highpass_cutoff,
                    self.bc_band_max,
                    self.target_rate as f64 / 2.0
                ),
            });
        }
        self.sync.validate()
    }
}

/// Per-axis in-band/out-of-band energy ratio; used to pick the axis that
/// carries the conduction signal.
fn axis_band_score(axis: &Waveform, cfg: &InitConfig) -> Result<f64> {
    let band = apply_filter(
        axis,
        &FilterSpec::bandpass(cfg.highpass_cutoff, cfg.bc_band_max),
    )?;
    let in_band = band.samples().iter().map(|v| v * v).sum::<f64>();
    let total = axis.samples().iter().map(|v| v * v).sum::<f64>();
    Ok(in_band / (total - in_band).max(1e-12))
}

/// Which axis [`preprocess_bc`] would select, exposed for reporting.
pub fn select_axis(raw: &AccelRecord, cfg: &InitConfig) -> Result<usize> {
    if raw.is_empty() {
        return Err(Error::EmptySignal("accelerometer record"));
    }
    if raw.axes.iter().all(|a| a.iter().all(|&v| v == 0.0)) {
        return Err(Error::AllZeroRecord);
    }
    if (raw.sample_rate as f64) < 2.0 * cfg.bc_band_max {
        return Err(Error::InvalidSampleRate(raw.sample_rate));
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for axis in 0..3 {
        let w = raw.axis_waveform(axis)?;
        if w.peak() == 0.0 {
            continue;
        }
        let score = axis_band_score(&w, cfg)?;
        if score > best_score {
            best_score = score;
            best = axis;
        }
    }
    Ok(best)
}

/// Extracts the bone-conduction waveform from a raw triaxial record:
/// best-axis selection, normalization, 20 Hz–2 kHz band-pass, Wiener
/// denoising against the record's own quiet stretches, and resampling to
/// the pipeline rate.
pub fn preprocess_bc(raw: &AccelRecord, cfg: &InitConfig) -> Result<Waveform> {
    cfg.validate()?;
    let axis = select_axis(raw, cfg)?;
    let w = raw.axis_waveform(axis)?.normalize();
    let band = apply_filter(
        &w,
        &FilterSpec::bandpass(cfg.highpass_cutoff, cfg.bc_band_max),
    )?;
    let profile = estimate_noise_profile(&band)?;
    let denoised = wiener_denoise(&band, &profile)?;
    resample(&denoised, cfg.target_rate)
}

/// Estimates how many samples the BC signal leads the AC signal.
///
/// The first K non-overlapping frames are matched over |τ| ≤ search_window
/// using a per-lag normalized cross-correlation (so neither amplitude
/// mismatch nor locally loud stretches bias the argmax). Silent frames are
/// skipped; votes far from the frame consensus are dropped; the rest are
/// averaged and rounded. Positive values mean BC leads.
pub fn estimate_delay(ac: &Waveform, bc: &Waveform, sync: &SyncConfig) -> Result<i64> {
    sync.validate()?;
    if ac.sample_rate() != bc.sample_rate() {
        return Err(Error::SampleRateMismatch {
            left: ac.sample_rate(),
            right: bc.sample_rate(),
        });
    }
    let needed = sync.num_frames * sync.frame_length;
    let usable = ac.len().min(bc.len());
    if usable < needed {
        return Err(Error::SignalTooShort {
            needed,
            got: usable,
        });
    }
    let frame_len = sync.frame_length;
    let search = sync.search_window;

    // Silence gate: frames below 1% of the utterance's mean power carry no
    // usable alignment information.
    let mean_power_ac = crate::signal::stats::mean_power(&ac.samples()[..usable]);
    let mean_power_bc = crate::signal::stats::mean_power(&bc.samples()[..usable]);

    // Votes from frames whose best match is genuinely correlated, and a
    // fallback set from every non-silent frame: uncoupled inputs (say, a
    // false trigger) still need a deterministic alignment so the pair can
    // reach stage I and be rejected there.
    let mut good_votes: Vec<f64> = Vec::with_capacity(sync.num_frames);
    let mut all_votes: Vec<f64> = Vec::with_capacity(sync.num_frames);
    for k in 0..sync.num_frames {
        let start = k * frame_len;
        let ac_frame = &ac.samples()[start..start + frame_len];
        if crate::signal::stats::mean_power(ac_frame) < 0.01 * mean_power_ac
            || crate::signal::stats::mean_power(&bc.samples()[start..start + frame_len])
                < 0.01 * mean_power_bc
        {
            continue;
        }

        // Zero-mean AC frame.
        let mean_a = ac_frame.iter().sum::<f64>() / frame_len as f64;
        let a0: Vec<f64> = ac_frame.iter().map(|v| v - mean_a).collect();
        let norm_a = a0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm_a <= 0.0 {
            continue;
        }

        // BC context padded with zeros to exactly cover every lag window.
        let mut ctx = vec![0.0; frame_len + 2 * search];
        for (j, slot) in ctx.iter_mut().enumerate() {
            let idx = start as i64 - search as i64 + j as i64;
            if idx >= 0 && (idx as usize) < bc.len() {
                *slot = bc.samples()[idx as usize];
            }
        }
        // Prefix sums for sliding window norms.
        let mut p1 = vec![0.0; ctx.len() + 1];
        let mut p2 = vec![0.0; ctx.len() + 1];
        for (j, &v) in ctx.iter().enumerate() {
            p1[j + 1] = p1[j] + v;
            p2[j + 1] = p2[j] + v * v;
        }
        // Raw lagged products against the context via FFT.
        let r = cross_correlation(&a0, &ctx, 2 * search);

        let mut best_tau = 0i64;
        let mut best_ncc = f64::NEG_INFINITY;
        for tau in -(search as i64)..=search as i64 {
            // Window of bc matching the frame at this lag starts at
            // ctx[search - tau]. The raw product sits at lag tau - search.
            let w0 = (search as i64 - tau) as usize;
            let num = r[(tau - search as i64 + 2 * search as i64) as usize];
            let sum_b = p1[w0 + frame_len] - p1[w0];
            let sum_b2 = p2[w0 + frame_len] - p2[w0];
            let var_b = sum_b2 - sum_b * sum_b / frame_len as f64;
            if var_b <= 1e-12 * mean_power_bc * frame_len as f64 {
                continue;
            }
            let ncc = num / (norm_a * var_b.sqrt());
            if ncc > best_ncc {
                best_ncc = ncc;
                best_tau = tau;
            }
        }
        all_votes.push(best_tau as f64);
        if best_ncc >= 0.15 {
            good_votes.push(best_tau as f64);
        }
    }
    if all_votes.is_empty() {
        return Err(Error::AllFramesSilent);
    }
    let positions = if good_votes.is_empty() {
        all_votes
    } else {
        good_votes
    };

    // Drop votes far from the consensus before averaging; a frame locking
    // onto a different (similar-sounding) stretch would otherwise drag the
    // mean arbitrarily.
    let mut sorted = positions.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let keep: Vec<f64> = positions
        .iter()
        .copied()
        .filter(|p| (p - median).abs() <= (search as f64 / 4.0).max(8.0))
        .collect();
    let votes = if keep.is_empty() { positions } else { keep };
    let mean = votes.iter().sum::<f64>() / votes.len() as f64;
    // Round half away from zero so the sign convention stays symmetric.
    Ok(if mean >= 0.0 {
        (mean + 0.5).floor() as i64
    } else {
        (mean - 0.5).ceil() as i64
    })
}

/// Alignment by zero-padding the earlier signal's start. `delay` follows
/// [`estimate_delay`]: positive means BC leads, so BC gets the padding;
/// negative means AC leads. Both outputs are truncated to a common length.
pub fn align(ac: &Waveform, bc: &Waveform, delay: i64) -> Result<(Waveform, Waveform)> {
    let min_len = ac.len().min(bc.len());
    if delay.unsigned_abs() as usize >= min_len {
        return Err(Error::DelayTooLarge {
            delay,
            len: min_len,
        });
    }
    let pad = |w: &Waveform, count: usize| -> Waveform {
        let mut s = vec![0.0; count];
        s.extend_from_slice(w.samples());
        Waveform::from_parts_unchecked(s, w.sample_rate())
    };
    let (ac2, bc2) = if delay >= 0 {
        (ac.clone(), pad(bc, delay as usize))
    } else {
        (pad(ac, (-delay) as usize), bc.clone())
    };
    let common = ac2.len().min(bc2.len());
    Ok((ac2.truncated(common), bc2.truncated(common)))
}

/// Full initialization: resample + denoise the air capture, extract the
/// bone signal, estimate the mutual delay, and align. Errors are labeled
/// with the sub-stage they came from.
pub fn initialize(
    ac_raw: &Waveform,
    bc_raw: &AccelRecord,
    cfg: &InitConfig,
) -> Result<AirBonePair> {
    cfg.validate()?;
    if ac_raw.is_empty() {
        return Err(Error::EmptySignal("ac recording").in_stage("init/ac"));
    }
    let ac = resample(ac_raw, cfg.target_rate).map_err(|e| e.in_stage("init/ac-resample"))?;
    let profile = estimate_noise_profile(&ac).map_err(|e| e.in_stage("init/ac-denoise"))?;
    let ac = wiener_denoise(&ac, &profile).map_err(|e| e.in_stage("init/ac-denoise"))?;

    let bc = preprocess_bc(bc_raw, cfg).map_err(|e| e.in_stage("init/bc"))?;
    initialize_waveforms(&ac, &bc, cfg)
}

/// Synchronization tail of [`initialize`] for signals that are already at
/// the pipeline rate and cleaned (also used on in-memory synthetic pairs).
pub fn initialize_waveforms(ac: &Waveform, bc: &Waveform, cfg: &InitConfig) -> Result<AirBonePair> {
    let delay = estimate_delay(ac, bc, &cfg.sync).map_err(|e| e.in_stage("init/sync-estimate"))?;
    let (ac, bc) = align(ac, bc, delay).map_err(|e| e.in_stage("init/sync-align"))?;
    AirBonePair::unlabeled(ac, bc)
}
