//! Buzzer → audio chain → sound detector, measured by interval counting.
//!
//! The controller starts the buzzer together with the capture loop and then
//! polls the detector's digital output once per capture interval. The number
//! of intervals elapsed when it first reads high is the mouth-to-ear latency.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("no detection within {horizon_us} µs")]
    DetectionTimeout { horizon_us: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioPathConfig {
    pub tone_hz: f64,
    /// Latency of the audio chain under test.
    pub path_delay_ms: f64,
    /// Comparator threshold on the rectified signal, in `(0, 1)`.
    pub detector_threshold: f64,
    /// Detector polling rate; shares the capture loop.
    pub sample_hz: f64,
    /// Amplitude reaching the detector relative to the buzzer.
    pub attenuation: f64,
    /// Additive Gaussian noise at the detector input.
    pub noise_sigma: f64,
    /// Give up after this long.
    pub horizon_ms: f64,
}

impl Default for AudioPathConfig {
    fn default() -> Self {
        AudioPathConfig {
            tone_hz: 4000.0,
            path_delay_ms: 0.0,
            detector_threshold: 0.5,
            sample_hz: 1000.0,
            attenuation: 1.0,
            noise_sigma: 0.0,
            horizon_ms: 2000.0,
        }
    }
}

impl AudioPathConfig {
    pub fn interval_us(&self) -> f64 {
        1e6 / self.sample_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MouthToEarResult {
    pub intervals: u64,
    pub latency_ms: u64,
}

impl MouthToEarResult {
    /// `key = value` lines, readable by [`MouthToEarResult::parse`].
    pub fn to_text(&self) -> String {
        format!("intervals = {}\nlatency_ms = {}\n", self.intervals, self.latency_ms)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// PWM square wave: `+1` for the first half of each period, `−1` after.
pub fn buzzer_waveform(cfg: &AudioPathConfig, t_us: f64) -> f64 {
    let period_us = 1e6 / cfg.tone_hz;
    let phase = (t_us / period_us).fract();
    if phase < 0.5 {
        1.0
    } else {
        -1.0
    }
}

/// Signal at the detector, `t_us` after the buzzer was switched on.
pub fn received_waveform(cfg: &AudioPathConfig, t_us: f64) -> f64 {
    let delay_us = cfg.path_delay_ms * 1000.0;
    if t_us < delay_us {
        0.0
    } else {
        cfg.attenuation * buzzer_waveform(cfg, t_us - delay_us)
    }
}

/// Scan resolution for [`detect_first_crossing`].
pub const SCAN_STEP_US: f64 = 1.0;

/// Earliest instant, on a 1 µs grid, at which the rectified `waveform` plus
/// `noise` reaches the detector threshold.
pub fn detect_first_crossing<W, N>(
    cfg: &AudioPathConfig,
    waveform: W,
    mut noise: N,
) -> Result<f64, AudioError>
where
    W: Fn(f64) -> f64,
    N: FnMut() -> f64,
{
    let horizon_us = cfg.horizon_ms * 1000.0;
    let steps = (horizon_us / SCAN_STEP_US).ceil() as u64;
    (0..=steps)
        .map(|i| i as f64 * SCAN_STEP_US)
        .find(|&t| (waveform(t) + noise()).abs() >= cfg.detector_threshold)
        .ok_or(AudioError::DetectionTimeout { horizon_us })
}

/// Mouth-to-ear latency as the controller counts it: the first polling
/// interval at which the detector output is high.
pub fn measure_mouth_to_ear(cfg: &AudioPathConfig, seed: u64) -> Result<MouthToEarResult, AudioError> {
    let mut rng = seeding::stream(seed, seeding::streams::AUDIO);
    let normal = Normal::new(0.0, cfg.noise_sigma.max(0.0)).expect("finite sigma");
    let noisy = cfg.noise_sigma > 0.0;
    let crossing_us = detect_first_crossing(
        cfg,
        |t| received_waveform(cfg, t),
        || if noisy { normal.sample(&mut rng) } else { 0.0 },
    )?;
    let interval_us = cfg.interval_us();
    let intervals = (crossing_us / interval_us).ceil() as u64;
    Ok(MouthToEarResult {
        intervals,
        latency_ms: (intervals as f64 * interval_us / 1000.0).round() as u64,
    })
}
