//! VR tracking/render pipeline and the strobed display it drives.
//!
//! Each frame `n` has its V-sync boundary at `v_n = phase + n·T`. The frame's
//! angle is read from the tracking source `render_compute` before its V-sync,
//! passed through the frame-delay queue, and shown `queue_len` frames later
//! for `persistence` ms before the panel goes dark again.

use serde::{Deserialize, Serialize};

use crate::codec::{digits_to_luminance, encode, quantize_angle_saturating, AngleCode, LuminanceVector};
use crate::rig::motion::MotionProfile;
use crate::rig::sensor::PiecewiseLuminance;
use crate::rig::RigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub tracking_delay_ms: f64,
    pub tracking_rate_hz: f64,
    pub frame_delay_queue_len: usize,
    pub refresh_hz: f64,
    pub display_persistence_ms: f64,
    /// Linear prediction horizon applied to the tracked angle.
    pub extrapolation_ms: f64,
    pub render_compute_ms: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tracking_delay_ms: 0.0,
            tracking_rate_hz: 1000.0,
            frame_delay_queue_len: 0,
            refresh_hz: 90.0,
            display_persistence_ms: 1.5,
            extrapolation_ms: 0.0,
            render_compute_ms: 0.0,
        }
    }
}

impl PipelineConfig {
    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.refresh_hz
    }

    /// Delay the frame-delay queue adds on its own.
    pub fn queue_delay_ms(&self) -> f64 {
        self.frame_delay_queue_len as f64 * self.frame_period_ms()
    }

    /// Latency the correlator is expected to report for this pipeline:
    /// tracking + render + queue + half a frame of display hold, less any
    /// prediction. Sampling and strobe alignment add up to about ±2 ms.
    pub fn expected_latency_ms(&self) -> f64 {
        self.tracking_delay_ms + self.render_compute_ms - self.extrapolation_ms
            + self.queue_delay_ms()
            + self.frame_period_ms() / 2.0
    }
}

/// Anything that can say which angle a renderer would read at a true instant.
pub trait AngleSource {
    fn angle_at(&self, t_us: f64) -> Result<f64, RigError>;
}

/// The VR tracking system following the platform: discrete samples at
/// `rate` that become available `delay` after they were taken, optionally
/// extrapolated linearly from the last two samples.
#[derive(Debug, Clone, Copy)]
pub struct TrackedAngle {
    pub motion: MotionProfile<f64>,
    pub interval_us: f64,
    pub phase_us: f64,
    pub delay_us: f64,
    pub extrapolation_us: f64,
}

impl TrackedAngle {
    pub fn new(motion: MotionProfile<f64>, cfg: &PipelineConfig, phase_us: f64) -> Self {
        TrackedAngle {
            motion,
            interval_us: 1e6 / cfg.tracking_rate_hz,
            phase_us,
            delay_us: cfg.tracking_delay_ms * 1000.0,
            extrapolation_us: cfg.extrapolation_ms * 1000.0,
        }
    }

    fn sample(&self, k: i64) -> f64 {
        let t_us = self.phase_us + k as f64 * self.interval_us;
        self.motion.angle_at(t_us / 1000.0)
    }

    /// True time of the newest sample available at `t_us`.
    pub fn latest_sample_time(&self, t_us: f64) -> Result<f64, RigError> {
        let k = self.latest_index(t_us)?;
        Ok(self.phase_us + k as f64 * self.interval_us)
    }

    fn latest_index(&self, t_us: f64) -> Result<i64, RigError> {
        let k = ((t_us - self.delay_us - self.phase_us) / self.interval_us).floor() as i64;
        if k < 1 {
            return Err(RigError::InsufficientHistory { t_ms: t_us / 1000.0 });
        }
        Ok(k)
    }
}

impl AngleSource for TrackedAngle {
    fn angle_at(&self, t_us: f64) -> Result<f64, RigError> {
        let k = self.latest_index(t_us)?;
        let last = self.sample(k);
        if self.extrapolation_us > 0.0 {
            let prev = self.sample(k - 1);
            Ok(last + (last - prev) * self.extrapolation_us / self.interval_us)
        } else {
            Ok(last)
        }
    }
}

/// Codes shown on a contiguous run of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplayTimeline {
    pub phase_us: f64,
    pub period_us: f64,
    pub persistence_us: f64,
    pub first_frame: i64,
    pub codes: Vec<AngleCode>,
}

impl DisplayTimeline {
    pub fn frame_start_us(&self, frame: i64) -> f64 {
        self.phase_us + frame as f64 * self.period_us
    }

    pub fn last_frame(&self) -> i64 {
        self.first_frame + self.codes.len() as i64 - 1
    }

    pub fn code(&self, frame: i64) -> Option<AngleCode> {
        usize::try_from(frame - self.first_frame)
            .ok()
            .and_then(|i| self.codes.get(i).copied())
    }

    /// Frame whose refresh interval contains `t_us`.
    pub fn frame_at(&self, t_us: f64) -> i64 {
        ((t_us - self.phase_us) / self.period_us).floor() as i64
    }

    /// Panel output at `t_us`.
    pub fn emission_at(&self, t_us: f64) -> LuminanceVector<f64> {
        let frame = self.frame_at(t_us);
        match self.code(frame) {
            Some(code) => display_emission(code, self.persistence_us, self.frame_start_us(frame), t_us),
            None => LuminanceVector::dark(),
        }
    }

    /// Forward cursor over the emission, positioned at the frame containing
    /// `t_us`.
    pub fn cursor(&self, t_us: f64) -> EmissionCursor<'_> {
        let frame = self.frame_at(t_us);
        let lit = t_us < self.frame_start_us(frame) + self.persistence_us;
        EmissionCursor { timeline: self, frame, lit }
    }
}

/// The code's luminance while the strobe is on, black otherwise.
pub fn display_emission(
    code: AngleCode,
    persistence_us: f64,
    frame_start_us: f64,
    t_us: f64,
) -> LuminanceVector<f64> {
    if t_us >= frame_start_us && t_us < frame_start_us + persistence_us {
        digits_to_luminance(encode(code))
    } else {
        LuminanceVector::dark()
    }
}

pub struct EmissionCursor<'a> {
    timeline: &'a DisplayTimeline,
    frame: i64,
    lit: bool,
}

impl PiecewiseLuminance<f64> for EmissionCursor<'_> {
    fn level(&self) -> LuminanceVector<f64> {
        match (self.lit, self.timeline.code(self.frame)) {
            (true, Some(code)) => digits_to_luminance(encode(code)),
            _ => LuminanceVector::dark(),
        }
    }

    fn segment_end(&self) -> f64 {
        let start = self.timeline.frame_start_us(self.frame);
        if self.lit {
            start + self.timeline.persistence_us
        } else {
            self.timeline.frame_start_us(self.frame + 1)
        }
    }

    fn next_segment(&mut self) {
        if self.lit {
            self.lit = false;
        } else {
            self.frame += 1;
            self.lit = true;
        }
    }
}

/// Renders frames `first..=last`: frame `n` shows the code rendered for frame
/// `n − queue_len`, whose angle was read `render_compute` before that
/// frame's V-sync.
pub fn pipeline_step(
    cfg: &PipelineConfig,
    source: &dyn AngleSource,
    angle_range_deg: f64,
    vsync_phase_us: f64,
    first_frame: i64,
    last_frame: i64,
) -> Result<DisplayTimeline, RigError> {
    let period_us = 1e6 / cfg.refresh_hz;
    let queue = cfg.frame_delay_queue_len as i64;
    let render_us = cfg.render_compute_ms * 1000.0;
    let codes = (first_frame..=last_frame)
        .map(|frame| {
            let rendered = frame - queue;
            let sample_us = vsync_phase_us + rendered as f64 * period_us - render_us;
            let angle = source.angle_at(sample_us)?;
            Ok(quantize_angle_saturating(angle, angle_range_deg)?)
        })
        .collect::<Result<Vec<_>, RigError>>()?;
    Ok(DisplayTimeline {
        phase_us: vsync_phase_us,
        period_us,
        persistence_us: cfg.display_persistence_ms * 1000.0,
        first_frame,
        codes,
    })
}
